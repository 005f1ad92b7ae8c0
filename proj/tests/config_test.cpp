#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "rso/config.hpp"
#include "rso/error.hpp"

namespace fs = std::filesystem;
using namespace rso;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

std::string field_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

const std::string kConfigs = std::string(RSO_SOURCE_DIR) + "/configs";

}  // namespace

TEST(Interpolation, SubstitutesVariablesAndEscapes) {
    const auto env = fake_env({{"HOST", "example.org"}, {"PORT", "81"}});
    EXPECT_EQ(interpolate_env("http://${HOST}:${PORT}/v1", "x", env), "http://example.org:81/v1");
    EXPECT_EQ(interpolate_env("cost $$5", "x", env), "cost $5");
    EXPECT_EQ(interpolate_env("plain $HOST", "x", env), "plain $HOST");
    EXPECT_EQ(field_of([&] { interpolate_env("${MISSING}", "experts.actor.base_url", env); }),
              "experts.actor.base_url");
}

TEST(ParseConfig, UnknownKeysNameTheirField) {
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"sesion", Json::object()}}, "."); }), "sesion");
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"session", {{"turn_cap", 3}, {"gama", 0.5}}}}, "."); }),
              "session.gama");
    EXPECT_EQ(field_of([] {
                  parse_run_config(Json{{"experts", {{"actor", {{"responder", "constant"}, {"temprature", 1}}}}}},
                                   ".");
              }),
              "experts.actor.temprature");
}

TEST(ParseConfig, TypeAndRangeErrorsNameTheirField) {
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"session", {{"turn_cap", "ten"}}}}, "."); }), "session.turn_cap");
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"session", {{"turn_cap", 0}}}}, "."); }), "session.turn_cap");
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"environment", "arcade"}}, "."); }), "environment");
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"training", {{"optimizer", "lion"}}}}, "."); }),
              "training.optimizer");
    EXPECT_EQ(field_of([] { parse_run_config(Json{{"paths", {{"corpus_schema", "csv"}}}}, "."); }),
              "paths.corpus_schema");
}

TEST(ParseConfig, RelativePathsResolveAgainstConfigDirectory) {
    const auto c = parse_run_config(Json{{"paths", {{"kg", "kg.tsv"}, {"profiles", "/abs/p.tsv"}}}}, "/etc/rso");
    EXPECT_EQ(fs::path(*c.paths.kg), fs::path("/etc/rso/kg.tsv"));
    EXPECT_EQ(*c.paths.profiles, "/abs/p.tsv");
    EXPECT_EQ(fs::path(c.paths.run_dir), fs::path("/etc/rso/runs/latest"));
}

TEST(ParseConfig, DefaultsMatchDocumentedValues) {
    const auto c = parse_run_config(Json::object(), ".");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.session.turn_cap, 10);
    EXPECT_DOUBLE_EQ(c.session.gamma, 0.99);
    EXPECT_DOUBLE_EQ(c.session.tau, 0.8);
    EXPECT_EQ(c.session.reward_samples, 10);
    EXPECT_DOUBLE_EQ(c.training.sft_lr, 6e-6);
    EXPECT_DOUBLE_EQ(c.training.rl_lr, 1e-4);
    EXPECT_EQ(c.training.batch_size, 16);
    EXPECT_EQ(c.training.episodes_per_epoch, 100);
}

TEST(BundledConfigs, MockAndBanditLoadAndBuild) {
    const auto mock = load_run_config(kConfigs + "/mock.json");
    EXPECT_EQ(mock.environment, "experts");
    EXPECT_TRUE(fs::exists(*mock.paths.kg));
    const auto rt = build_runtime(mock);
    EXPECT_FALSE(rt.items.empty());
    EXPECT_NE(rt.session.index, nullptr);

    const auto bandit = load_run_config(kConfigs + "/bandit.json");
    EXPECT_EQ(bandit.environment, "bandit");
    EXPECT_TRUE(bandit.training.mean_baseline);
    EXPECT_DOUBLE_EQ(bandit.bandit.gamma, 0.5);
    EXPECT_NO_THROW(build_runtime(bandit));
}

TEST(BundledConfigs, RemoteExampleNeedsItsEnvironment) {
    const auto path = kConfigs + "/remote.example.json";
    EXPECT_EQ(field_of([&] { load_run_config(path, fake_env({})); }), "paths.corpus");
    const auto c = load_run_config(
        path, fake_env({{"RSO_CORPUS", "/data/inspired.tsv"}, {"LLM_BASE_URL", "http://llm:8000"}, {"LLM_MODEL", "m"}}));
    EXPECT_EQ(*c.paths.corpus, "/data/inspired.tsv");
    EXPECT_EQ(c.backends.actor.kind, "remote");
    EXPECT_EQ(c.backends.actor.remote.base_url, "http://llm:8000");
    EXPECT_EQ(c.service.auth_token_env, "RSO_SERVICE_TOKEN");
}

TEST(LoadConfig, UnreadableOrInvalidFileIsAConfigError) {
    EXPECT_EQ(field_of([] { load_run_config("/definitely/not/here.json"); }), "--config");
    const auto tmp = fs::temp_directory_path() / "rso_bad_config.json";
    {
        std::ofstream(tmp) << "{ not json";
    }
    EXPECT_EQ(field_of([&] { load_run_config(tmp.string()); }), "--config");
    fs::remove(tmp);
}

TEST(BuildRuntime, MissingGraphFileNamesPathsKg) {
    auto c = default_run_config();
    c.paths.kg = "/definitely/not/here.tsv";
    EXPECT_EQ(field_of([&] { build_runtime(c); }), "paths.kg");
}

TEST(BuildRuntime, UnknownMockResponderNamesTheExpert) {
    auto c = default_run_config();
    c.backends.rewarder.responder = "psychic";
    EXPECT_EQ(field_of([&] { build_runtime(c); }).rfind("experts.rewarder", 0), 0u);
}
