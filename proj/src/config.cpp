#include "rso/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

namespace {

namespace fs = std::filesystem;

/// Walks one JSON object, remembering which keys were read so leftovers can
/// be reported as unknown.
class Section {
public:
    Section(const Json& j, std::string path, const EnvLookup& env) : j_(j), path_(std::move(path)), env_(env) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    Section child(const std::string& key) {
        used_.insert(key);
        static const Json empty = Json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, field(key), env_);
    }

    const Json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void get(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        out = interpolate_env(v.get<std::string>(), field(key), env_);
    }

    void get(const std::string& key, std::optional<std::string>& out) {
        if (!has(key)) return;
        std::string s;
        get(key, s);
        out = s;
    }

    void get(const std::string& key, bool& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
        out = v.get<bool>();
    }

    void get(const std::string& key, double& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        out = v.get<double>();
    }

    template <class Int>
        requires std::is_integral_v<Int>
    void get(const std::string& key, Int& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
                throw ConfigError(field(key), "must be non-negative");
            }
        }
        out = v.get<Int>();
    }

    void get(const std::string& key, std::vector<std::string>& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected a list of strings");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError(field(key), "expected a list of strings");
            out.push_back(interpolate_env(e.get<std::string>(), field(key), env_));
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!used_.count(k)) throw ConfigError(field(k), "unknown key");
        }
    }

    const EnvLookup& env() const { return env_; }

private:
    const Json& j_;
    std::string path_;
    const EnvLookup& env_;
    std::set<std::string> used_;
};

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

void resolve(const std::string& base, std::optional<std::string>& p) {
    if (p) p = resolve(base, *p);
}

BackendSpec parse_backend(Section s) {
    BackendSpec b;
    s.get("kind", b.kind);
    s.get("responder", b.responder);
    s.get("reply", b.reply);
    s.get("replies", b.replies);
    s.get("format", b.format);
    s.get("keywords", b.keywords);
    s.get("lo", b.lo);
    s.get("hi", b.hi);
    s.get("accept_one_in", b.accept_one_in);
    s.get("field", b.field);
    s.get("fallback", b.fallback);
    if (s.has("rules")) {
        const auto& rules = s.raw("rules");
        if (!rules.is_array()) throw ConfigError(s.field("rules"), "expected a list of {contains, reply}");
        for (const auto& r : rules) {
            Section rs(r, s.field("rules[]"), s.env());
            mock::Rule rule;
            rs.get("contains", rule.contains);
            rs.get("reply", rule.reply);
            rs.finish();
            b.rules.push_back(std::move(rule));
        }
    }
    auto& r = b.remote;
    s.get("base_url", r.base_url);
    s.get("path", r.path);
    s.get("model", r.model);
    s.get("auth_env", r.auth_env);
    std::string protocol = "chat";
    s.get("protocol", protocol);
    if (protocol == "chat") {
        r.protocol = RemoteConfig::Protocol::ChatCompletions;
    } else if (protocol == "completions") {
        r.protocol = RemoteConfig::Protocol::Completions;
    } else {
        throw ConfigError(s.field("protocol"), "expected chat or completions");
    }
    s.get("temperature", r.temperature);
    s.get("max_tokens", r.max_tokens);
    int timeout_ms = static_cast<int>(r.timeout.count());
    s.get("timeout_ms", timeout_ms);
    r.timeout = std::chrono::milliseconds(timeout_ms);
    s.get("max_retries", r.max_retries);
    int backoff_ms = static_cast<int>(r.retry_backoff.count());
    s.get("retry_backoff_ms", backoff_ms);
    r.retry_backoff = std::chrono::milliseconds(backoff_ms);
    s.finish();
    return b;
}

}  // namespace

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

std::string interpolate_env(const std::string& value, const std::string& field, const EnvLookup& env) {
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (value[i] != '$') {
            out += value[i];
            continue;
        }
        if (i + 1 < value.size() && value[i + 1] == '$') {
            out += '$';
            ++i;
            continue;
        }
        if (i + 1 < value.size() && value[i + 1] == '{') {
            const auto close = value.find('}', i + 2);
            if (close == std::string::npos) throw ConfigError(field, "unterminated ${ in value");
            const auto name = value.substr(i + 2, close - i - 2);
            if (name.empty()) throw ConfigError(field, "empty ${} in value");
            const auto v = env(name);
            if (!v) throw ConfigError(field, "environment variable " + name + " is not set");
            out += *v;
            i = close;
            continue;
        }
        out += '$';
    }
    return out;
}

RunConfig parse_run_config(const Json& j, const std::string& base_dir, const EnvLookup& env) {
    RunConfig c;
    Section root(j, "", env);
    root.get("seed", c.seed);
    root.get("environment", c.environment);

    {
        auto s = root.child("session");
        auto& v = c.session;
        s.get("turn_cap", v.turn_cap);
        s.get("gamma", v.gamma);
        s.get("tau", v.tau);
        s.get("reward_samples", v.reward_samples);
        s.get("top_k", v.top_k);
        s.get("per_entity_cap", v.per_entity_cap);
        std::string mode = "last_user";
        s.get("query_mode", mode);
        if (mode == "last_user") {
            v.query_mode = QueryMode::LastUserUtterance;
        } else if (mode == "full_transcript") {
            v.query_mode = QueryMode::FullTranscript;
        } else {
            throw ConfigError("session.query_mode", "expected last_user or full_transcript");
        }
        s.get("reply_char_limit", v.reply_char_limit);
        s.get("greedy", v.greedy);
        s.get("pinned_context", v.pinned_context);
        s.finish();
    }
    {
        auto s = root.child("training");
        auto& v = c.training;
        s.get("sft_lr", v.sft_lr);
        s.get("rl_lr", v.rl_lr);
        s.get("beta", v.beta);
        s.get("sft_epochs", v.sft_epochs);
        s.get("rl_epochs", v.rl_epochs);
        s.get("episodes_per_epoch", v.episodes_per_epoch);
        s.get("batch_size", v.batch_size);
        s.get("sft_batch_size", v.sft_batch_size);
        s.get("remainder_batches", v.remainder_batches);
        s.get("mean_baseline", v.mean_baseline);
        s.get("optimizer", v.optimizer);
        s.get("workers", v.workers);
        s.get("histogram_buckets", v.histogram_buckets);
        s.finish();
    }
    {
        auto s = root.child("paths");
        auto& v = c.paths;
        s.get("catalog", v.catalog);
        s.get("prompts", v.prompts);
        s.get("kg", v.kg);
        s.get("profiles", v.profiles);
        s.get("index", v.index);
        s.get("corpus", v.corpus);
        std::string schema = "normalized";
        s.get("corpus_schema", schema);
        const auto parsed = parse_schema(schema);
        if (!parsed) throw ConfigError("paths.corpus_schema", "unknown schema '" + schema + "'");
        v.corpus_schema = *parsed;
        s.get("annotation_map", v.annotation_map);
        s.get("checkpoints", v.checkpoints);
        s.get("run_dir", v.run_dir);
        s.finish();
        for (auto* p : {&v.catalog, &v.prompts, &v.kg, &v.profiles, &v.index, &v.corpus, &v.annotation_map}) {
            resolve(base_dir, *p);
        }
        v.checkpoints = resolve(base_dir, v.checkpoints);
        v.run_dir = resolve(base_dir, v.run_dir);
    }
    {
        auto s = root.child("experts");
        c.backends.preference = parse_backend(s.child("preference"));
        c.backends.actor = parse_backend(s.child("actor"));
        c.backends.rewarder = parse_backend(s.child("rewarder"));
        c.backends.user = parse_backend(s.child("user"));
        c.backends.judge = parse_backend(s.child("judge"));
        s.finish();
    }
    {
        auto s = root.child("embedder");
        s.get("kind", c.embedder.kind);
        s.get("dim", c.embedder.dim);
        s.finish();
    }
    {
        auto s = root.child("eval");
        auto& v = c.eval;
        s.get("dialogues", v.dialogues);
        s.get("judge_samples", v.judge_samples);
        s.get("wi", v.wi);
        s.get("cred", v.cred);
        s.get("prs", v.prs);
        s.get("personas", v.personas);
        s.finish();
    }
    {
        auto s = root.child("service");
        auto& v = c.service;
        s.get("bind", v.bind);
        s.get("port", v.port);
        s.get("max_sessions", v.max_sessions);
        s.get("auth_token_env", v.auth_token_env);
        s.get("reply_timeout_ms", v.reply_timeout_ms);
        s.get("debug_strategy", v.debug_strategy);
        s.get("static_dir", v.static_dir);
        s.finish();
        resolve(base_dir, v.static_dir);
    }
    {
        auto s = root.child("bandit");
        s.get("optimal", c.bandit.optimal);
        s.get("gamma", c.bandit.gamma);
        s.get("reward_samples", c.bandit.reward_samples);
        s.finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path, const EnvLookup& env) {
    std::string body;
    try {
        body = read_file(path);
    } catch (const Error&) {
        throw ConfigError("--config", "cannot read " + path);
    }
    const auto j = Json::parse(body, nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("--config", path + " is not valid JSON");
    const auto base = fs::path(path).parent_path().string();
    return parse_run_config(j, base, env);
}

RunConfig default_run_config() {
    RunConfig c;
    const std::string root = RSO_SOURCE_DIR;
    c.paths.kg = root + "/assets/kg/movies.tsv";
    c.paths.profiles = root + "/assets/kg/profiles.tsv";
    c.paths.annotation_map = root + "/assets/annotation_map.tsv";
    c.backends.preference.responder = "keyword_preference";
    c.backends.preference.keywords = {"comedy", "drama", "thriller", "horror", "science fiction", "romance",
                                      "animated", "crime", "classic", "war", "musical", "family"};
    c.backends.actor.responder = "templated";
    c.backends.actor.format = "[{strategy_name}] You might enjoy [[{top_entity}]].";
    c.backends.rewarder.responder = "acceptance_judge";
    c.backends.rewarder.lo = 1;
    c.backends.rewarder.hi = 4;
    c.backends.user.responder = "persona_user";
    c.backends.judge.responder = "random_score";
    c.session.reward_samples = 1;
    return c;
}

void RunConfig::validate() const {
    if (environment != "experts" && environment != "bandit") {
        throw ConfigError("environment", "expected experts or bandit");
    }
    if (session.turn_cap < 1) throw ConfigError("session.turn_cap", "must be >= 1");
    if (!(session.gamma >= 0.0 && session.gamma <= 1.0)) throw ConfigError("session.gamma", "must lie in [0,1]");
    if (!(session.tau >= 0.0 && session.tau <= 1.0)) throw ConfigError("session.tau", "must lie in [0,1]");
    if (session.reward_samples < 1) throw ConfigError("session.reward_samples", "must be >= 1");
    if (session.top_k < 1) throw ConfigError("session.top_k", "must be >= 1");
    if (session.per_entity_cap < 0) throw ConfigError("session.per_entity_cap", "must be >= 0");
    if (session.reply_char_limit < 1) throw ConfigError("session.reply_char_limit", "must be >= 1");
    const auto& t = training;
    if (!(t.sft_lr > 0.0)) throw ConfigError("training.sft_lr", "must be > 0");
    if (!(t.rl_lr > 0.0)) throw ConfigError("training.rl_lr", "must be > 0");
    if (!(t.beta >= 0.0)) throw ConfigError("training.beta", "must be >= 0");
    if (t.sft_epochs < 1) throw ConfigError("training.sft_epochs", "must be >= 1");
    if (t.rl_epochs < 1) throw ConfigError("training.rl_epochs", "must be >= 1");
    if (t.episodes_per_epoch < 1) throw ConfigError("training.episodes_per_epoch", "must be >= 1");
    if (t.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
    if (t.sft_batch_size < 1) throw ConfigError("training.sft_batch_size", "must be >= 1");
    if (t.episodes_per_epoch < t.batch_size && !t.remainder_batches) {
        throw ConfigError("training.episodes_per_epoch", "smaller than batch_size with remainder_batches off");
    }
    if (t.episodes_per_epoch % t.batch_size != 0 && !t.remainder_batches) {
        throw ConfigError("training.batch_size", "does not divide episodes_per_epoch with remainder_batches off");
    }
    if (t.optimizer != "adamw" && t.optimizer != "sgd") throw ConfigError("training.optimizer", "expected adamw or sgd");
    if (t.workers < 1) throw ConfigError("training.workers", "must be >= 1");
    if (t.histogram_buckets < 1) throw ConfigError("training.histogram_buckets", "must be >= 1");
    if (embedder.kind != "hashing") throw ConfigError("embedder.kind", "only hashing is available");
    if (embedder.dim < 1) throw ConfigError("embedder.dim", "must be >= 1");
    if (eval.dialogues < 0) throw ConfigError("eval.dialogues", "must be >= 0");
    if (eval.judge_samples < 1) throw ConfigError("eval.judge_samples", "must be >= 1");
    if (service.port < 0 || service.port > 65535) throw ConfigError("service.port", "must lie in [0,65535]");
    if (service.max_sessions < 1) throw ConfigError("service.max_sessions", "must be >= 1");
    if (service.reply_timeout_ms < 1) throw ConfigError("service.reply_timeout_ms", "must be >= 1");
    if (!StrategyId(bandit.optimal).valid()) throw ConfigError("bandit.optimal", "not a strategy id");
    if (!(bandit.gamma >= 0.0 && bandit.gamma <= 1.0)) throw ConfigError("bandit.gamma", "must lie in [0,1]");
    if (bandit.reward_samples < 1) throw ConfigError("bandit.reward_samples", "must be >= 1");
    const std::pair<const char*, const BackendSpec*> specs[] = {{"experts.preference", &backends.preference},
                                                                {"experts.actor", &backends.actor},
                                                                {"experts.rewarder", &backends.rewarder},
                                                                {"experts.user", &backends.user},
                                                                {"experts.judge", &backends.judge}};
    for (const auto& [name, spec] : specs) {
        if (spec->kind != "mock" && spec->kind != "remote") {
            throw ConfigError(std::string(name) + ".kind", "expected mock or remote");
        }
    }
}

BackendPtr make_backend(const BackendSpec& spec, std::uint64_t seed, const std::string& field) {
    if (spec.kind == "remote") {
        if (spec.remote.base_url.empty()) throw ConfigError(field + ".base_url", "required for remote backends");
        return std::make_shared<RemoteBackend>(spec.remote);
    }
    if (spec.kind != "mock") throw ConfigError(field + ".kind", "expected mock or remote");
    MockBackend::Responder r;
    const auto& name = spec.responder;
    if (name == "constant") {
        r = mock::constant(spec.reply);
    } else if (name == "sequence") {
        if (spec.replies.empty()) throw ConfigError(field + ".replies", "needs at least one reply");
        r = mock::sequence(spec.replies);
    } else if (name == "templated") {
        if (spec.format.empty()) throw ConfigError(field + ".format", "required for templated mocks");
        r = mock::templated(spec.format);
    } else if (name == "keyword_preference") {
        r = mock::keyword_preference(spec.keywords);
    } else if (name == "random_score") {
        if (spec.lo > spec.hi) throw ConfigError(field + ".lo", "greater than hi");
        r = mock::random_score(spec.lo, spec.hi);
    } else if (name == "persona_user") {
        if (spec.accept_one_in < 1) throw ConfigError(field + ".accept_one_in", "must be >= 1");
        r = mock::persona_user(spec.accept_one_in);
    } else if (name == "acceptance_judge") {
        if (spec.lo > spec.hi) throw ConfigError(field + ".lo", "greater than hi");
        r = mock::acceptance_judge(spec.lo, spec.hi);
    } else if (name == "rules") {
        r = mock::rules(spec.field, spec.rules, spec.fallback);
    } else {
        throw ConfigError(field + ".responder", "unknown mock responder '" + name + "'");
    }
    auto b = std::make_shared<MockBackend>(std::move(r), seed);
    b->keep_requests(false);
    return b;
}

Runtime build_runtime(RunConfig config) {
    config.validate();
    Runtime rt;
    const auto& p = config.paths;
    const auto seed = config.seed;

    if (config.environment == "bandit") {
        rt.session = make_bandit_config(BanditOptions{StrategyId(config.bandit.optimal), config.session.turn_cap,
                                                      config.bandit.gamma, config.session.tau,
                                                      config.bandit.reward_samples, seed});
        rt.config = std::move(config);
        return rt;
    }

    auto& s = rt.session;
    s.turn_cap = config.session.turn_cap;
    s.gamma = config.session.gamma;
    s.tau = config.session.tau;
    s.reward_samples = config.session.reward_samples;
    s.top_k = config.session.top_k;
    s.per_entity_cap = config.session.per_entity_cap;
    s.query_mode = config.session.query_mode;
    s.reply_char_limit = config.session.reply_char_limit;
    s.greedy = config.session.greedy;
    s.pinned_context = config.session.pinned_context;
    s.rng_seed = seed;

    s.catalog = std::make_shared<StrategyCatalog>(p.catalog ? load_catalog(*p.catalog) : catalog_default());
    s.prompts = std::make_shared<PromptLibrary>(p.prompts ? PromptLibrary::from_directory(*p.prompts)
                                                          : PromptLibrary::defaults());
    if (p.kg) {
        if (!fs::exists(*p.kg)) throw ConfigError("paths.kg", "file not found: " + *p.kg);
        s.graph = std::make_shared<KnowledgeGraph>(KnowledgeGraph::load(*p.kg));
    }
    auto embedder = std::make_shared<HashingEmbedder>(config.embedder.dim);
    s.embedder = embedder;
    if (p.index && fs::exists(*p.index)) {
        s.index = std::make_shared<EntityIndex>(EntityIndex::load(*p.index, *embedder));
    } else if (p.profiles) {
        if (!fs::exists(*p.profiles)) throw ConfigError("paths.profiles", "file not found: " + *p.profiles);
        s.index = std::make_shared<EntityIndex>(EntityIndex::build(EntityIndex::load_profiles(*p.profiles), *embedder));
    } else if (p.index) {
        throw ConfigError("paths.index", "file not found: " + *p.index);
    }
    if (s.index) {
        for (const auto& e : s.index->entries()) rt.items.push_back(e.name);
    }

    // distinct stream per expert so mocks sharing a responder do not correlate
    s.experts.preference = make_backend(config.backends.preference, derive_seed(seed, 1), "experts.preference");
    s.experts.actor = make_backend(config.backends.actor, derive_seed(seed, 2), "experts.actor");
    s.experts.rewarder = make_backend(config.backends.rewarder, derive_seed(seed, 3), "experts.rewarder");
    rt.user_backend = make_backend(config.backends.user, derive_seed(seed, 4), "experts.user");
    rt.judge_backend = make_backend(config.backends.judge, derive_seed(seed, 5), "experts.judge");

    const auto users = rt.user_backend;
    const auto prompts = s.prompts;
    const auto personas = config.eval.personas;
    const auto items = rt.items;
    s.users = [users, prompts, personas, items](std::uint64_t episode_seed) -> std::unique_ptr<UserAgent> {
        Rng rng(derive_seed(episode_seed, 0x05E5));
        std::string persona = personas.empty() ? std::string() : personas[rng.below(personas.size())];
        std::optional<std::string> target;
        if (!items.empty()) target = items[rng.below(items.size())];
        return std::make_unique<SimulatedUser>(users, prompts, std::move(persona), std::move(target),
                                               std::string("Hi! Can you recommend a movie for tonight?"));
    };
    rt.config = std::move(config);
    rt.session.validate();
    return rt;
}

TrainingOptions Runtime::training_options() const {
    TrainingOptions o;
    const auto& t = config.training;
    o.episodes = t.episodes_per_epoch;
    o.batch_size = t.batch_size;
    o.alpha = t.rl_lr;
    o.beta = t.beta;
    o.mean_baseline = t.mean_baseline;
    o.optimizer = t.optimizer == "sgd" ? OptimizerConfig::sgd() : OptimizerConfig{};
    o.histogram_buckets = t.histogram_buckets;
    o.workers = t.workers;
    return o;
}

SftOptions Runtime::sft_options() const {
    SftOptions o;
    const auto& t = config.training;
    o.epochs = t.sft_epochs;
    o.lr = t.sft_lr;
    o.batch_size = t.sft_batch_size;
    o.seed = config.seed;
    o.turn_cap = config.session.turn_cap;
    o.optimizer = t.optimizer == "sgd" ? OptimizerConfig::sgd() : OptimizerConfig{};
    return o;
}

BanditOptions Runtime::bandit_options() const {
    return BanditOptions{StrategyId(config.bandit.optimal), config.session.turn_cap, config.bandit.gamma,
                         config.session.tau, config.bandit.reward_samples, config.seed};
}

JudgeOptions Runtime::judge_options() const {
    JudgeOptions j;
    j.judge = judge_backend;
    j.samples = config.eval.judge_samples;
    j.wi = config.eval.wi;
    j.cred = config.eval.cred;
    j.prs = config.eval.prs;
    return j;
}

CaseUserFactory Runtime::case_users() const {
    if (config.environment == "bandit") {
        const auto factory = session.users;
        return [factory](const EvalCase&, std::uint64_t seed) { return factory(seed); };
    }
    const auto base = simulated_users(user_backend, session.prompts);
    const auto personas = config.eval.personas;
    return [base, personas](const EvalCase& c, std::uint64_t seed) {
        if (!c.persona.empty() || personas.empty()) return base(c, seed);
        EvalCase with = c;
        with.persona = personas[Rng(derive_seed(seed, 0x05E5)).below(personas.size())];
        return base(with, seed);
    };
}

std::string Runtime::layout_version() const { return session.features.layout_version(); }

}  // namespace rso
