#pragma once

// Run configuration: one JSON file drives training, evaluation, simulation
// and the service. String values may reference environment variables as
// ${NAME}; relative paths resolve against the config file's directory.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rso/backend.hpp"
#include "rso/corpus.hpp"
#include "rso/evaluation.hpp"
#include "rso/records.hpp"
#include "rso/session.hpp"

namespace rso {

/// `kind` is "mock" or "remote". Mock responders: constant, sequence,
/// templated, keyword_preference, random_score, persona_user,
/// acceptance_judge, rules.
struct BackendSpec {
    std::string kind = "mock";
    std::string responder;
    std::string reply;
    std::vector<std::string> replies;
    std::string format;
    std::vector<std::string> keywords;
    int lo = 1;
    int hi = 5;
    int accept_one_in = 4;
    std::string field;
    std::vector<mock::Rule> rules;
    std::string fallback;
    RemoteConfig remote;
};

struct SessionSettings {
    int turn_cap = 10;
    double gamma = 0.99;
    double tau = 0.8;
    int reward_samples = 10;
    int top_k = 5;
    int per_entity_cap = 8;
    QueryMode query_mode = QueryMode::LastUserUtterance;
    std::size_t reply_char_limit = 600;
    bool greedy = false;
    std::optional<std::string> pinned_context;
};

struct TrainingSettings {
    double sft_lr = 6e-6;
    double rl_lr = 1e-4;
    double beta = 0.0;
    int sft_epochs = 10;
    int rl_epochs = 10;
    int episodes_per_epoch = 100;
    int batch_size = 16;
    int sft_batch_size = 16;
    /// Allows episodes_per_epoch < batch_size (one short batch per epoch).
    bool remainder_batches = true;
    bool mean_baseline = false;
    std::string optimizer = "adamw";
    int workers = 1;
    int histogram_buckets = 5;
};

struct PathSettings {
    std::optional<std::string> catalog;
    /// Compiled-in prompts when unset.
    std::optional<std::string> prompts;
    std::optional<std::string> kg;
    std::optional<std::string> profiles;
    std::optional<std::string> index;
    std::optional<std::string> corpus;
    CorpusSchema corpus_schema = CorpusSchema::Normalized;
    std::optional<std::string> annotation_map;
    std::string checkpoints = "runs/checkpoints";
    std::string run_dir = "runs/latest";
};

struct BackendSettings {
    BackendSpec preference;
    BackendSpec actor;
    BackendSpec rewarder;
    BackendSpec user;
    BackendSpec judge;
};

struct EmbedderSettings {
    std::string kind = "hashing";
    std::size_t dim = 256;
};

struct EvalSettings {
    /// 0 means every corpus dialogue.
    int dialogues = 0;
    int judge_samples = 1;
    bool wi = true;
    bool cred = true;
    bool prs = true;
    std::vector<std::string> personas;
};

struct ServiceSettings {
    std::string bind = "127.0.0.1";
    int port = 8080;
    int max_sessions = 16;
    /// Environment variable holding the bearer token; no auth when empty.
    std::string auth_token_env;
    int reply_timeout_ms = 15 * 60 * 1000;
    /// Include strategy_name in chat messages.
    bool debug_strategy = false;
    std::optional<std::string> static_dir;
};

struct BanditSettings {
    int optimal = 0;
    double gamma = 0.5;
    int reward_samples = 1;
};

struct RunConfig {
    std::uint64_t seed = 7;
    /// "experts" (prompted experts and simulated users) or "bandit".
    std::string environment = "experts";
    SessionSettings session;
    TrainingSettings training;
    PathSettings paths;
    BackendSettings backends;
    EmbedderSettings embedder;
    EvalSettings eval;
    ServiceSettings service;
    BanditSettings bandit;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
EnvLookup process_env();

/// Replaces ${NAME} with its value; `$$` is a literal '$'. Throws ConfigError
/// naming `field` when a variable is unset.
std::string interpolate_env(const std::string& value, const std::string& field, const EnvLookup& env);

/// Unknown keys are errors. Relative paths are joined to `base_dir`.
RunConfig parse_run_config(const Json& j, const std::string& base_dir, const EnvLookup& env = process_env());
RunConfig load_run_config(const std::string& path, const EnvLookup& env = process_env());

/// Defaults with the bundled assets, for running without a file.
RunConfig default_run_config();

BackendPtr make_backend(const BackendSpec& spec, std::uint64_t seed, const std::string& field);

/// Everything a run needs, loaded and checked.
struct Runtime {
    RunConfig config;
    SessionConfig session;
    BackendPtr user_backend;
    BackendPtr judge_backend;
    /// Names of indexed entities, used to give training users a target.
    std::vector<std::string> items;

    TrainingOptions training_options() const;
    SftOptions sft_options() const;
    BanditOptions bandit_options() const;
    JudgeOptions judge_options() const;
    CaseUserFactory case_users() const;
    std::string layout_version() const;
};

/// Loads assets and builds backends. With `seed`, overrides config.seed.
Runtime build_runtime(RunConfig config);

}  // namespace rso
