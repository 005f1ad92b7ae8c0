// Command-line front end: corpus generation, index building, SFT and RL
// training, evaluation, simulation and the live chat service.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "rso/config.hpp"
#include "rso/corpus.hpp"
#include "rso/error.hpp"
#include "rso/evaluation.hpp"
#include "rso/records.hpp"
#include "rso/service.hpp"
#include "rso/session.hpp"

namespace fs = std::filesystem;
using namespace rso;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> corpus;
    std::optional<std::string> kg;
    std::optional<std::string> profiles;
    std::optional<std::string> index;
    std::optional<std::string> prompts;
    std::optional<std::string> run_dir;
    std::optional<std::string> checkpoints;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run config (JSON)");
    cmd->add_option("--seed", c.seed, "Overrides the config seed");
    cmd->add_option("--corpus", c.corpus, "Overrides paths.corpus");
    cmd->add_option("--kg", c.kg, "Overrides paths.kg");
    cmd->add_option("--profiles", c.profiles, "Overrides paths.profiles");
    cmd->add_option("--index", c.index, "Overrides paths.index");
    cmd->add_option("--prompts", c.prompts, "Overrides paths.prompts");
    cmd->add_option("--run-dir", c.run_dir, "Overrides paths.run_dir");
    cmd->add_option("--checkpoint-dir", c.checkpoints, "Overrides paths.checkpoints");
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? default_run_config() : load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.corpus) cfg.paths.corpus = *c.corpus;
    if (c.kg) cfg.paths.kg = *c.kg;
    if (c.profiles) cfg.paths.profiles = *c.profiles;
    if (c.index) cfg.paths.index = *c.index;
    if (c.prompts) cfg.paths.prompts = *c.prompts;
    if (c.run_dir) cfg.paths.run_dir = *c.run_dir;
    if (c.checkpoints) cfg.paths.checkpoints = *c.checkpoints;
    cfg.validate();
    return cfg;
}

void log(const std::string& cmd, const std::string& msg) { std::cerr << "[" << cmd << "] " << msg << "\n"; }

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated checkpoint behind.
void save_checkpoint_atomic(const PolicyParams& params, const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const auto tmp = path + ".tmp";
    save_checkpoint(params, tmp);
    fs::rename(tmp, p);
}

std::string jsonl(const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

std::vector<RawDialogue> load_required_corpus(const RunConfig& cfg, const char* command) {
    if (!cfg.paths.corpus) throw ConfigError("paths.corpus", std::string("required for ") + command);
    if (!fs::exists(*cfg.paths.corpus)) throw ConfigError("paths.corpus", "file not found: " + *cfg.paths.corpus);
    auto r = load_corpus(*cfg.paths.corpus, cfg.paths.corpus_schema);
    for (const auto& d : r.diagnostics) log(command, "skipped " + d);
    log(command, "loaded " + std::to_string(r.dialogues.size()) + " dialogues (" + std::to_string(r.skipped_records) +
                     "/" + std::to_string(r.total_records) + " records skipped)");
    return std::move(r.dialogues);
}

PolicyParams load_policy(const Runtime& rt, const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("--checkpoint", "file not found: " + path);
    return load_checkpoint(path, rt.layout_version());
}

// ---------------------------------------------------------------- commands

int gen_corpus(const Common& common, std::string out, std::string manifest, int dialogues) {
    const auto cfg = resolve_config(common);
    if (dialogues < 1) throw ConfigError("--dialogues", "must be >= 1");
    if (out.empty()) out = in_dir(cfg.paths.run_dir, "corpus.jsonl");
    if (manifest.empty()) manifest = fs::path(out).replace_extension(".manifest.json").string();
    SyntheticOptions opt;
    opt.seed = cfg.seed;
    opt.dialogues = dialogues;
    const auto corpus = generate_synthetic_corpus(opt);
    write_file(out, serialize_normalized(corpus.dialogues));
    write_file(manifest, manifest_to_json(corpus.manifest, catalog_default()).dump(2) + "\n");
    log("gen-corpus", "wrote " + std::to_string(corpus.manifest.dialogues) + " dialogues, " +
                          std::to_string(corpus.manifest.utterances) + " utterances to " + out);
    return 0;
}

int build_index(const Common& common, std::string out) {
    const auto cfg = resolve_config(common);
    if (!cfg.paths.profiles) throw ConfigError("paths.profiles", "required for build-index");
    if (!fs::exists(*cfg.paths.profiles)) throw ConfigError("paths.profiles", "file not found: " + *cfg.paths.profiles);
    if (out.empty()) out = cfg.paths.index.value_or(in_dir(cfg.paths.run_dir, "entities.idx"));
    const HashingEmbedder embedder(cfg.embedder.dim);
    const auto index = EntityIndex::build(EntityIndex::load_profiles(*cfg.paths.profiles), embedder);
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    index.save(out);
    log("build-index", "indexed " + std::to_string(index.entries().size()) + " entities into " + out);
    return 0;
}

int train_sft(const Common& common, std::string out) {
    const auto cfg = resolve_config(common);
    const auto rt = build_runtime(cfg);
    std::vector<SftPair> pairs;
    if (cfg.environment == "bandit" && !cfg.paths.corpus) {
        pairs = bandit_sft_corpus(rt.bandit_options(), 64);
    } else {
        const auto dialogues = load_required_corpus(cfg, "train-sft");
        const auto labels = cfg.paths.annotation_map ? AnnotationMap::load(*cfg.paths.annotation_map) : AnnotationMap{};
        auto x = extract_sft_pairs(dialogues, *rt.session.catalog, labels);
        for (const auto& u : x.unmapped) log("train-sft", "unmapped annotation: " + u);
        pairs = std::move(x.pairs);
    }
    if (pairs.empty()) throw ConfigError("paths.corpus", "no SFT pairs could be extracted");
    log("train-sft", std::to_string(pairs.size()) + " SFT pairs");

    const auto& features = rt.session.features;
    const auto result = run_sft(PolicyParams(features.dim(), features.layout_version()), pairs, features, rt.sft_options());
    std::vector<Json> rows;
    for (const auto& e : result.epochs) {
        rows.push_back(sft_stats_to_json(e));
        log("train-sft", "epoch " + std::to_string(e.epoch) + " loss " + format_number(e.mean_loss) + " accuracy " +
                             format_number(e.accuracy));
    }
    if (out.empty()) out = in_dir(cfg.paths.checkpoints, "sft.ckpt");
    save_checkpoint_atomic(result.params, out);
    write_file(in_dir(cfg.paths.run_dir, "sft_log.jsonl"), jsonl(rows));
    log("train-sft", "checkpoint " + out);
    std::cout << out << "\n";
    return 0;
}

struct RlArgs {
    std::string init;
    bool from_zero = false;
    bool resume = false;
    std::string out;
    std::optional<int> epochs;
    std::optional<double> beta;
    std::optional<int> stop_after;
};

int train_rl(const Common& common, const RlArgs& args) {
    auto cfg = resolve_config(common);
    if (args.epochs) cfg.training.rl_epochs = *args.epochs;
    if (args.beta) cfg.training.beta = *args.beta;
    cfg.validate();
    const auto rt = build_runtime(cfg);
    const auto& ckdir = cfg.paths.checkpoints;
    const auto state_path = in_dir(ckdir, "rl_state.json");

    PolicyParams params;
    int first_epoch = 1;
    if (args.resume && fs::exists(state_path)) {
        const auto st = Json::parse(read_file(state_path));
        first_epoch = st.at("next_epoch").get<int>();
        params = load_policy(rt, st.at("checkpoint").get<std::string>());
        log("train-rl", "resuming at epoch " + std::to_string(first_epoch));
    } else if (!args.init.empty()) {
        params = load_policy(rt, args.init);
    } else if (args.from_zero) {
        params = PolicyParams(rt.session.features.dim(), rt.layout_version());
        log("train-rl", "starting from zero weights");
    } else {
        throw ConfigError("--init", "pass a checkpoint, --from-zero or --resume");
    }

    const auto options = rt.training_options();
    const bool bandit = cfg.environment == "bandit";
    int ran = 0;
    for (int epoch = first_epoch; epoch <= cfg.training.rl_epochs; ++epoch) {
        if (args.stop_after && ran >= *args.stop_after) {
            log("train-rl", "stopping early as requested");
            return 0;
        }
        auto result = run_training_epoch(rt.session, params, options, epoch);
        params = std::move(result.params);
        auto row = epoch_stats_to_json(result.stats, *rt.session.catalog);
        if (bandit) row["p_optimal"] = bandit_optimal_probability(params, rt.bandit_options());
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d", epoch);
        write_file(in_dir(cfg.paths.run_dir, std::string("rl_") + name + ".json"), row.dump() + "\n");
        write_file(in_dir(cfg.paths.run_dir, std::string("histogram_") + name + ".tsv"),
                   histogram_tsv(result.stats.histogram, *rt.session.catalog));
        const auto ck = in_dir(ckdir, std::string("rl_") + name + ".ckpt");
        save_checkpoint_atomic(params, ck);
        write_file(state_path, Json{{"next_epoch", epoch + 1}, {"checkpoint", ck}}.dump() + "\n");
        log("train-rl", "epoch " + std::to_string(epoch) + " return " + format_number(result.stats.mean_return) +
                            " accept " + format_number(result.stats.acceptance_rate) + " entropy " +
                            format_number(result.stats.mean_entropy) +
                            (bandit ? " p_optimal " + format_number(row["p_optimal"].get<double>()) : ""));
        ++ran;
    }

    std::vector<Json> rows;
    for (int epoch = 1; epoch <= cfg.training.rl_epochs; ++epoch) {
        char name[32];
        std::snprintf(name, sizeof name, "rl_epoch_%03d.json", epoch);
        const auto p = in_dir(cfg.paths.run_dir, name);
        if (fs::exists(p)) rows.push_back(Json::parse(read_file(p)));
    }
    write_file(in_dir(cfg.paths.run_dir, "rl_epochs.jsonl"), jsonl(rows));
    const auto out = args.out.empty() ? in_dir(ckdir, "rl.ckpt") : args.out;
    save_checkpoint_atomic(params, out);
    log("train-rl", "checkpoint " + out);
    std::cout << out << "\n";
    return 0;
}

int eval_cmd(const Common& common, const std::string& checkpoint, const std::string& replay, std::string out_dir) {
    const auto cfg = resolve_config(common);
    const auto rt = build_runtime(cfg);
    if (out_dir.empty()) out_dir = cfg.paths.run_dir;
    std::vector<EvalRecord> records;
    std::vector<Json> sessions;
    std::vector<Trajectory> trajectories;

    if (!replay.empty()) {
        if (!fs::exists(replay)) throw ConfigError("--log", "file not found: " + replay);
        const auto logged = load_session_log(replay);
        if (logged.empty()) throw ConfigError("--log", "no sessions in " + replay);
        std::vector<Episode> episodes;
        std::vector<std::optional<std::string>> gold;
        for (const auto& l : logged) {
            episodes.push_back(l.episode);
            gold.push_back(l.gold_item);
            trajectories.push_back(l.episode.trajectory);
        }
        records = evaluate_logged(episodes, gold, rt.session, rt.judge_options());
    } else {
        if (checkpoint.empty()) throw ConfigError("--checkpoint", "required unless --log is given");
        const auto params = load_policy(rt, checkpoint);
        std::vector<EvalCase> cases;
        if (cfg.paths.corpus) {
            cases = cases_from_corpus(load_required_corpus(cfg, "eval"));
        } else {
            SyntheticOptions opt;
            opt.seed = derive_seed(cfg.seed, 0xE7A1);
            opt.dialogues = cfg.eval.dialogues > 0 ? cfg.eval.dialogues : 20;
            cases = cases_from_corpus(generate_synthetic_corpus(opt).dialogues);
        }
        if (cfg.eval.dialogues > 0 && static_cast<int>(cases.size()) > cfg.eval.dialogues) {
            cases.resize(static_cast<std::size_t>(cfg.eval.dialogues));
        }
        auto judges = rt.judge_options();
        if (cfg.environment == "bandit") judges.judge = nullptr;
        const auto run = run_evaluation(rt.session, params, cases, rt.case_users(), judges, derive_seed(cfg.seed, 0xE7A2));
        records = run.records;
        for (std::size_t i = 0; i < run.episodes.size(); ++i) {
            sessions.push_back(episode_to_json(run.episodes[i], *rt.session.catalog, cases[i].gold_item));
            trajectories.push_back(run.episodes[i].trajectory);
        }
    }

    const auto report = aggregate(records);
    std::vector<Json> rows;
    for (const auto& r : records) rows.push_back(eval_record_to_json(r));
    write_file(in_dir(out_dir, "report.json"), report_to_json(report).dump(2) + "\n");
    write_file(in_dir(out_dir, "report.txt"), report_table(report));
    write_file(in_dir(out_dir, "records.jsonl"), jsonl(rows));
    if (!sessions.empty()) write_file(in_dir(out_dir, "sessions.jsonl"), jsonl(sessions));
    write_file(in_dir(out_dir, "histogram.tsv"),
               histogram_tsv(strategy_histogram(trajectories, cfg.training.histogram_buckets), *rt.session.catalog));
    std::cout << report_table(report);
    log("eval", "report written to " + in_dir(out_dir, "report.json"));
    return 0;
}

int simulate(const Common& common, const std::string& checkpoint, int n, std::string out) {
    const auto cfg = resolve_config(common);
    const auto rt = build_runtime(cfg);
    if (n < 1) throw ConfigError("--n", "must be >= 1");
    const auto params = checkpoint.empty() ? PolicyParams(rt.session.features.dim(), rt.layout_version())
                                           : load_policy(rt, checkpoint);
    std::vector<Json> rows;
    for (int i = 0; i < n; ++i) {
        const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        auto user = rt.session.users(seed);
        const auto ep = run_session(rt.session, params, *user, seed);
        std::cout << "=== " << ep.final_state.session_id << " ("
                  << (ep.trajectory.outcome.accepted() ? "accepted at turn " + std::to_string(ep.trajectory.outcome.turn)
                                                       : std::string(ep.abandoned ? "user left" : "turn cap"))
                  << ")\n";
        for (std::size_t t = 0; t < ep.turns.size(); ++t) {
            std::cout << "  [" << rt.session.catalog->at(ep.turns[t].record.strategy).name << "] reward "
                      << format_number(ep.turns[t].record.reward) << "\n";
        }
        std::cout << render_transcript(ep.final_state) << "\n";
        rows.push_back(episode_to_json(ep, *rt.session.catalog));
    }
    if (out.empty()) out = in_dir(cfg.paths.run_dir, "simulate.jsonl");
    write_file(out, jsonl(rows));
    log("simulate", "sessions written to " + out);
    return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int serve(const Common& common, const std::string& checkpoint, std::optional<int> port, std::optional<std::string> bind) {
    auto cfg = resolve_config(common);
    if (port) cfg.service.port = *port;
    if (bind) cfg.service.bind = *bind;
    cfg.validate();
    const auto rt = build_runtime(cfg);
    if (checkpoint.empty()) throw ConfigError("--checkpoint", "required for serve");
    const auto params = std::make_shared<const PolicyParams>(load_policy(rt, checkpoint));

    ServiceOptions o;
    o.max_sessions = cfg.service.max_sessions;
    o.reply_timeout = std::chrono::milliseconds(cfg.service.reply_timeout_ms);
    o.debug_strategy = cfg.service.debug_strategy;
    if (!cfg.service.auth_token_env.empty()) {
        const auto token = process_env()(cfg.service.auth_token_env);
        if (!token || token->empty()) {
            throw ConfigError("service.auth_token_env", "environment variable " + cfg.service.auth_token_env + " is not set");
        }
        o.auth_token = *token;
    }
    SessionService service(rt.session, params, o);
    httplib::Server server;
    // long-polls hold a worker each
    const int workers = std::max(8, 2 * cfg.service.max_sessions + 4);
    server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
    service.mount(server);
    if (cfg.service.static_dir && !server.set_mount_point("/", *cfg.service.static_dir)) {
        throw ConfigError("service.static_dir", "not a directory: " + *cfg.service.static_dir);
    }
    int bound = cfg.service.port;
    if (bound == 0) {
        bound = server.bind_to_any_port(cfg.service.bind);
    } else if (!server.bind_to_port(cfg.service.bind, bound)) {
        bound = -1;
    }
    if (bound < 0) {
        throw ConfigError("service.port", "cannot bind " + cfg.service.bind + ":" + std::to_string(cfg.service.port));
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    log("serve", "listening on http://" + cfg.service.bind + ":" + std::to_string(bound));
    std::cout << "port " << bound << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
    service.shutdown();
    log("serve", "stopped");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Strategy-planning conversational recommender: training, evaluation and serving"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    add_common(&app, common);
    int status = 0;

    auto* gen = app.add_subcommand("gen-corpus", "Write the synthetic annotated corpus and its manifest");
    std::string gen_out, gen_manifest;
    int gen_n = 20;
    gen->add_option("--out", gen_out, "Corpus path (JSONL)");
    gen->add_option("--manifest", gen_manifest, "Manifest path");
    gen->add_option("--dialogues", gen_n, "Number of dialogues");

    auto* idx = app.add_subcommand("build-index", "Embed entity profiles into an index file");
    std::string idx_out;
    idx->add_option("--out", idx_out, "Index path");

    auto* sft = app.add_subcommand("train-sft", "Supervised warm-up of the planner");
    std::string sft_out;
    sft->add_option("--out", sft_out, "Checkpoint path");

    auto* rl = app.add_subcommand("train-rl", "Policy-gradient training of the planner");
    RlArgs rl_args;
    rl->add_option("--init", rl_args.init, "Starting checkpoint");
    rl->add_flag("--from-zero", rl_args.from_zero, "Start from zero weights");
    rl->add_flag("--resume", rl_args.resume, "Continue from the last finished epoch");
    rl->add_option("--out", rl_args.out, "Final checkpoint path");
    rl->add_option("--epochs", rl_args.epochs, "Overrides training.rl_epochs");
    rl->add_option("--beta", rl_args.beta, "Overrides training.beta");
    rl->add_option("--stop-after", rl_args.stop_after, "Stop after this many epochs (resume later)");

    auto* ev = app.add_subcommand("eval", "Run simulated sessions or replay a log and write a metrics report");
    std::string ev_ckpt, ev_log, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "Planner checkpoint");
    ev->add_option("--log", ev_log, "Session log (JSONL) to replay instead of simulating");
    ev->add_option("--out-dir", ev_out, "Output directory");

    auto* sim = app.add_subcommand("simulate", "Run and print sessions with the configured user");
    std::string sim_ckpt, sim_out;
    int sim_n = 3;
    sim->add_option("--checkpoint", sim_ckpt, "Planner checkpoint (zero weights when omitted)");
    sim->add_option("--n", sim_n, "Number of sessions");
    sim->add_option("--out", sim_out, "Session log path");

    auto* srv = app.add_subcommand("serve", "Serve live chat sessions over HTTP");
    std::string srv_ckpt;
    std::optional<int> srv_port;
    std::optional<std::string> srv_bind;
    srv->add_option("--checkpoint", srv_ckpt, "Planner checkpoint");
    srv->add_option("--port", srv_port, "Overrides service.port (0 picks a free port)");
    srv->add_option("--bind", srv_bind, "Overrides service.bind");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) status = gen_corpus(common, gen_out, gen_manifest, gen_n);
        if (*idx) status = build_index(common, idx_out);
        if (*sft) status = train_sft(common, sft_out);
        if (*rl) status = train_rl(common, rl_args);
        if (*ev) status = eval_cmd(common, ev_ckpt, ev_log, ev_out);
        if (*sim) status = simulate(common, sim_ckpt, sim_n, sim_out);
        if (*srv) status = serve(common, srv_ckpt, srv_port, srv_bind);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return status;
}
