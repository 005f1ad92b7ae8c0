// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rso/config.hpp"
#include "rso/error.hpp"
#include "rso/metrics.hpp"
#include "rso/session.hpp"

namespace fs = std::filesystem;
using namespace rso;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------- 1

Verdict gradients() {
    const auto t0 = Clock::now();
    const std::size_t dim = kDefaultFeatureDim;
    double worst_sft = 0.0, worst_rl = 0.0;
    int coords = 0;
    for (int instance = 0; instance < 10; ++instance) {
        Rng rng(derive_seed(2024, static_cast<std::uint64_t>(instance)));
        const auto params = testing::random_params(rng, dim, 0.3);

        std::vector<SftExample> sft;
        for (int i = 0; i < 6; ++i) {
            sft.push_back({testing::random_features(rng, dim, 10), StrategyId(static_cast<int>(rng.below(13)))});
        }
        std::vector<RlEpisode> rl;
        for (int e = 0; e < 3; ++e) {
            RlEpisode ep;
            const int T = 1 + static_cast<int>(rng.below(6));
            for (int t = 0; t < T; ++t) {
                ep.features.push_back(testing::random_features(rng, dim, 8));
                ep.strategies.push_back(StrategyId(static_cast<int>(rng.below(13))));
                ep.rewards.push_back(rng.uniform());
            }
            rl.push_back(ep);
        }
        RlOptions o;
        o.beta = 0.1 + 0.2 * rng.uniform();  // both terms of J active
        o.gamma = 0.9;

        const auto gs = sft_gradient(params, sft);
        const auto gr = rl_gradient(params, rl, o);
        std::vector<const FeatureVector*> fs_sft, fs_rl;
        for (const auto& ex : sft) fs_sft.push_back(&ex.features);
        for (const auto& ep : rl) {
            for (const auto& f : ep.features) fs_rl.push_back(&f);
        }
        for (auto idx : testing::active_coordinates(rng, dim, fs_sft, 20)) {
            const double fd = testing::central_difference(params, idx, 1e-4,
                                                          [&](const PolicyParams& q) { return sft_loss(q, sft); });
            worst_sft = std::max(worst_sft, testing::relative_error(gs[idx], fd));
            ++coords;
        }
        for (auto idx : testing::active_coordinates(rng, dim, fs_rl, 20)) {
            const double fd = testing::central_difference(params, idx, 1e-4,
                                                          [&](const PolicyParams& q) { return rl_objective(q, rl, o); });
            worst_rl = std::max(worst_rl, testing::relative_error(gr[idx], fd));
            ++coords;
        }
    }
    const double secs = seconds_since(t0);
    const bool pass = worst_sft < 1e-5 && worst_rl < 1e-5 && secs < 30.0;
    return {pass, "max rel err SFT " + fmt("%.2e", worst_sft) + ", J " + fmt("%.2e", worst_rl) + " over " +
                      std::to_string(coords) + " coordinates / 10 instances, " + fmt("%.2f", secs) + " s"};
}

// ---------------------------------------------------------------- 2

Verdict returns() {
    const auto t0 = Clock::now();
    Rng rng(77);
    const double gammas[] = {0.0, 0.5, 0.99, 1.0};
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double g = gammas[k % 4];
        std::vector<double> r(1 + rng.below(10));
        for (auto& x : r) x = rng.uniform() * 2.0 - 0.5;
        const auto fast = discounted_returns(r, g);
        const auto slow = testing::direct_returns(r, g);
        if (fast.size() != slow.size()) return {false, "length mismatch"};
        for (std::size_t t = 0; t < r.size(); ++t) {
            const double scale = std::max(std::abs(slow[t]), 1e-300);
            worst = std::max(worst, std::abs(fast[t] - slow[t]) / scale);
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0,
            "max rel err " + fmt("%.2e", worst) + " on 1000 sequences, " + fmt("%.3f", secs) + " s"};
}

// ---------------------------------------------------------------- bandit runs

RunConfig bandit_config(std::uint64_t seed, double beta) {
    auto c = load_run_config(std::string(RSO_SOURCE_DIR) + "/configs/bandit.json");
    c.seed = seed;
    c.training.beta = beta;
    c.training.rl_epochs = 10;
    c.training.episodes_per_epoch = 100;
    c.validate();
    return c;
}

struct BanditRun {
    std::vector<double> p_optimal;  // after each RL epoch
    double p_start = 0.0;           // before RL
    double final_entropy = 0.0;
    int final_distinct = 0;
};

BanditRun train_bandit(std::uint64_t seed, double beta, bool sft_first) {
    const auto rt = build_runtime(bandit_config(seed, beta));
    PolicyParams params(rt.session.features.dim(), rt.layout_version());
    if (sft_first) {
        const auto pairs = bandit_sft_corpus(rt.bandit_options(), 64);
        params = run_sft(params, pairs, rt.session.features, rt.sft_options()).params;
    }
    BanditRun out;
    out.p_start = bandit_optimal_probability(params, rt.bandit_options());
    const auto options = rt.training_options();
    for (int epoch = 1; epoch <= rt.config.training.rl_epochs; ++epoch) {
        auto r = run_training_epoch(rt.session, params, options, epoch);
        params = std::move(r.params);
        out.p_optimal.push_back(bandit_optimal_probability(params, rt.bandit_options()));
        out.final_entropy = r.stats.mean_entropy;
        out.final_distinct = r.stats.distinct_strategies;
    }
    return out;
}

const std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct BanditSuite {
    std::vector<BanditRun> zero_b0, zero_b01, sft_b0;
    double secs = 0.0;
};

const BanditSuite& bandit_suite() {
    static const BanditSuite suite = [] {
        BanditSuite s;
        const auto t0 = Clock::now();
        for (auto seed : kSeeds) s.zero_b0.push_back(train_bandit(seed, 0.0, false));
        s.secs = seconds_since(t0);
        for (auto seed : kSeeds) s.zero_b01.push_back(train_bandit(seed, 0.1, false));
        for (auto seed : kSeeds) s.sft_b0.push_back(train_bandit(seed, 0.0, true));
        return s;
    }();
    return suite;
}

Verdict bandit_convergence() {
    const auto& s = bandit_suite();
    int hits = 0;
    std::string finals;
    for (const auto& r : s.zero_b0) {
        hits += r.p_optimal.back() > 0.8;
        finals += (finals.empty() ? "" : " ") + fmt("%.3f", r.p_optimal.back());
    }
    return {hits >= 4 && s.secs < 300.0, std::to_string(hits) + "/5 seeds above 0.8 (final P(opt): " + finals +
                                             "), " + fmt("%.2f", s.secs) + " s for 5 runs"};
}

Verdict entropy_effect() {
    const auto& s = bandit_suite();
    double h0 = 0.0, h1 = 0.0;
    bool counts_ok = true;
    std::string counts;
    for (std::size_t i = 0; i < s.zero_b0.size(); ++i) {
        h0 += s.zero_b0[i].final_entropy / 5.0;
        h1 += s.zero_b01[i].final_entropy / 5.0;
        const int d0 = s.zero_b0[i].final_distinct;
        const int d1 = s.zero_b01[i].final_distinct;
        counts_ok = counts_ok && d1 >= 8 && d0 < d1;
        counts += (counts.empty() ? "" : " ") + std::to_string(d1) + "/" + std::to_string(d0);
    }
    return {h1 > h0 && counts_ok, "mean entropy beta=0.1 " + fmt("%.4f", h1) + " vs beta=0 " + fmt("%.4f", h0) +
                                      "; distinct strategies per seed (0.1/0): " + counts};
}

/// RL epochs needed before P(optimal) first exceeds 0.8; 0 when it already
/// does, epochs + 1 when it never does.
int epochs_to_threshold(const BanditRun& r) {
    if (r.p_start > 0.8) return 0;
    for (std::size_t e = 0; e < r.p_optimal.size(); ++e) {
        if (r.p_optimal[e] > 0.8) return static_cast<int>(e) + 1;
    }
    return static_cast<int>(r.p_optimal.size()) + 1;
}

Verdict sft_warm_start() {
    const auto& s = bandit_suite();
    double zero = 0.0, warm = 0.0;
    std::string per;
    for (std::size_t i = 0; i < s.zero_b0.size(); ++i) {
        const int a = epochs_to_threshold(s.zero_b0[i]);
        const int b = epochs_to_threshold(s.sft_b0[i]);
        zero += a / 5.0;
        warm += b / 5.0;
        per += (per.empty() ? "" : " ") + std::to_string(b) + "/" + std::to_string(a);
    }
    return {warm < zero, "seed-mean epochs to P(opt) > 0.8: SFT+RL " + fmt("%.1f", warm) + " vs RL from zero " +
                             fmt("%.1f", zero) + " (per seed sft/zero: " + per + ")"};
}

// ---------------------------------------------------------------- 5

Verdict loop_conformance() {
    std::vector<std::string> problems;
    const PolicyParams zero;

    // invocation order over two capped turns
    {
        auto log = std::make_shared<CallLog>();
        auto c = testing::mock_session(log, mock::constant("2"));
        c.reward_samples = 2;
        c.turn_cap = 2;
        c.observer = [log](Phase p, int) { log->record("phase:" + std::string(phase_name(p))); };
        auto ub = std::make_shared<MockBackend>(mock::constant("Tell me more."), 0, log);
        SimulatedUser user(ub, c.prompts, "likes comedies", std::string("Amelie"), std::string("Hi there"));
        run_session(c, zero, user, 3);
        const std::vector<std::string> turn = {"phase:plan", "phase:preference", "preference", "phase:retrieve",
                                               "phase:act",  "actor",            "phase:user", "user",
                                               "phase:reward", "rewarder",       "rewarder",   "phase:stop-check"};
        std::vector<std::string> expected = turn;
        expected.insert(expected.end(), turn.begin(), turn.end());
        if (log->events() != expected) problems.push_back("invocation order differs");
    }
    // strict inequality: normalized score equal to tau keeps going, above it stops
    {
        auto c = testing::mock_session(nullptr, mock::constant("4"));
        c.tau = 0.75;  // raw 4 normalizes to exactly 0.75
        c.turn_cap = 3;
        auto u = testing::chatty_user();
        const auto at = run_session(c, zero, *u, 1);
        if (at.trajectory.outcome.accepted() || at.trajectory.records.size() != 3u) {
            problems.push_back("score equal to tau terminated");
        }
        c.tau = 0.7499;
        auto u2 = testing::chatty_user();
        const auto above = run_session(c, zero, *u2, 1);
        if (above.trajectory.outcome != Outcome::accepted_at(1)) problems.push_back("score above tau did not stop");
    }
    // the ten-turn cap
    int longest = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto c = testing::mock_session(nullptr, mock::random_score(1, 4), seed);
        if (c.turn_cap != 10) problems.push_back("default cap is not 10");
        auto u = testing::chatty_user(20);
        const auto ep = run_session(c, zero, *u, seed);
        longest = std::max(longest, static_cast<int>(ep.trajectory.records.size()));
    }
    if (longest > 10) problems.push_back("session exceeded the cap");

    std::string detail = "order, threshold and cap checked; longest session " + std::to_string(longest) + " turns";
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

// ---------------------------------------------------------------- 6

Verdict metric_oracles() {
    std::vector<std::string> bad;
    const auto check = [&](bool ok, const std::string& what) {
        if (!ok) bad.push_back(what);
    };
    check(persuasiveness({2, 4, 4}) == 1.0, "PRS {2,4,4}");
    check(persuasiveness({2, 2, 4}) == 0.0, "PRS {2,2,4}");
    check(persuasiveness({1, 3, 5}) == 0.5, "PRS {1,3,5}");
    check(distinct_2({"i like cats", "i like dogs"}) == 0.75, "Dist-2 0.75 case");
    check(distinct_2({"hello", "world"}) == 0.0, "Dist-2 no bigrams");
    check(recall_at_k({"A", "B", "C"}, "A", 1) == 1, "recall@1 hit");
    check(recall_at_k({"A", "B", "C"}, "C", 1) == 0, "recall@1 miss");
    check(recall_at_k({"A", "B", "C"}, "C", 5) == 1, "recall@5 hit");

    // aggregate over a hand-built fixture: 4 dialogues
    std::vector<EvalRecord> recs(4);
    recs[0].accepted = true;
    recs[0].gold_item = "Heat";
    recs[0].recommended_items = {"Heat", "Alien"};
    recs[0].wi = 4.0;
    recs[0].prs = 1.0;
    recs[0].system_utterances = {"i like cats"};
    recs[1].accepted = false;
    recs[1].gold_item = "Up";
    recs[1].recommended_items = {"Alien", "Heat"};
    recs[1].wi = 2.0;
    recs[1].prs = 0.0;
    recs[1].cred = 3.0;
    recs[1].system_utterances = {"i like dogs"};
    recs[2].accepted = true;
    recs[2].gold_item = "Alien";
    recs[2].recommended_items = {"Heat", "Alien"};
    recs[2].prs = 0.5;
    recs[3].accepted = true;
    const auto r = aggregate(recs);
    check(r.n == 4, "n");
    check(r.conv_sr == 0.75, "conv_sr");
    check(r.rec_sr == 0.5, "rec_sr");
    check(r.recall_at_1 && *r.recall_at_1 == 1.0 / 3.0, "recall@1 mean");
    check(r.recall_at_5 && *r.recall_at_5 == 2.0 / 3.0, "recall@5 mean");
    check(r.wi_mean && *r.wi_mean == 3.0, "wi mean");
    check(r.prs_mean && *r.prs_mean == 0.5, "prs mean");
    check(r.cred_mean && *r.cred_mean == 3.0, "cred mean");
    check(r.dist2 == 0.75, "pooled dist2");

    const auto sig = make_reward_signal({3.0, 4.0}, 0.8);
    check(sig.mean_raw == 3.5 && sig.normalized == 0.625 && !sig.terminate, "reward normalization 3.5 -> 0.625");

    std::string detail = bad.empty() ? "PRS, Dist-2, recall, aggregate and reward normalization exact" : "mismatch:";
    for (const auto& b : bad) detail += " " + b + ";";
    return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 7

Verdict retrieval_oracle() {
    Rng rng(4242);
    const std::size_t dim = 24;
    std::vector<IndexedEntity> entries;
    for (int i = 0; i < 50; ++i) {
        IndexedEntity e;
        e.name = "entity-" + std::to_string(i);
        e.embedding.resize(dim);
        for (auto& x : e.embedding) x = rng.uniform() * 2.0 - 1.0;
        entries.push_back(e);
    }
    const EntityIndex index("random", dim, entries);
    int mismatches = 0;
    for (int q = 0; q < 100; ++q) {
        std::vector<double> query(dim);
        for (auto& x : query) x = rng.uniform() * 2.0 - 1.0;
        const int k = 1 + static_cast<int>(rng.below(10));

        // brute force: score every entity from scratch, full stable sort
        std::vector<std::pair<double, std::string>> scan;
        for (const auto& e : entries) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += query[i] * e.embedding[i];
                na += query[i] * query[i];
                nb += e.embedding[i] * e.embedding[i];
            }
            scan.emplace_back(dot / (std::sqrt(na) * std::sqrt(nb)), e.name);
        }
        std::stable_sort(scan.begin(), scan.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const auto got = top_k(index, query, k);
        bool same = got.size() == static_cast<std::size_t>(k);
        for (int i = 0; same && i < k; ++i) {
            same = got[static_cast<std::size_t>(i)].name == scan[static_cast<std::size_t>(i)].second &&
                   got[static_cast<std::size_t>(i)].score == scan[static_cast<std::size_t>(i)].first;
        }
        mismatches += !same;
    }
    return {mismatches == 0, std::to_string(100 - mismatches) + "/100 queries match the brute-force scan"};
}

// ---------------------------------------------------------------- 8

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool sh(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

Verdict determinism() {
    const auto root = fs::temp_directory_path() / "rso_acceptance_determinism";
    fs::remove_all(root);
    const std::string cli = RSO_CLI_PATH;
    const std::string cfg = std::string(RSO_SOURCE_DIR) + "/configs/mock.json";
    const std::vector<std::string> files = {"report.json", "report.txt", "records.jsonl", "sessions.jsonl",
                                            "histogram.tsv", "sft_log.jsonl", "rl_epochs.jsonl", "ck/sft.ckpt",
                                            "ck/rl.ckpt", "corpus.jsonl"};
    std::vector<std::string> blobs[2];
    for (int run = 0; run < 2; ++run) {
        const auto dir = (root / ("run" + std::to_string(run))).string();
        fs::create_directories(dir);
        const auto base = "cd '" + dir + "' && '" + cli + "' --config '" + cfg + "' --seed 11 --run-dir . --checkpoint-dir ck ";
        const bool ok = sh(base + "gen-corpus --dialogues 16 --out corpus.jsonl 2>/dev/null >/dev/null") &&
                        sh(base + "train-sft --corpus corpus.jsonl 2>/dev/null >/dev/null") &&
                        sh(base + "train-rl --init ck/sft.ckpt --epochs 2 2>/dev/null >/dev/null") &&
                        sh(base + "eval --checkpoint ck/rl.ckpt --corpus corpus.jsonl 2>/dev/null >/dev/null");
        if (!ok) return {false, "pipeline run " + std::to_string(run + 1) + " failed"};
        for (const auto& f : files) {
            if (!fs::exists(fs::path(dir) / f)) return {false, "missing output " + f};
            blobs[run].push_back(slurp(fs::path(dir) / f));
        }
    }
    std::string diff;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (blobs[0][i] != blobs[1][i]) diff += " " + files[i];
    }
    fs::remove_all(root);
    return {diff.empty(), diff.empty() ? std::to_string(files.size()) + " outputs byte-identical across two runs"
                                       : "differs:" + diff};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient correctness", gradients},
        {"return oracle", returns},
        {"bandit convergence", bandit_convergence},
        {"entropy regularization effect", entropy_effect},
        {"turn loop conformance", loop_conformance},
        {"metric oracles", metric_oracles},
        {"retrieval oracle", retrieval_oracle},
        {"end-to-end determinism", determinism},
        {"SFT warm-up value", sft_warm_start},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("CRITERION %zu %s: %s -- %s\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
