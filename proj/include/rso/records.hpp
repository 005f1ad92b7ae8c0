#pragma once

// JSON forms of run outputs: session logs (JSONL, one session per line),
// epoch stats, evaluation records and reports, corpus manifests.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rso/corpus.hpp"
#include "rso/metrics.hpp"
#include "rso/session.hpp"
#include "rso/strategy.hpp"

namespace rso {

using Json = nlohmann::ordered_json;

/// One turn: strategy, reward, preference and the facts used.
Json turn_to_json(const TurnTrace& turn, const StrategyCatalog& catalog);

/// Session log line. `gold_item` is carried along for later evaluation.
Json episode_to_json(const Episode& episode, const StrategyCatalog& catalog,
                     const std::optional<std::string>& gold_item = std::nullopt);

struct LoggedSession {
    Episode episode;  // features are not logged and come back empty
    std::optional<std::string> gold_item;
};

/// Throws ParseError on a malformed record.
LoggedSession episode_from_json(const Json& j);

/// Reads a JSONL session log.
std::vector<LoggedSession> load_session_log(const std::string& path);

Json epoch_stats_to_json(const EpochStats& stats, const StrategyCatalog& catalog);
Json sft_stats_to_json(const SftEpochStats& stats);

/// Absent optional metrics are written as null.
Json report_to_json(const MetricsReport& report);
Json eval_record_to_json(const EvalRecord& record);

/// Two-column aligned text table; absent values print as "n/a".
std::string report_table(const MetricsReport& report);

/// Tab-separated matrix: header `strategy<TAB>b0<TAB>b1...`, one row per strategy.
std::string histogram_tsv(const std::vector<std::vector<double>>& histogram, const StrategyCatalog& catalog);

Json manifest_to_json(const CorpusManifest& manifest, const StrategyCatalog& catalog);
CorpusManifest manifest_from_json(const Json& j, const StrategyCatalog& catalog);

/// Writes `body` to `path` atomically (temp file + rename), creating parent
/// directories.
void write_file(const std::string& path, const std::string& body);
std::string read_file(const std::string& path);

/// Fixed formatting for numbers in tables and TSV files.
std::string format_number(double value);

}  // namespace rso
