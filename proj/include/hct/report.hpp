#pragma once

// Report document (schema "hct.report", version 1):
//
//   { "schema": "hct.report", "version": 1, "threshold": 0.5,
//     "rows": [ { "model": "without_transformer",
//                 "mean": {"accuracy": .., "precision": .., "recall": ..},
//                 "runs": [ { "seed": 1, "status": "ok", "best_epoch": 12,
//                             "accuracy": .., "precision": null, "recall": ..,
//                             "counts": {"tp": .., "fp": .., "tn": .., "fn": ..},
//                             "config_fingerprint": "..." },
//                           { "seed": 2, "status": "failed", "error": "..." } ] } ] }
//
// Undefined metrics are null.

#include "hct/eval.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace hct {

nlohmann::json report_to_json(const AblationTable& table);
AblationTable report_from_json(const nlohmann::json& j);

/// Model / ACC / Precision / Recall, one line per row (means), n/a for undefined.
std::string format_table(const AblationTable& table);

/// Writes the JSON document to `path`; returns the text table.
std::string emit_report(const AblationTable& table, const std::filesystem::path& path);
AblationTable read_report(const std::filesystem::path& path);

}  // namespace hct
