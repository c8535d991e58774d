#include "hct/report.hpp"

#include "hct/errors.hpp"

#include <cstdio>
#include <fstream>

namespace hct {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string row_label(const std::string& model) {
  try {
    return std::string(display_name(parse_variant(model)));
  } catch (const ConfigError&) {
    return model;
  }
}

}  // namespace

json report_to_json(const AblationTable& table) {
  json rows = json::array();
  for (const auto& row : table.rows) {
    json runs = json::array();
    for (const auto& run : row.runs) {
      json r = {{"seed", run.seed}};
      if (run.metrics) {
        const auto& m = *run.metrics;
        r["status"] = "ok";
        r["best_epoch"] = run.best_epoch;
        r["accuracy"] = optional_number(m.accuracy);
        r["precision"] = optional_number(m.precision);
        r["recall"] = optional_number(m.recall);
        r["counts"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}};
        r["config_fingerprint"] = m.config_fingerprint;
      } else {
        r["status"] = "failed";
        r["error"] = run.error;
      }
      runs.push_back(std::move(r));
    }
    rows.push_back({{"model", row.model},
                    {"mean",
                     {{"accuracy", optional_number(row.mean.accuracy)},
                      {"precision", optional_number(row.mean.precision)},
                      {"recall", optional_number(row.mean.recall)}}},
                    {"runs", runs}});
  }
  return {{"schema", "hct.report"}, {"version", 1}, {"threshold", table.threshold}, {"rows", rows}};
}

AblationTable report_from_json(const json& j) {
  try {
    if (j.at("schema") != "hct.report") throw IoError("not an hct report");
    if (j.at("version") != 1) throw IoError("unsupported report version " + j.at("version").dump());
    AblationTable table;
    table.threshold = j.at("threshold").get<double>();
    for (const auto& jr : j.at("rows")) {
      AblationRow row;
      row.model = jr.at("model").get<std::string>();
      const auto& mean = jr.at("mean");
      row.mean = {read_optional(mean, "accuracy"), read_optional(mean, "precision"), read_optional(mean, "recall")};
      for (const auto& jrun : jr.at("runs")) {
        AblationRun run;
        run.seed = jrun.at("seed").get<std::uint64_t>();
        if (jrun.at("status") == "ok") {
          MetricsReport m;
          m.accuracy = read_optional(jrun, "accuracy");
          m.precision = read_optional(jrun, "precision");
          m.recall = read_optional(jrun, "recall");
          const auto& c = jrun.at("counts");
          m.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                      c.at("fn").get<std::size_t>()};
          m.config_fingerprint = jrun.at("config_fingerprint").get<std::string>();
          m.variant = row.model;
          m.seeds = {run.seed};
          run.metrics = std::move(m);
          run.best_epoch = jrun.at("best_epoch").get<int>();
        } else {
          run.error = jrun.at("error").get<std::string>();
        }
        row.runs.push_back(std::move(run));
      }
      table.rows.push_back(std::move(row));
    }
    return table;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
}

std::string format_table(const AblationTable& table) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %-8s %-10s %-8s\n", "Model", "ACC", "Precision", "Recall");
  out += line;
  for (const auto& row : table.rows) {
    std::size_t failed = 0;
    for (const auto& r : row.runs) failed += r.ok() ? 0 : 1;
    std::snprintf(line, sizeof line, "%-22s %-8s %-10s %-8s", row_label(row.model).c_str(),
                  cell(row.mean.accuracy).c_str(), cell(row.mean.precision).c_str(), cell(row.mean.recall).c_str());
    out += line;
    if (failed) out += "  [" + std::to_string(failed) + " run(s) FAILED]";
    out += '\n';
  }
  return out;
}

std::string emit_report(const AblationTable& table, const std::filesystem::path& path) {
  if (table.rows.empty()) throw UsageError("emit_report needs at least one row");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << report_to_json(table).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
  return format_table(table);
}

AblationTable read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return report_from_json(j);
}

}  // namespace hct
