#include "hct/eval.hpp"

#include "hct/checkpoint.hpp"
#include "hct/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <thread>

namespace hct {

ConfusionCounts count_confusion(std::span<const double> probs, std::span<const int> labels, double threshold) {
  if (probs.size() != labels.size()) {
    throw UsageError("count_confusion got " + std::to_string(probs.size()) + " predictions and " +
                     std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) {
      ++c.tp;
    } else if (predicted) {
      ++c.fp;
    } else if (actual) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  return r;
}

MetricsReport evaluate(const Model& model, const Dataset& ds, double threshold) {
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(ds.size());
  labels.reserve(ds.size());
  for (const auto& s : ds.samples) {
    probs.push_back(predict(model, s.features));
    labels.push_back(s.label);
  }
  MetricsReport r = metrics_from_counts(count_confusion(probs, labels, threshold));
  r.variant = std::string(to_string(model.config.variant));
  r.config_fingerprint = config_fingerprint(model.config);
  r.seeds = {model.config.seed};
  return r;
}

std::string_view display_name(Variant v) {
  switch (v) {
    case Variant::without_transformer:
      return "Without Transformer";
    case Variant::without_cnn:
      return "Without CNN";
    case Variant::full:
      return "All";
  }
  return "?";
}

bool AblationTable::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const AblationRow& row) {
    return std::all_of(row.runs.begin(), row.runs.end(), [](const AblationRun& r) { return r.ok(); });
  });
}

const AblationRow* AblationTable::find(Variant v) const {
  for (const auto& row : rows) {
    if (row.model == to_string(v)) return &row;
  }
  return nullptr;
}

MeanMetrics mean_metrics(std::span<const AblationRun> runs) {
  auto average = [&](auto member) -> std::optional<double> {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (!r.metrics) continue;
      if (const auto& v = (*r.metrics).*member) {
        total += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
  };
  return {average(&MetricsReport::accuracy), average(&MetricsReport::precision), average(&MetricsReport::recall)};
}

AblationTable run_ablation(const ModelConfig& base_config, const TrainConfig& train_config, const Dataset& dataset,
                           const SplitSpec& split_spec, std::span<const std::uint64_t> seeds,
                           const AblationOptions& options) {
  if (seeds.empty()) throw UsageError("run_ablation needs at least one seed");
  train_config.validate();
  const Splits raw = split(dataset, split_spec);
  const Dataset train = standardize(raw.train);
  const Dataset val = apply_standardization(raw.val, *train.standardization);
  const Dataset test = apply_standardization(raw.test, *train.standardization);

  struct Job {
    std::size_t row;
    std::size_t run;
  };
  AblationTable table;
  table.threshold = options.threshold;
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < std::size(kAblationOrder); ++r) {
    AblationRow row;
    row.model = std::string(to_string(kAblationOrder[r]));
    row.runs.resize(seeds.size());
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      row.runs[k].seed = seeds[k];
      jobs.push_back({r, k});
    }
    table.rows.push_back(std::move(row));
  }
  for (const auto& v : kAblationOrder) {
    ModelConfig c = base_config;
    c.variant = v;
    c.seq_len = train.seq_len;
    c.features = train.num_features();
    c.validate();
  }

  std::mutex progress_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job job = jobs[i];
      AblationRun& run = table.rows[job.row].runs[job.run];
      ModelConfig mc = base_config;
      mc.variant = kAblationOrder[job.row];
      mc.seq_len = train.seq_len;
      mc.features = train.num_features();
      mc.seed = run.seed;
      TrainConfig tc = train_config;
      tc.seed = run.seed;
      try {
        FitResult fitted = fit(tc, mc, train, val);
        MetricsReport m = evaluate(fitted.best, test, options.threshold);
        m.seeds = {run.seed};
        run.best_epoch = fitted.best_epoch;
        run.metrics = std::move(m);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        char line[200];
        if (run.ok()) {
          std::snprintf(line, sizeof line, "%-20s seed %llu  acc=%.4f  best_epoch=%d\n",
                        table.rows[job.row].model.c_str(), static_cast<unsigned long long>(run.seed),
                        run.metrics->accuracy.value_or(0.0), run.best_epoch);
        } else {
          std::snprintf(line, sizeof line, "%-20s seed %llu  FAILED: %s\n", table.rows[job.row].model.c_str(),
                        static_cast<unsigned long long>(run.seed), run.error.c_str());
        }
        *options.progress << line << std::flush;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, jobs.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& row : table.rows) row.mean = mean_metrics(row.runs);
  return table;
}

AblationTable single_report(const MetricsReport& metrics, std::uint64_t seed, int best_epoch, double threshold) {
  AblationTable table;
  table.threshold = threshold;
  AblationRow row;
  row.model = metrics.variant;
  AblationRun run;
  run.seed = seed;
  run.metrics = metrics;
  run.best_epoch = best_epoch;
  row.runs.push_back(std::move(run));
  row.mean = mean_metrics(row.runs);
  table.rows.push_back(std::move(row));
  return table;
}

}  // namespace hct
