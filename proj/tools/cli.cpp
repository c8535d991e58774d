#include "cli.hpp"

#include "hct/checkpoint.hpp"
#include "hct/dataio.hpp"
#include "hct/errors.hpp"
#include "hct/eval.hpp"
#include "hct/gradient_suite.hpp"
#include "hct/model.hpp"
#include "hct/report.hpp"
#include "hct/train.hpp"

#ifdef HCT_FAULT_INJECTION
#include "hct/graph.hpp"
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

namespace hct::cli {
namespace {

namespace fs = std::filesystem;

const char* const kSubcommands[] = {"gen-data", "train", "eval", "ablate", "grad-check"};

// TOML reader that files un-sectioned keys under the active subcommand, so a
// config file can be written as plain `key = value` lines.
class ScopedToml : public CLI::ConfigTOML {
 public:
  explicit ScopedToml(std::string section) : section_(std::move(section)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text{std::istreambuf_iterator<char>(input), std::istreambuf_iterator<char>()};
    if (!section_.empty() && !has_section(text)) text = "[" + section_ + "]\n" + text;
    std::istringstream scoped(text);
    return CLI::ConfigTOML::from_config(scoped);
  }

 private:
  static bool has_section(const std::string& text) {
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      const auto first = line.find_first_not_of(" \t");
      if (first != std::string::npos && line[first] == '[') return true;
    }
    return false;
  }

  std::string section_;
};

struct DataOptions {
  std::string csv;
  SyntheticSpec synthetic;
};

struct ModelOptions {
  ModelConfig config;
  std::string variant = "full";
  std::string conv = "16:3:2";
  std::string positions = "sinusoidal";
};

struct TrainOptions {
  TrainConfig config;
  std::string optimizer = "adam";
  int patience = 0;
};

struct RunOptions {
  DataOptions data;
  ModelOptions model;
  TrainOptions train;
  SplitSpec split;
  std::uint64_t seed = 0;
  std::uint64_t train_seed = 0;
  double threshold = 0.5;
  std::string out_dir;
  bool quiet = false;
};

struct Resolved {
  Dataset data;
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
};

std::vector<ConvStage> parse_conv(const std::string& text) {
  std::vector<ConvStage> stages;
  if (text.empty() || text == "none") return stages;
  std::istringstream list(text);
  for (std::string item; std::getline(list, item, ',');) {
    ConvStage s;
    char c1 = 0, c2 = 0;
    std::istringstream fields(item);
    if (!(fields >> s.out_channels >> c1 >> s.kernel_size >> c2 >> s.pool_window) || c1 != ':' || c2 != ':' ||
        !(fields >> std::ws).eof()) {
      throw ConfigError("conv stage '" + item + "' is not out_channels:kernel:pool");
    }
    stages.push_back(s);
  }
  return stages;
}

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("--data", o.csv, "Training CSV; synthetic data is generated when omitted");
  app->add_option("--n", o.synthetic.n, "Synthetic sample count")->capture_default_str();
  app->add_option("--t", o.synthetic.seq_len, "Synthetic sequence length")->capture_default_str();
  app->add_option("--f", o.synthetic.features, "Synthetic features per step")->capture_default_str();
  app->add_option("--data-seed", o.synthetic.seed, "Synthetic generator seed")->capture_default_str();
  app->add_option("--noise", o.synthetic.noise, "Synthetic gaussian noise level")->capture_default_str();
}

void add_model_options(CLI::App* app, ModelOptions& o, bool with_variant) {
  auto& c = o.config;
  if (with_variant) {
    app->add_option("--variant", o.variant, "full | without_cnn | without_transformer")
        ->check(CLI::IsMember({"full", "without_cnn", "without_transformer"}))
        ->capture_default_str();
  }
  app->add_option("--conv", o.conv, "Conv stages as out:kernel:pool[,out:kernel:pool...]")->capture_default_str();
  app->add_option("--d-model", c.d_model, "Transformer width")->capture_default_str();
  app->add_option("--heads", c.n_heads, "Attention heads")->capture_default_str();
  app->add_option("--d-k", c.d_k, "Per-head query/key width")->capture_default_str();
  app->add_option("--d-v", c.d_v, "Per-head value width")->capture_default_str();
  app->add_option("--blocks", c.n_blocks, "Transformer blocks")->capture_default_str();
  app->add_option("--ffn-dim", c.ffn_dim, "Feed-forward hidden width")->capture_default_str();
  app->add_option("--pe", o.positions, "Positional encoding: sinusoidal | none")
      ->check(CLI::IsMember({"sinusoidal", "none"}))
      ->capture_default_str();
  app->add_option("--dropout", c.dropout_rate, "Dropout rate in [0, 1)")->capture_default_str();
}

void add_train_options(CLI::App* app, TrainOptions& o) {
  auto& c = o.config;
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--lr", c.learning_rate, "Learning rate")->capture_default_str();
  app->add_option("--optimizer", o.optimizer, "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  app->add_option("--beta1", c.beta1)->capture_default_str();
  app->add_option("--beta2", c.beta2)->capture_default_str();
  app->add_option("--adam-eps", c.adam_eps)->capture_default_str();
  app->add_option("--shuffle", c.shuffle_each_epoch, "Reshuffle batches every epoch")->capture_default_str();
  app->add_option("--patience", o.patience, "Early-stopping patience in epochs; 0 disables")->capture_default_str();
}

void add_split_options(CLI::App* app, SplitSpec& s) {
  app->add_option("--train-frac", s.train)->capture_default_str();
  app->add_option("--val-frac", s.val)->capture_default_str();
  app->add_option("--test-frac", s.test)->capture_default_str();
  app->add_option("--split-seed", s.seed)->capture_default_str();
  app->add_option("--stratified", s.stratified)->capture_default_str();
}

// Single runs take a variant and seeds; ablations sweep both.
void add_run_options(CLI::App* app, RunOptions& o, bool single_run) {
  add_data_options(app, o.data);
  add_model_options(app, o.model, single_run);
  add_train_options(app, o.train);
  add_split_options(app, o.split);
  if (single_run) {
    app->add_option("--seed", o.seed, "Parameter initialization seed")->capture_default_str();
    app->add_option("--train-seed", o.train_seed, "Batch shuffling and dropout seed")->capture_default_str();
  }
  app->add_option("--threshold", o.threshold, "Decision threshold on the predicted probability")
      ->capture_default_str();
  app->add_option("--out-dir", o.out_dir, "Output directory")->required();
  app->add_flag("--quiet", o.quiet, "Suppress per-epoch progress");
}

Dataset load_csv_at(const std::string& path, const CsvSchema& schema = {}) {
  try {
    return load_csv(path, schema);
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

Dataset load_data(const DataOptions& o) {
  if (!o.csv.empty()) return load_csv_at(o.csv);
  o.synthetic.validate();
  return gen_synthetic(o.synthetic);
}

ModelConfig resolve_model(const ModelOptions& o, const Dataset& data, std::uint64_t seed) {
  ModelConfig c = o.config;
  c.variant = parse_variant(o.variant);
  c.positional_encoding = parse_positional_encoding(o.positions);
  c.conv_layers = parse_conv(o.conv);
  c.seq_len = data.seq_len;
  c.features = data.num_features();
  c.seed = seed;
  c.validate();
  return c;
}

TrainConfig resolve_train(const TrainOptions& o, std::uint64_t seed) {
  TrainConfig c = o.config;
  c.optimizer = parse_optimizer(o.optimizer);
  if (o.patience < 0) throw ConfigError("--patience must be >= 0");
  if (o.patience > 0) c.early_stop_patience = o.patience;
  c.seed = seed;
  c.validate();
  return c;
}

void check_threshold(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("--threshold must lie in [0, 1]");
}

Resolved resolve(const RunOptions& o) {
  check_threshold(o.threshold);
  Resolved r;
  r.data = load_data(o.data);
  r.model = resolve_model(o.model, r.data, o.seed);
  r.train = resolve_train(o.train, o.train_seed);
  r.split = o.split;
  r.split.validate();
  return r;
}

void check_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out-dir must not be empty");
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("--out-dir " + dir + " is not a directory");
}

fs::path make_out_dir(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void write_snapshot(const CLI::App* sub, const fs::path& dir) {
  write_text(dir / "config.toml", sub->config_to_str(true, false));
}

std::string metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string metrics_line(const std::string& label, const MetricsReport& m) {
  std::ostringstream s;
  s << label << " accuracy=" << metric(m.accuracy) << " precision=" << metric(m.precision)
    << " recall=" << metric(m.recall) << " tp=" << m.counts.tp << " fp=" << m.counts.fp << " tn=" << m.counts.tn
    << " fn=" << m.counts.fn;
  return s.str();
}

int cmd_gen_data(const CLI::App* sub, const SyntheticSpec& spec, const std::string& out_dir, std::ostream& out) {
  spec.validate();
  check_out_dir(out_dir);
  const Dataset ds = gen_synthetic(spec);
  const fs::path dir = make_out_dir(out_dir);
  save_csv(ds, dir / "data.csv");
  write_snapshot(sub, dir);
  out << "wrote " << ds.size() << " samples (T=" << ds.seq_len << ", F=" << ds.num_features() << ") to "
      << (dir / "data.csv").string() << "\n";
  return kSuccess;
}

int cmd_train(const CLI::App* sub, const RunOptions& o, std::ostream& out) {
  const Resolved r = resolve(o);
  check_out_dir(o.out_dir);

  const Splits raw = split(r.data, r.split);
  const Dataset train = standardize(raw.train);
  const Dataset val = apply_standardization(raw.val, *train.standardization);
  const Dataset test = apply_standardization(raw.test, *train.standardization);

  const fs::path dir = make_out_dir(o.out_dir);
  write_snapshot(sub, dir);
  const FitResult fitted = fit(r.train, r.model, train, val, o.quiet ? nullptr : &out);
  const MetricsReport m = evaluate(fitted.best, test, o.threshold);

  save_checkpoint(Checkpoint{fitted.best, r.data.feature_names, train.standardization}, dir / "checkpoint.hct");
  write_text(dir / "history.json", history_to_json(fitted).dump(2) + "\n");
  emit_report(single_report(m, o.seed, fitted.best_epoch, o.threshold), dir / "report.json");

  out << metrics_line("test", m) << " best_epoch=" << fitted.best_epoch << "\n";
  return kSuccess;
}

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  double threshold = 0.5;
  std::string out_dir;
};

int cmd_eval(const CLI::App* sub, const EvalOptions& o, std::ostream& out) {
  check_threshold(o.threshold);
  check_out_dir(o.out_dir);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  CsvSchema schema;
  schema.feature_names = ckpt.feature_names;
  schema.seq_len = ckpt.model.config.seq_len;
  Dataset ds = load_csv_at(o.data, schema);
  if (ds.empty()) throw UsageError(o.data + " contains no samples");
  if (ckpt.standardization) ds = apply_standardization(ds, *ckpt.standardization);

  const MetricsReport m = evaluate(ckpt.model, ds, o.threshold);
  const fs::path dir = make_out_dir(o.out_dir);
  write_snapshot(sub, dir);
  emit_report(single_report(m, ckpt.model.config.seed, 0, o.threshold), dir / "report.json");
  out << metrics_line("eval", m) << "\n";
  return kSuccess;
}

struct AblateOptions {
  RunOptions run;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t workers = 1;
};

int cmd_ablate(const CLI::App* sub, const AblateOptions& o, std::ostream& out, std::ostream& err) {
  const Resolved r = resolve(o.run);
  if (o.seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  if (o.workers == 0) throw ConfigError("--workers must be >= 1");
  check_out_dir(o.run.out_dir);

  const fs::path dir = make_out_dir(o.run.out_dir);
  write_snapshot(sub, dir);
  AblationOptions opts;
  opts.threshold = o.run.threshold;
  opts.workers = o.workers;
  opts.progress = o.run.quiet ? nullptr : &out;
  const AblationTable table = run_ablation(r.model, r.train, r.data, r.split, o.seeds, opts);
  out << emit_report(table, dir / "report.json");

  if (!table.all_ok()) {
    for (const auto& row : table.rows)
      for (const auto& run : row.runs)
        if (!run.ok()) err << "run " << row.model << " seed " << run.seed << " failed: " << run.error << "\n";
    return kRuntimeFailure;
  }
  return kSuccess;
}

struct GradCheckOptions {
  GradientSuiteOptions suite;
  std::string out_dir;
  bool inject_sign_flip = false;
};

int cmd_grad_check(const CLI::App* sub, const GradCheckOptions& o, std::ostream& out) {
  if (!(o.suite.eps > 0.0)) throw ConfigError("--eps must be positive");
  if (o.suite.seeds == 0) throw ConfigError("--seeds must be >= 1");
  if (!o.out_dir.empty()) check_out_dir(o.out_dir);
#ifdef HCT_FAULT_INJECTION
  fault::set_flip_matmul_backward(o.inject_sign_flip);
#endif

  const GradientSuiteReport report = run_gradient_suite(o.suite);
  auto row = [&](const OpGradResult& r, double tol) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-18s %-14.3e %-8zu %-6zu %s\n", r.op.c_str(), r.max_rel_error, r.checks, r.kinks,
                  r.checks > 0 && r.max_rel_error <= tol ? "ok" : "FAIL");
    out << buf;
  };
  char header[128];
  std::snprintf(header, sizeof header, "%-18s %-14s %-8s %-6s %s\n", "op", "max_rel_error", "checks", "kinks",
                "status");
  out << header;
  for (const auto& r : report.ops) row(r, report.op_tolerance);
  row(report.model, report.model_tolerance);
  out << "tolerance ops=" << report.op_tolerance << " model=" << report.model_tolerance << "\n";
  out << (report.passed() ? "PASS" : "FAIL") << "\n";

  if (!o.out_dir.empty()) {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& r : report.ops) {
      ops.push_back({{"op", r.op}, {"max_rel_error", r.max_rel_error}, {"checks", r.checks}, {"kinks", r.kinks}});
    }
    const nlohmann::json doc{{"schema", "hct.grad_check"},
                             {"version", 1},
                             {"eps", o.suite.eps},
                             {"op_tolerance", report.op_tolerance},
                             {"model_tolerance", report.model_tolerance},
                             {"ops", ops},
                             {"model", {{"max_rel_error", report.model.max_rel_error}, {"kinks", report.model.kinks}}},
                             {"passed", report.passed()}};
    const fs::path dir = make_out_dir(o.out_dir);
    write_snapshot(sub, dir);
    write_text(dir / "grad_check.json", doc.dump(2) + "\n");
  }
  return report.passed() ? kSuccess : kRuntimeFailure;
}

// `hct train --config f.toml` -> `hct --config f.toml train`: the config
// option belongs to the top-level app.
std::vector<std::string> hoist_config(std::vector<std::string> args, std::string& section) {
  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(std::begin(kSubcommands), std::end(kSubcommands), a) != std::end(kSubcommands);
  });
  if (sub == args.end()) return args;
  section = *sub;
  const auto sub_pos = sub - args.begin();
  std::vector<std::string> moved;
  std::vector<std::string> rest(args.begin(), args.begin() + sub_pos);
  for (auto it = args.begin() + sub_pos; it != args.end(); ++it) {
    if (*it == "--config" && std::next(it) != args.end()) {
      moved.push_back(*it);
      moved.push_back(*++it);
    } else if (it->rfind("--config=", 0) == 0) {
      moved.push_back(*it);
    } else {
      rest.push_back(*it);
    }
  }
  rest.insert(rest.begin() + sub_pos, moved.begin(), moved.end());
  return rest;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::string section;
  const std::vector<std::string> args = hoist_config(raw_args, section);

  CLI::App app{"Hybrid CNN-Transformer sequence classifier", "hct"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<ScopedToml>(section));
  app.set_config("--config", "", "TOML file of option values; command-line flags take precedence");

  SyntheticSpec gen_spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen->add_option("--n", gen_spec.n, "Sample count")->capture_default_str();
  gen->add_option("--t", gen_spec.seq_len, "Sequence length")->capture_default_str();
  gen->add_option("--f", gen_spec.features, "Features per step")->capture_default_str();
  gen->add_option("--seed", gen_spec.seed)->capture_default_str();
  gen->add_option("--noise", gen_spec.noise, "Gaussian noise level")->capture_default_str();
  gen->add_option("--out-dir", gen_out, "Output directory (receives data.csv)")->required();

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "Split, standardize, fit and evaluate one model");
  add_run_options(train, train_opts, true);

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV file");
  eval->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval->add_option("--data", eval_opts.data)->required();
  eval->add_option("--threshold", eval_opts.threshold)->capture_default_str();
  eval->add_option("--out-dir", eval_opts.out_dir)->required();

  AblateOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "Train full, without_cnn and without_transformer over several seeds");
  add_run_options(ablate, ablate_opts.run, false);
  ablate->add_option("--seeds", ablate_opts.seeds, "Run seeds; each seeds both initialization and shuffling")->capture_default_str()->delimiter(',');
  ablate->add_option("--workers", ablate_opts.workers, "Concurrent training runs")->capture_default_str();

  GradCheckOptions gc_opts;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients of every op and the model");
  gc->add_option("--eps", gc_opts.suite.eps, "Central-difference step")->capture_default_str();
  gc->add_option("--seeds", gc_opts.suite.seeds, "Random cases per op")->capture_default_str();
  gc->add_option("--base-seed", gc_opts.suite.base_seed)->capture_default_str();
  gc->add_option("--out-dir", gc_opts.out_dir, "Optional directory for grad_check.json");
#ifdef HCT_FAULT_INJECTION
  gc->add_flag("--inject-sign-flip", gc_opts.inject_sign_flip, "Negate the matmul backward pass");
#endif

  std::vector<const char*> argv{"hct"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kValidationFailure;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen, gen_spec, gen_out, out);
    if (train->parsed()) return cmd_train(train, train_opts, out);
    if (eval->parsed()) return cmd_eval(eval, eval_opts, out);
    if (ablate->parsed()) return cmd_ablate(ablate, ablate_opts, out, err);
    if (gc->parsed()) return cmd_grad_check(gc, gc_opts, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kValidationFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace hct::cli
