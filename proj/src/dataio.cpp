#include "hct/dataio.hpp"

#include "hct/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace hct {

std::vector<RowMatrix> Dataset::feature_matrices() const {
  std::vector<RowMatrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.features);
  return out;
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(static_cast<double>(s.label));
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

struct ColumnRole {
  enum Kind { feature, label, id } kind = feature;
  Index feature_index = 0;
  Index step = 0;  // 0-based
};

struct Header {
  std::vector<ColumnRole> roles;
  std::vector<std::string> names;
  std::vector<std::string> feature_names;
  Index seq_len = 0;
  bool has_label = false;
};

Header parse_header(const std::string& line, const CsvSchema& schema) {
  Header h;
  h.names = split_line(line);
  if (!h.names.empty() && h.names.front().starts_with("\xEF\xBB\xBF")) h.names.front().erase(0, 3);
  std::map<std::string, Index> feature_index;
  std::map<std::string, std::vector<Index>> steps;
  std::map<std::string, bool> is_sequence;
  bool has_id = false;

  for (const auto& name : h.names) {
    ColumnRole role;
    if (name == "label") {
      if (h.has_label) throw ParseError(1, name, "duplicate label column");
      role.kind = ColumnRole::label;
      h.has_label = true;
    } else if (name == "id") {
      if (has_id) throw ParseError(1, name, "duplicate id column");
      role.kind = ColumnRole::id;
      has_id = true;
    } else {
      if (name.empty()) throw ParseError(1, "(empty)", "empty column name");
      std::string base = name;
      Index step = 1;
      bool sequence = false;
      if (auto at = name.rfind('@'); at != std::string::npos) {
        base = name.substr(0, at);
        const std::string digits = name.substr(at + 1);
        long long t = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t);
        if (base.empty() || digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || t < 1) {
          throw ParseError(1, name, "sequence columns must be named <feature>@<step> with step >= 1");
        }
        step = static_cast<Index>(t);
        sequence = true;
      }
      auto [it, inserted] = feature_index.try_emplace(base, static_cast<Index>(feature_index.size()));
      if (inserted) {
        h.feature_names.push_back(base);
        is_sequence[base] = sequence;
      } else if (is_sequence[base] != sequence) {
        throw ParseError(1, name, "feature '" + base + "' mixes static and sequence columns");
      }
      auto& seen = steps[base];
      if (std::find(seen.begin(), seen.end(), step) != seen.end()) throw ParseError(1, name, "duplicate column");
      seen.push_back(step);
      role.feature_index = it->second;
      role.step = step - 1;
    }
    h.roles.push_back(role);
  }
  if (!h.has_label) throw ParseError(1, "label", "missing label column");
  if (h.feature_names.empty()) throw ParseError(1, "(header)", "no feature columns");

  for (const auto& name : h.feature_names) {
    auto s = steps[name];
    std::sort(s.begin(), s.end());
    const auto t = static_cast<Index>(s.size());
    for (Index k = 0; k < t; ++k) {
      if (s[static_cast<std::size_t>(k)] != k + 1) {
        throw ParseError(1, name + "@" + std::to_string(k + 1), "missing column (steps must be contiguous from 1)");
      }
    }
    if (h.seq_len == 0) {
      h.seq_len = t;
    } else if (h.seq_len != t) {
      throw ParseError(1, name + "@" + std::to_string(std::min(t, h.seq_len) + 1),
                       "feature '" + name + "' has " + std::to_string(t) + " steps, expected " +
                           std::to_string(h.seq_len));
    }
  }

  if (schema.feature_names && *schema.feature_names != h.feature_names) {
    std::string expected;
    for (const auto& n : *schema.feature_names) expected += (expected.empty() ? "" : ",") + n;
    throw ParseError(1, "(header)", "features do not match the expected [" + expected + "]");
  }
  if (schema.seq_len && *schema.seq_len != h.seq_len) {
    throw ParseError(1, "(header)", "sequence length " + std::to_string(h.seq_len) + " does not match expected " +
                                        std::to_string(*schema.seq_len));
  }
  return h;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  if (cell.empty()) throw ParseError(row, column, "missing value");
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ParseError(row, column, "not a number: '" + cell + "'");
  if (!std::isfinite(v)) throw ParseError(row, column, "non-finite value: '" + cell + "'");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "(header)", "empty file");
  strip_cr(line);
  const Header h = parse_header(line, schema);

  Dataset ds;
  ds.feature_names = h.feature_names;
  ds.seq_len = h.seq_len;
  const Index f = ds.num_features();

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != h.roles.size()) {
      throw ParseError(row, "(row)", "expected " + std::to_string(h.roles.size()) + " cells, found " +
                                         std::to_string(cells.size()));
    }
    Sample s;
    s.features = RowMatrix::Zero(h.seq_len, f);
    s.id = "row" + std::to_string(row);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& role = h.roles[c];
      switch (role.kind) {
        case ColumnRole::id:
          s.id = cells[c];
          break;
        case ColumnRole::label:
          if (cells[c] == "0") {
            s.label = 0;
          } else if (cells[c] == "1") {
            s.label = 1;
          } else {
            throw ParseError(row, h.names[c], "label must be 0 or 1, got '" + cells[c] + "'");
          }
          break;
        case ColumnRole::feature:
          s.features(role.step, role.feature_index) = parse_number(cells[c], row, h.names[c]);
          break;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, schema);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  const Index f = ds.num_features();
  std::string line;
  for (Index j = 0; j < f; ++j) {
    for (Index t = 0; t < ds.seq_len; ++t) {
      line += ds.feature_names[static_cast<std::size_t>(j)];
      if (ds.seq_len > 1) line += "@" + std::to_string(t + 1);
      line += ',';
    }
  }
  line += "label\n";
  out << line;
  for (const auto& s : ds.samples) {
    line.clear();
    for (Index j = 0; j < f; ++j)
      for (Index t = 0; t < ds.seq_len; ++t) {
        line += format_number(s.features(t, j));
        line += ',';
      }
    line += s.label ? "1\n" : "0\n";
    out << line;
  }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------- standardization

Standardization feature_moments(const Dataset& ds) {
  if (ds.empty()) throw UsageError("cannot compute statistics of an empty dataset");
  const Index f = ds.num_features();
  Standardization st;
  st.mean.assign(static_cast<std::size_t>(f), 0.0);
  st.std.assign(static_cast<std::size_t>(f), 0.0);
  const double count = static_cast<double>(ds.size()) * static_cast<double>(ds.seq_len);
  for (Index j = 0; j < f; ++j) {
    double total = 0.0;
    for (const auto& s : ds.samples) total += s.features.col(j).sum();
    const double mean = total / count;
    double sq = 0.0;
    for (const auto& s : ds.samples) sq += (s.features.col(j).array() - mean).square().sum();
    st.mean[static_cast<std::size_t>(j)] = mean;
    st.std[static_cast<std::size_t>(j)] = std::sqrt(sq / count);
  }
  return st;
}

Dataset apply_standardization(const Dataset& ds, const Standardization& stats) {
  const auto f = static_cast<std::size_t>(ds.num_features());
  if (stats.mean.size() != f || stats.std.size() != f) {
    throw DimensionError("standardization has " + std::to_string(stats.mean.size()) + " features, dataset has " +
                         std::to_string(f));
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw UsageError("standardization std entries must be positive");
  }
  Dataset out = ds;
  for (auto& s : out.samples)
    for (std::size_t j = 0; j < f; ++j) {
      const auto col = static_cast<Index>(j);
      s.features.col(col) = (s.features.col(col).array() - stats.mean[j]) / stats.std[j];
    }
  out.standardization = stats;
  return out;
}

Dataset standardize(const Dataset& ds) {
  if (ds.empty()) throw UsageError("cannot standardize an empty dataset");
  if (ds.standardization) throw UsageError("dataset is already standardized");
  Standardization st = feature_moments(ds);
  for (double& s : st.std) {
    if (s < kMinStd) s = 1.0;
  }
  return apply_standardization(ds, st);
}

// ---------------------------------------------------------------- split

void SplitSpec::validate() const {
  for (double f : {train, val, test}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must each lie in (0, 1)");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.seq_len = ds.seq_len;
  out.standardization = ds.standardization;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(ds.samples[i]);
  return out;
}

std::size_t rounded(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

Splits split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.empty()) throw UsageError("cannot split an empty dataset");
  std::mt19937_64 rng(spec.seed);

  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    groups.resize(2);
    for (std::size_t i = 0; i < ds.size(); ++i) groups[static_cast<std::size_t>(ds.samples[i].label)].push_back(i);
  } else {
    groups.emplace_back(ds.size());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  std::vector<std::size_t> train, val, test;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const std::size_t n_train = std::min(rounded(spec.train, g.size()), g.size());
    const std::size_t n_val = std::min(rounded(spec.val, g.size()), g.size() - n_train);
    train.insert(train.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    val.insert(val.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train),
               g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    test.insert(test.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), g.end());
  }
  if (train.empty() || val.empty() || test.empty()) {
    throw UsageError("dataset of " + std::to_string(ds.size()) + " samples is too small for the requested split (" +
                     std::to_string(train.size()) + "/" + std::to_string(val.size()) + "/" +
                     std::to_string(test.size()) + ")");
  }
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(val.begin(), val.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);
  return {subset(ds, train), subset(ds, val), subset(ds, test)};
}

// ---------------------------------------------------------------- synthetic

void SyntheticSpec::validate() const {
  if (n < 2) throw UsageError("synthetic data needs n >= 2");
  if (seq_len < 4) throw UsageError("synthetic data needs T >= 4 to fit the motif");
  if (features < 2) throw UsageError("synthetic data needs F >= 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw UsageError("synthetic noise must be finite and >= 0");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> negative_kind(0, 2);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Index t_len = spec.seq_len;

  std::vector<int> labels(spec.n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.n / 2), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset ds;
  ds.seq_len = t_len;
  for (Index j = 0; j < spec.features; ++j) ds.feature_names.push_back("f" + std::to_string(j));

  for (std::size_t i = 0; i < spec.n; ++i) {
    bool motif = true;
    bool agree = true;
    if (labels[i] == 0) {
      switch (negative_kind(rng)) {
        case 0:
          agree = false;
          break;
        case 1:
          motif = false;
          break;
        default:
          motif = false;
          agree = false;
          break;
      }
    }

    RowMatrix x(t_len, spec.features);
    // Feature 0: +-1 background that never contains (+1, -1, +1).
    for (Index t = 0; t < t_len; ++t) {
      double v = coin(rng) ? 1.0 : -1.0;
      if (t >= 2 && x(t - 2, 0) > 0 && x(t - 1, 0) < 0) v = -1.0;
      x(t, 0) = v;
    }
    if (motif) {
      std::uniform_int_distribution<Index> offset(0, t_len - 3);
      const Index o = offset(rng);
      x(o, 0) = 1.0;
      x(o + 1, 0) = -1.0;
      x(o + 2, 0) = 1.0;
    }
    // Feature 1: zero except at the end points, which carry random
    // magnitudes in [0.5, 1.5] with signs tied by `agree`.
    for (Index t = 0; t < t_len; ++t) x(t, 1) = 0.0;
    const double first_sign = coin(rng) ? 1.0 : -1.0;
    x(0, 1) = first_sign * magnitude(rng);
    x(t_len - 1, 1) = (agree ? first_sign : -first_sign) * magnitude(rng);
    for (Index j = 2; j < spec.features; ++j)
      for (Index t = 0; t < t_len; ++t) x(t, j) = gauss(rng);

    if (spec.noise > 0.0) {
      for (Index k = 0; k < x.size(); ++k) x.data()[k] += spec.noise * gauss(rng);
    }
    ds.samples.push_back(Sample{std::move(x), labels[i], "syn" + std::to_string(i)});
  }
  return ds;
}

}  // namespace hct
