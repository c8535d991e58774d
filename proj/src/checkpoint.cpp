#include "hct/checkpoint.hpp"

#include "hct/errors.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hct {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'C', 'T', 'C', 'K', 'P', 'T', '\x01'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  json layers = json::array();
  for (const auto& s : c.conv_layers) {
    layers.push_back({{"out_channels", s.out_channels}, {"kernel_size", s.kernel_size}, {"pool_window", s.pool_window}});
  }
  return {{"seq_len", c.seq_len},
          {"features", c.features},
          {"conv_layers", layers},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"d_k", c.d_k},
          {"d_v", c.d_v},
          {"n_blocks", c.n_blocks},
          {"ffn_dim", c.ffn_dim},
          {"variant", std::string(to_string(c.variant))},
          {"positional_encoding", std::string(to_string(c.positional_encoding))},
          {"dropout_rate", c.dropout_rate},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.seq_len = j.at("seq_len").get<Index>();
    c.features = j.at("features").get<Index>();
    c.conv_layers.clear();
    for (const auto& s : j.at("conv_layers")) {
      c.conv_layers.push_back(ConvStage{s.at("out_channels").get<Index>(), s.at("kernel_size").get<Index>(),
                                        s.at("pool_window").get<Index>()});
    }
    c.d_model = j.at("d_model").get<Index>();
    c.n_heads = j.at("n_heads").get<Index>();
    c.d_k = j.at("d_k").get<Index>();
    c.d_v = j.at("d_v").get<Index>();
    c.n_blocks = j.at("n_blocks").get<Index>();
    c.ffn_dim = j.at("ffn_dim").get<Index>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.positional_encoding = parse_positional_encoding(j.at("positional_encoding").get<std::string>());
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

std::string config_fingerprint(const ModelConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  json tensors = json::array();
  std::vector<const double*> chunks;
  std::vector<std::size_t> lengths;
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Shape& shape, const double* data, std::size_t n) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    chunks.push_back(data);
    lengths.push_back(n);
    offset += n;
  };
  for (const auto& [name, t] : ckpt.model.params) add(name, t.shape(), t.data().data(), t.data().size());

  json header = {{"format", "hct-checkpoint"},
                 {"version", kCheckpointVersion},
                 {"model_config", config_to_json(ckpt.model.config)},
                 {"feature_names", ckpt.feature_names},
                 {"parameters", tensors}};
  if (ckpt.standardization) {
    const auto& st = *ckpt.standardization;
    tensors = json::array();
    add("standardization.mean", {static_cast<Index>(st.mean.size())}, st.mean.data(), st.mean.size());
    add("standardization.std", {static_cast<Index>(st.std.size())}, st.std.data(), st.std.size());
    header["standardization"] = tensors;
  } else {
    header["standardization"] = nullptr;
  }
  header["payload_elements"] = offset;

  const std::string text = header.dump(2);
  out.write(kMagic.data(), kMagic.size());
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    out.write(reinterpret_cast<const char*>(chunks[k]), static_cast<std::streamsize>(lengths[k] * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not an hct checkpoint (bad magic)");
  const std::uint64_t header_len = read_u64(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw IoError("truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "hct-checkpoint") throw IoError("checkpoint header has the wrong format tag");
  if (header.value("version", 0) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + header.value("version", json(0)).dump());
  }

  const auto total = header.at("payload_elements").get<std::uint64_t>();
  std::vector<double> payload(total);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(double)))) {
    throw IoError("truncated checkpoint payload");
  }

  auto slice = [&](const json& entry) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto off = entry.at("offset").get<std::uint64_t>();
    const auto n = static_cast<std::uint64_t>(shape_size(shape));
    if (off + n > total) throw IoError("checkpoint tensor '" + entry.at("name").get<std::string>() + "' overruns payload");
    return Tensor(shape, std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                             payload.begin() + static_cast<std::ptrdiff_t>(off + n)));
  };

  Checkpoint ckpt;
  ckpt.model.config = config_from_json(header.at("model_config"));
  ckpt.feature_names = header.at("feature_names").get<std::vector<std::string>>();
  for (const auto& entry : header.at("parameters")) {
    Tensor t = slice(entry);
    t.set_requires_grad(true);
    ckpt.model.params.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  for (const auto& spec : param_specs(ckpt.model.config)) {
    auto it = ckpt.model.params.find(spec.name);
    if (it == ckpt.model.params.end() || it->second.shape() != spec.shape) {
      throw IoError("checkpoint parameter '" + spec.name + "' missing or misshapen for its config");
    }
  }
  if (ckpt.model.params.size() != param_specs(ckpt.model.config).size()) {
    throw IoError("checkpoint carries parameters its config does not define");
  }
  if (!header.at("standardization").is_null()) {
    Standardization st;
    for (const auto& entry : header.at("standardization")) {
      Tensor t = slice(entry);
      const auto name = entry.at("name").get<std::string>();
      std::vector<double> values(t.data().begin(), t.data().end());
      if (name == "standardization.mean") {
        st.mean = std::move(values);
      } else if (name == "standardization.std") {
        st.std = std::move(values);
      }
    }
    ckpt.standardization = std::move(st);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace hct
