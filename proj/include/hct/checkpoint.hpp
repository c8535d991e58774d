#pragma once

// Checkpoint container, little-endian throughout:
//
//   bytes 0..7    magic "HCTCKPT\x01"
//   bytes 8..15   uint64 length L of the JSON header
//   next L bytes  UTF-8 JSON header (see docs/formats.md)
//   remainder     float64 payload; each header tensor entry gives its
//                 element offset and shape
//
// The JSON header carries the model config, the parameter table, the feature
// names and the standardization statistics table. Tensor values live only in
// the binary payload, so load(save(m)) is bit-exact.

#include "hct/dataio.hpp"
#include "hct/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace hct {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::vector<std::string> feature_names;
  std::optional<Standardization> standardization;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Short stable hash of the resolved model config (hex FNV-1a over its JSON).
std::string config_fingerprint(const ModelConfig& config);

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hct
