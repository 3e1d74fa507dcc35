#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "unlearn/budget.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Per-example defensive perturbations plus the provenance needed to
// reproduce them. This is the artifact a data protector releases.
struct NoiseBank {
  std::string mode;  // "em", "rem" or "tap"
  NormKind norm = NormKind::kLinf;
  double rho_u = 0.0;
  double rho_a = 0.0;  // rem only
  std::string generator_hash;
  std::string config_hash;
  nlohmann::json creation_config;

  Tensor deltas;  // [count, channels, height, width]
  std::vector<std::int64_t> ids;

  std::int64_t count() const { return deltas.rank() == 4 ? deltas.dim(0) : 0; }

  // Row of the given id, or -1.
  std::int64_t row_of(std::int64_t id) const;

  void validate() const;
};

void save_bank(const NoiseBank& bank, const std::string& stem);
NoiseBank load_bank(const std::string& stem);

// FNV-1a over raw bytes, as a short hex provenance string.
std::string fnv1a_hex(const void* data, std::size_t bytes);
std::string json_hash(const nlohmann::json& j);

}  // namespace unlearn
