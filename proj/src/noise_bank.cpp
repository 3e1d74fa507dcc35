#include "unlearn/noise_bank.hpp"

#include <fstream>
#include <unordered_set>

#include "unlearn/common.hpp"
#include "unlearn/io_util.hpp"

namespace unlearn {

std::int64_t NoiseBank::row_of(std::int64_t id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return static_cast<std::int64_t>(i);
  }
  return -1;
}

void NoiseBank::validate() const {
  check_data(deltas.rank() == 4, "noise bank: deltas must be [count,c,h,w]");
  check_data(static_cast<std::int64_t>(ids.size()) == count(),
             "noise bank: id count does not match delta count");
  std::unordered_set<std::int64_t> seen;
  for (auto id : ids) {
    check_data(seen.insert(id).second,
               "noise bank: duplicate id " + std::to_string(id));
  }
  const std::int64_t slice = deltas.slice_size();
  for (std::int64_t n = 0; n < count(); ++n) {
    const double m =
        norm_of({deltas.data() + n * slice, static_cast<std::size_t>(slice)}, norm);
    check_data(m <= rho_u + 1e-6, "noise bank: perturbation for id " +
                                      std::to_string(ids[n]) + " exceeds its radius");
  }
}

std::string fnv1a_hex(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string json_hash(const nlohmann::json& j) {
  const std::string dump = j.dump();
  return fnv1a_hex(dump.data(), dump.size());
}

void save_bank(const NoiseBank& bank, const std::string& stem) {
  bank.validate();
  write_f32_file(stem + ".f32", bank.deltas);
  nlohmann::json meta;
  meta["kind"] = "noise-bank";
  meta["mode"] = bank.mode;
  meta["norm"] = to_string(bank.norm);
  meta["rho_u"] = bank.rho_u;
  meta["rho_a"] = bank.rho_a;
  meta["generator_hash"] = bank.generator_hash;
  meta["config_hash"] = bank.config_hash;
  meta["creation_config"] = bank.creation_config;
  meta["shape"] = bank.deltas.shape();
  meta["ids"] = bank.ids;
  write_json_file(stem + ".json", meta);
}

NoiseBank load_bank(const std::string& stem) {
  nlohmann::json meta = read_json_file(stem + ".json");
  check_data(meta.value("kind", "") == "noise-bank",
             stem + ".json is not a noise-bank manifest");
  NoiseBank bank;
  bank.mode = meta.at("mode").get<std::string>();
  bank.norm = norm_from_string(meta.at("norm").get<std::string>());
  bank.rho_u = meta.at("rho_u").get<double>();
  bank.rho_a = meta.at("rho_a").get<double>();
  bank.generator_hash = meta.value("generator_hash", "");
  bank.config_hash = meta.value("config_hash", "");
  if (meta.contains("creation_config")) bank.creation_config = meta["creation_config"];
  bank.ids = meta.at("ids").get<std::vector<std::int64_t>>();
  bank.deltas = read_f32_file(stem + ".f32", meta.at("shape").get<std::vector<std::int64_t>>());
  bank.validate();
  return bank;
}

}  // namespace unlearn
