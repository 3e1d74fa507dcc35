#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/tensor.hpp"

namespace unlearn {

// Raw little-endian float32 blobs and JSON documents; every persisted
// artifact in this project is one of each.
void write_f32_file(const std::string& path, const Tensor& data);
Tensor read_f32_file(const std::string& path, const std::vector<std::int64_t>& shape);

void write_json_file(const std::string& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::string& path);

}  // namespace unlearn
