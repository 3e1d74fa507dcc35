#include "unlearn/io_util.hpp"

#include <fstream>

#include "unlearn/common.hpp"

namespace unlearn {

void write_f32_file(const std::string& path, const Tensor& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check_data(out.good(), "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  check_data(out.good(), "short write to " + path);
}

Tensor read_f32_file(const std::string& path, const std::vector<std::int64_t>& shape) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), "cannot open " + path);
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  check_data(in.gcount() == static_cast<std::streamsize>(t.size() * sizeof(float)),
             path + " is shorter than its declared shape");
  in.peek();
  check_data(in.eof(), path + " is longer than its declared shape");
  return t;
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::trunc);
  check_data(out.good(), "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  check_data(out.good(), "short write to " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  check_data(in.good(), "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  return doc;
}

}  // namespace unlearn
