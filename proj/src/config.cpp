#include "unlearn/config.hpp"

#include <filesystem>
#include <unordered_set>

#include "unlearn/common.hpp"
#include "unlearn/io_util.hpp"

namespace unlearn {

void merge_config(nlohmann::json& base, const nlohmann::json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key())) {
      merge_config(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

namespace {

nlohmann::json load_with_includes(const std::filesystem::path& path,
                                  std::unordered_set<std::string>* visiting) {
  std::error_code ec;
  const auto canonical = std::filesystem::weakly_canonical(path, ec).string();
  check_config(visiting->insert(canonical).second,
               "config include cycle through " + path.string());

  nlohmann::json doc = read_json_file(path.string());
  check_config(doc.is_object(), path.string() + ": config root must be a JSON object");

  nlohmann::json merged = nlohmann::json::object();
  if (doc.contains("include")) {
    const nlohmann::json& includes = doc["include"];
    check_config(includes.is_array(), path.string() + ": \"include\" must be an array");
    for (const auto& inc : includes) {
      check_config(inc.is_string(), path.string() + ": include entries must be paths");
      std::filesystem::path inc_path = inc.get<std::string>();
      if (inc_path.is_relative()) inc_path = path.parent_path() / inc_path;
      nlohmann::json sub = load_with_includes(inc_path, visiting);
      merge_config(merged, sub);
    }
    doc.erase("include");
  }
  merge_config(merged, doc);
  visiting->erase(canonical);
  return merged;
}

}  // namespace

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  check_config(eq != std::string::npos && eq > 0,
               "override '" + assignment + "' must look like key.path=value");
  const std::string key_path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;  // plain string
  }

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key_path.find('.', start);
    const std::string key = key_path.substr(start, dot - start);
    check_config(!key.empty(), "override '" + assignment + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    check_config(node->is_object() || node->is_null(),
                 "override '" + assignment + "' descends through a non-object");
    start = dot + 1;
  }
}

nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::unordered_set<std::string> visiting;
  nlohmann::json doc = load_with_includes(path, &visiting);
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

}  // namespace unlearn
