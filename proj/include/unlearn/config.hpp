#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace unlearn {

// Loads a JSON config, resolving an optional "include" list (paths relative
// to the including file, merged in order, with the including document
// winning) and then applying dotted-path overrides like "train.lr=0.05".
nlohmann::json load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});

// Deep merge: objects merge key-wise, everything else is replaced by `over`.
void merge_config(nlohmann::json& base, const nlohmann::json& over);

// "a.b.c=value"; the value is parsed as JSON when possible, else kept as a
// string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace unlearn
