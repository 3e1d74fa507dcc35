#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "unlearn/model.hpp"

namespace unlearn {

// Named-tensor archive (single f32 blob) plus a JSON manifest carrying the
// architecture id, construction seed and iteration count.
void save_checkpoint(const Classifier& model, const std::string& stem, std::int64_t iterations);

std::unique_ptr<Classifier> load_checkpoint(const std::string& stem,
                                            std::int64_t* iterations = nullptr);

// Hash of all parameter and buffer bytes; identifies a trained generator.
std::string checkpoint_hash(const Classifier& model);

}  // namespace unlearn
