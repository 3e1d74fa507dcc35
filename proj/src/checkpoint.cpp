#include "unlearn/checkpoint.hpp"

#include <json.hpp>

#include "unlearn/common.hpp"
#include "unlearn/io_util.hpp"
#include "unlearn/noise_bank.hpp"

namespace unlearn {

namespace {

// Read-only access to the tensor views of a const model.
std::vector<ParamView> views_of(const Classifier& model, bool buffers) {
  auto& mutable_model = const_cast<Classifier&>(model);
  return buffers ? mutable_model.buffers() : mutable_model.parameters();
}

}  // namespace

void save_checkpoint(const Classifier& model, const std::string& stem,
                     std::int64_t iterations) {
  nlohmann::json manifest;
  manifest["kind"] = "checkpoint";
  manifest["architecture"] = model.architecture();
  manifest["num_classes"] = model.num_classes();
  manifest["input_shape"] = model.input_shape();
  manifest["seed"] = model.init_seed();
  manifest["iterations"] = iterations;

  std::int64_t total = 0;
  nlohmann::json tensors = nlohmann::json::array();
  auto add = [&](const std::vector<ParamView>& views, const char* group) {
    for (const auto& v : views) {
      tensors.push_back({{"name", v.name},
                         {"group", group},
                         {"shape", v.tensor->shape()},
                         {"offset", total}});
      total += v.tensor->size();
    }
  };
  const auto params = views_of(model, false);
  const auto buffers = views_of(model, true);
  add(params, "param");
  add(buffers, "buffer");
  manifest["tensors"] = tensors;

  Tensor blob({total});
  std::int64_t at = 0;
  for (const auto* group : {&params, &buffers}) {
    for (const auto& v : *group) {
      std::copy(v.tensor->begin(), v.tensor->end(), blob.data() + at);
      at += v.tensor->size();
    }
  }
  write_f32_file(stem + ".f32", blob);
  write_json_file(stem + ".json", manifest);
}

std::unique_ptr<Classifier> load_checkpoint(const std::string& stem, std::int64_t* iterations) {
  nlohmann::json manifest = read_json_file(stem + ".json");
  check_data(manifest.value("kind", "") == "checkpoint",
             stem + ".json is not a checkpoint manifest");
  auto model = make_classifier(manifest.at("architecture").get<std::string>(),
                               manifest.at("num_classes").get<int>(),
                               manifest.at("input_shape").get<std::vector<std::int64_t>>(),
                               manifest.at("seed").get<std::uint64_t>());
  if (iterations) *iterations = manifest.value("iterations", std::int64_t{0});

  std::int64_t total = 0;
  for (const auto& t : manifest.at("tensors")) {
    std::int64_t n = 1;
    for (auto d : t.at("shape").get<std::vector<std::int64_t>>()) n *= d;
    total += n;
  }
  Tensor blob = read_f32_file(stem + ".f32", {total});

  auto params = model->parameters();
  auto buffers = model->buffers();
  auto find = [&](const std::string& name, const std::string& group) -> Tensor* {
    auto& views = group == "param" ? params : buffers;
    for (auto& v : views) {
      if (v.name == name) return v.tensor;
    }
    throw DataError(stem + ": checkpoint tensor '" + name + "' not in model");
  };
  for (const auto& t : manifest.at("tensors")) {
    Tensor* dst = find(t.at("name").get<std::string>(), t.at("group").get<std::string>());
    const auto offset = t.at("offset").get<std::int64_t>();
    check_data(offset + dst->size() <= blob.size(), stem + ": checkpoint blob too short");
    std::copy(blob.data() + offset, blob.data() + offset + dst->size(), dst->data());
  }
  return model;
}

std::string checkpoint_hash(const Classifier& model) {
  std::vector<float> bytes;
  for (bool buffers : {false, true}) {
    for (const auto& v : views_of(model, buffers)) {
      bytes.insert(bytes.end(), v.tensor->begin(), v.tensor->end());
    }
  }
  return fnv1a_hex(bytes.data(), bytes.size() * sizeof(float));
}

}  // namespace unlearn
