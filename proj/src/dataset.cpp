#include "unlearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "unlearn/common.hpp"
#include "unlearn/io_util.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

void ExampleSet::validate() const {
  check_data(images.rank() == 4, "example set: images must be [count,c,h,w]");
  check_data(num_classes > 0, "example set: num_classes must be positive");
  const std::int64_t n = count();
  check_data(static_cast<std::int64_t>(labels.size()) == n, "example set: label count mismatch");
  check_data(static_cast<std::int64_t>(ids.size()) == n, "example set: id count mismatch");
  for (std::int64_t i = 0; i < images.size(); ++i) {
    check_data(images[i] >= 0.0f && images[i] <= 1.0f,
               "example set: pixel outside [0,1] raw scale");
  }
  std::unordered_set<std::int64_t> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check_data(seen.insert(ids[i]).second,
               "example set: duplicate id " + std::to_string(ids[i]));
    check_data(labels[i] >= 0 && labels[i] < num_classes,
               "example set: label " + std::to_string(labels[i]) + " out of range");
  }
}

ExampleSet make_synthetic(const SyntheticSpec& spec) {
  check_config(spec.classes >= 2, "synthetic: need at least two classes");
  check_config(spec.per_class > 0, "synthetic: per-class count must be positive");
  check_config(spec.channels > 0 && spec.height > 0 && spec.width > 0,
               "synthetic: image dimensions must be positive");
  check_config(spec.pattern_cell > 0, "synthetic: pattern cell must be positive");

  const RngStream root(spec.seed);
  // Templates depend on the seed only, so train/test splits share the task.
  Tensor templates({spec.classes, spec.channels, spec.height, spec.width});
  for (int cls = 0; cls < spec.classes; ++cls) {
    RngStream tmpl = root.derive("template", cls);
    const int cells_y = (spec.height + spec.pattern_cell - 1) / spec.pattern_cell;
    const int cells_x = (spec.width + spec.pattern_cell - 1) / spec.pattern_cell;
    for (int ch = 0; ch < spec.channels; ++ch) {
      std::vector<double> cell_sign(static_cast<std::size_t>(cells_y * cells_x));
      for (auto& s : cell_sign) s = tmpl.next_u64() & 1 ? 1.0 : -1.0;
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          // Mirror-symmetric so horizontal flips preserve the class signal.
          const int xs = std::min(x, spec.width - 1 - x);
          const int cell = (y / spec.pattern_cell) * cells_x + xs / spec.pattern_cell;
          templates.at(cls, ch, y, x) = static_cast<float>(
              0.5 + spec.pattern_amplitude * cell_sign[static_cast<std::size_t>(cell)]);
        }
      }
    }
  }

  const std::int64_t n = static_cast<std::int64_t>(spec.classes) * spec.per_class;
  ExampleSet set;
  set.num_classes = spec.classes;
  set.images = Tensor({n, spec.channels, spec.height, spec.width});
  set.labels.resize(static_cast<std::size_t>(n));
  set.ids.resize(static_cast<std::size_t>(n));
  const std::int64_t slice = set.images.slice_size();
  for (std::int64_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % spec.classes);
    set.labels[static_cast<std::size_t>(i)] = cls;
    set.ids[static_cast<std::size_t>(i)] = i;
    RngStream noise = root.derive(spec.split, i);
    const float* base = templates.data() + cls * slice;
    float* dst = set.images.data() + i * slice;
    for (std::int64_t j = 0; j < slice; ++j) {
      const double v = base[j] + spec.noise_sigma * noise.normal();
      dst[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  set.validate();
  return set;
}

namespace {

ExampleSet load_cifar_files(const std::vector<std::string>& paths, int num_classes,
                            int label_bytes, int label_offset) {
  constexpr std::int64_t kChannels = 3, kSide = 32;
  const std::int64_t pixels = kChannels * kSide * kSide;
  const std::int64_t record = label_bytes + pixels;

  std::vector<char> raw;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    check_data(in.good(), "cannot open CIFAR batch " + path);
    std::vector<char> chunk((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    check_data(!chunk.empty() && chunk.size() % static_cast<std::size_t>(record) == 0,
               path + ": size is not a multiple of the record length");
    raw.insert(raw.end(), chunk.begin(), chunk.end());
  }

  const std::int64_t n = static_cast<std::int64_t>(raw.size()) / record;
  ExampleSet set;
  set.num_classes = num_classes;
  set.images = Tensor({n, kChannels, kSide, kSide});
  set.labels.resize(static_cast<std::size_t>(n));
  set.ids.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(raw.data() + i * record);
    const int label = rec[label_offset];
    check_data(label < num_classes, "CIFAR record " + std::to_string(i) +
                                        ": label " + std::to_string(label) + " out of range");
    set.labels[static_cast<std::size_t>(i)] = label;
    set.ids[static_cast<std::size_t>(i)] = i;
    float* dst = set.images.data() + i * pixels;
    for (std::int64_t j = 0; j < pixels; ++j) {
      dst[j] = static_cast<float>(rec[label_bytes + j]) / 255.0f;
    }
  }
  set.validate();
  return set;
}

}  // namespace

ExampleSet load_cifar10(const std::string& dir, const std::string& split) {
  std::vector<std::string> paths;
  if (split == "train") {
    for (int b = 1; b <= 5; ++b) paths.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
  } else if (split == "test") {
    paths.push_back(dir + "/test_batch.bin");
  } else {
    throw ConfigError("cifar10 split must be 'train' or 'test'");
  }
  return load_cifar_files(paths, 10, 1, 0);
}

ExampleSet load_cifar100(const std::string& dir, const std::string& split) {
  check_config(split == "train" || split == "test", "cifar100 split must be 'train' or 'test'");
  // 3074-byte records: coarse label, fine label, then pixels.
  return load_cifar_files({dir + "/" + split + ".bin"}, 100, 2, 1);
}

void save_examples(const ExampleSet& set, const std::string& stem) {
  set.validate();
  write_f32_file(stem + ".f32", set.images);
  nlohmann::json meta;
  meta["kind"] = "example-set";
  meta["shape"] = set.images.shape();
  meta["scale"] = "unit";  // raw [0,1] pixels
  meta["num_classes"] = set.num_classes;
  meta["ids"] = set.ids;
  meta["labels"] = set.labels;
  meta["perturbed_ids"] = set.perturbed_ids;
  write_json_file(stem + ".json", meta);
}

ExampleSet load_examples(const std::string& stem) {
  nlohmann::json meta = read_json_file(stem + ".json");
  check_data(meta.value("kind", "") == "example-set",
             stem + ".json is not an example-set manifest");
  check_data(meta.value("scale", "") == "unit", stem + ": unsupported pixel scale");
  ExampleSet set;
  set.num_classes = meta.at("num_classes").get<int>();
  set.ids = meta.at("ids").get<std::vector<std::int64_t>>();
  set.labels = meta.at("labels").get<std::vector<std::int32_t>>();
  if (meta.contains("perturbed_ids")) {
    set.perturbed_ids = meta["perturbed_ids"].get<std::vector<std::int64_t>>();
  }
  set.images = read_f32_file(stem + ".f32", meta.at("shape").get<std::vector<std::int64_t>>());
  set.validate();
  return set;
}

ExampleSet mix_protected(const ExampleSet& clean, const NoiseBank& bank, double percentage,
                         std::uint64_t seed, bool quantize) {
  check_config(percentage >= 0.0 && percentage <= 1.0,
               "protection percentage must be in [0,1]");
  clean.validate();
  const std::int64_t n = clean.count();
  const std::int64_t k = std::llround(percentage * static_cast<double>(n));

  // Seeded uniform sample without replacement (partial Fisher-Yates).
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  RngStream stream = RngStream(seed).derive("mix");
  for (std::int64_t i = 0; i < k; ++i) {
    const std::int64_t j =
        i + static_cast<std::int64_t>(stream.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::int64_t> selected(order.begin(), order.begin() + k);
  std::sort(selected.begin(), selected.end());

  std::unordered_map<std::int64_t, std::int64_t> bank_row;
  bank_row.reserve(bank.ids.size());
  for (std::size_t i = 0; i < bank.ids.size(); ++i) {
    bank_row.emplace(bank.ids[i], static_cast<std::int64_t>(i));
  }
  for (std::int64_t pos : selected) {
    const std::int64_t id = clean.ids[static_cast<std::size_t>(pos)];
    check_data(bank_row.count(id) != 0,
               "noise bank does not cover selected id " + std::to_string(id));
  }
  check_data(bank.deltas.slice_size() == clean.images.slice_size() || k == 0,
             "noise bank image shape does not match the dataset");

  ExampleSet out = clean;
  out.perturbed_ids.clear();
  const std::int64_t slice = out.images.slice_size();
  for (std::int64_t pos : selected) {
    const std::int64_t id = clean.ids[static_cast<std::size_t>(pos)];
    const float* delta = bank.deltas.data() + bank_row.at(id) * slice;
    float* img = out.images.data() + pos * slice;
    for (std::int64_t j = 0; j < slice; ++j) {
      img[j] = std::clamp(img[j] + delta[j], 0.0f, 1.0f);
    }
    out.perturbed_ids.push_back(id);
  }
  if (quantize) {
    for (std::int64_t i = 0; i < out.images.size(); ++i) {
      out.images[i] = std::round(out.images[i] * 255.0f) / 255.0f;
    }
  }
  return out;
}

}  // namespace unlearn
