#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unlearn/noise_bank.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Labeled images in raw [0,1] pixel scale with stable per-example ids.
struct ExampleSet {
  Tensor images;  // [count, channels, height, width]
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> ids;
  int num_classes = 0;
  std::vector<std::int64_t> perturbed_ids;  // ids released with added noise

  std::int64_t count() const { return images.rank() == 4 ? images.dim(0) : 0; }
  std::vector<std::int64_t> input_chw() const {
    return {images.dim(1), images.dim(2), images.dim(3)};
  }

  void validate() const;
};

struct SyntheticSpec {
  int classes = 2;
  int per_class = 100;
  int channels = 3;
  int height = 8;
  int width = 8;
  std::uint64_t seed = 0;
  std::string split = "train";  // picks the per-example noise stream

  // Class signal: a mirror-symmetric coarse block pattern of this amplitude
  // around mid-gray, overlaid with per-example Gaussian pixel noise. The
  // signal is deliberately low-contrast so that imperceptible defensive
  // noise is able to dominate it.
  double pattern_amplitude = 0.06;
  double noise_sigma = 0.08;
  int pattern_cell = 4;
};

// Deterministic under (spec.seed, spec.split); both splits of one seed share
// the same class templates.
ExampleSet make_synthetic(const SyntheticSpec& spec);

// Standard CIFAR binary batches: 3073-byte records for CIFAR-10 and
// 3074-byte records (coarse + fine label) for CIFAR-100.
ExampleSet load_cifar10(const std::string& dir, const std::string& split);
ExampleSet load_cifar100(const std::string& dir, const std::string& split);

// Flat little-endian float32 image file plus JSON sidecar.
void save_examples(const ExampleSet& set, const std::string& stem);
ExampleSet load_examples(const std::string& stem);

// Releases a protected dataset: adds bank noise to a seeded uniform sample
// of round(percentage * count) examples, clips back to [0,1] and records the
// perturbed ids. `quantize` additionally rounds every released pixel to the
// 8-bit grid.
ExampleSet mix_protected(const ExampleSet& clean, const NoiseBank& bank, double percentage,
                         std::uint64_t seed, bool quantize = false);

}  // namespace unlearn
