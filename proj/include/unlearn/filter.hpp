#pragma once

#include <string>
#include <vector>

#include "unlearn/tensor.hpp"

namespace unlearn {

enum class FilterKind { kMean, kMedian, kGaussian };

FilterKind filter_from_string(const std::string& name);
std::string to_string(FilterKind kind);

struct FilterSpec {
  FilterKind kind = FilterKind::kMean;
  int window = 3;
  double gaussian_sigma = 1.0;

  void validate() const;
};

// Normalized 2-D Gaussian taps (window x window, row-major); weights sum to 1.
std::vector<double> gaussian_kernel(int window, double sigma);

// Per-channel low-pass filtering with edge-replication padding. Input and
// output are in raw [0,1] scale.
Tensor lowpass(const Tensor& images, const FilterSpec& spec);

}  // namespace unlearn
