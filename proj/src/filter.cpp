#include "unlearn/filter.hpp"

#include <algorithm>
#include <cmath>

#include "unlearn/common.hpp"

namespace unlearn {

FilterKind filter_from_string(const std::string& name) {
  if (name == "mean") return FilterKind::kMean;
  if (name == "median") return FilterKind::kMedian;
  if (name == "gaussian") return FilterKind::kGaussian;
  throw ConfigError("unknown filter '" + name + "' (expected mean, median or gaussian)");
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kMean: return "mean";
    case FilterKind::kMedian: return "median";
    case FilterKind::kGaussian: return "gaussian";
  }
  return "mean";
}

void FilterSpec::validate() const {
  check_config(window > 0 && window % 2 == 1, "filter window must be a positive odd integer");
  check_config(gaussian_sigma > 0.0, "gaussian sigma must be positive");
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(window) * window);
  const int r = window / 2;
  double sum = 0.0;
  for (int y = 0; y < window; ++y) {
    for (int x = 0; x < window; ++x) {
      const double dy = y - r, dx = x - r;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(y * window + x)] = v;
      sum += v;
    }
  }
  for (auto& v : k) v /= sum;
  return k;
}

Tensor lowpass(const Tensor& images, const FilterSpec& spec) {
  spec.validate();
  check_contract(images.rank() == 4, "lowpass: expected a rank-4 batch");
  const std::int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int r = spec.window / 2;
  const std::vector<double> gk = spec.kind == FilterKind::kGaussian
                                     ? gaussian_kernel(spec.window, spec.gaussian_sigma)
                                     : std::vector<double>();

  Tensor out(images.shape());
  std::vector<float> patch(static_cast<std::size_t>(spec.window) * spec.window);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          std::size_t m = 0;
          double acc = 0.0;
          for (int ky = -r; ky <= r; ++ky) {
            // edge replication
            const std::int64_t sy = std::clamp<std::int64_t>(y + ky, 0, h - 1);
            for (int kx = -r; kx <= r; ++kx) {
              const std::int64_t sx = std::clamp<std::int64_t>(x + kx, 0, w - 1);
              const float v = images.at(b, ch, sy, sx);
              switch (spec.kind) {
                case FilterKind::kMean:
                  acc += v;
                  break;
                case FilterKind::kGaussian:
                  acc += gk[m] * v;
                  break;
                case FilterKind::kMedian:
                  patch[m] = v;
                  break;
              }
              ++m;
            }
          }
          float result = 0.0f;
          if (spec.kind == FilterKind::kMean) {
            result = static_cast<float>(acc / static_cast<double>(m));
          } else if (spec.kind == FilterKind::kGaussian) {
            result = static_cast<float>(acc);
          } else {
            auto mid = patch.begin() + static_cast<std::ptrdiff_t>(m / 2);
            std::nth_element(patch.begin(), mid, patch.begin() + static_cast<std::ptrdiff_t>(m));
            result = *mid;
          }
          out.at(b, ch, y, x) = result;
        }
      }
    }
  }
  return out;
}

}  // namespace unlearn
