#include "unlearn/budget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "unlearn/common.hpp"

namespace unlearn {

NormKind norm_from_string(const std::string& name) {
  if (name == "linf") return NormKind::kLinf;
  if (name == "l2") return NormKind::kL2;
  if (name == "l1") return NormKind::kL1;
  throw ConfigError("unknown norm '" + name + "' (expected linf, l2 or l1)");
}

std::string to_string(NormKind norm) {
  switch (norm) {
    case NormKind::kLinf: return "linf";
    case NormKind::kL2: return "l2";
    case NormKind::kL1: return "l1";
  }
  return "linf";
}

void PerturbationBudget::validate() const {
  check_config(radius >= 0.0, "perturbation radius must be nonnegative");
  check_config(steps >= 0, "PGD step count must be nonnegative");
  check_config(steps == 0 || step > 0.0, "PGD step size must be positive when steps > 0");
  check_config(direction == 1 || direction == -1, "PGD direction must be +1 or -1");
}

double norm_of(std::span<const float> v, NormKind norm) {
  double acc = 0.0;
  switch (norm) {
    case NormKind::kLinf:
      for (float x : v) acc = std::max(acc, std::abs(static_cast<double>(x)));
      return acc;
    case NormKind::kL2:
      for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
      return std::sqrt(acc);
    case NormKind::kL1:
      for (float x : v) acc += std::abs(static_cast<double>(x));
      return acc;
  }
  return acc;
}

namespace {

// Keeps projected points strictly inside the ball despite float rounding,
// so that re-projection takes the exact identity path (idempotence).
constexpr double kInteriorShrink = 1.0 - 2e-7;

// Sort-based Euclidean projection onto the L1 ball: soft-threshold the
// magnitudes by the largest theta that lands the result on the sphere.
void project_l1(std::span<float> v, double radius) {
  double l1 = norm_of(v, NormKind::kL1);
  if (l1 <= radius) return;
  std::vector<double> mags(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mags[i] = std::abs(static_cast<double>(v[i]));
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumulative += mags[k];
    double candidate = (cumulative - radius) / static_cast<double>(k + 1);
    if (k + 1 == mags.size() || mags[k + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    double mag = std::abs(static_cast<double>(v[i])) - theta;
    v[i] = mag > 0.0
               ? static_cast<float>(std::copysign(mag * kInteriorShrink, v[i]))
               : 0.0f;
  }
}

}  // namespace

void project_span(std::span<float> v, NormKind norm, double radius) {
  switch (norm) {
    case NormKind::kLinf: {
      const float lo = static_cast<float>(-radius);
      const float hi = static_cast<float>(radius);
      for (float& x : v) x = std::clamp(x, lo, hi);
      return;
    }
    case NormKind::kL2: {
      double l2 = norm_of(v, NormKind::kL2);
      if (l2 <= radius) return;
      const float scale = static_cast<float>(radius / l2 * kInteriorShrink);
      for (float& x : v) x *= scale;
      return;
    }
    case NormKind::kL1:
      project_l1(v, radius);
      return;
  }
}

void project_inplace(Tensor& delta, NormKind norm, double radius) {
  if (delta.rank() == 4) {
    const std::int64_t slice = delta.slice_size();
    for (std::int64_t n = 0; n < delta.dim(0); ++n) {
      project_span({delta.data() + n * slice, static_cast<std::size_t>(slice)}, norm, radius);
    }
  } else {
    project_span({delta.data(), static_cast<std::size_t>(delta.size())}, norm, radius);
  }
}

Tensor project(const Tensor& delta, const PerturbationBudget& budget) {
  if (!all_finite(delta)) throw NumericError("project: input contains NaN or Inf");
  Tensor out = delta;
  project_inplace(out, budget.norm, budget.radius);
  return out;
}

Tensor pgd_step(const Tensor& delta, const Tensor& grad, const PerturbationBudget& budget) {
  check_contract(delta.same_shape(grad), "pgd_step: delta/gradient shape mismatch");
  Tensor out = delta;
  const float scaled = static_cast<float>(budget.direction * budget.step);
  if (budget.norm == NormKind::kLinf) {
    for (std::int64_t i = 0; i < out.size(); ++i) {
      const float g = grad[i];
      const float s = (g > 0.0f) ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
      out[i] += scaled * s;
    }
  } else {
    // Normalized-gradient ascent/descent: unit L2 direction per slice.
    const std::int64_t slices = out.rank() == 4 ? out.dim(0) : 1;
    const std::int64_t slice = out.rank() == 4 ? out.slice_size() : out.size();
    for (std::int64_t n = 0; n < slices; ++n) {
      const float* g = grad.data() + n * slice;
      float* d = out.data() + n * slice;
      double l2 = norm_of({g, static_cast<std::size_t>(slice)}, NormKind::kL2);
      if (l2 == 0.0) continue;
      const float k = static_cast<float>(static_cast<double>(scaled) / l2);
      for (std::int64_t i = 0; i < slice; ++i) d[i] += k * g[i];
    }
  }
  project_inplace(out, budget.norm, budget.radius);
  return out;
}

Tensor uniform_in_ball(const std::vector<std::int64_t>& shape, NormKind norm, double radius,
                       RngStream stream) {
  Tensor out(shape);
  if (radius <= 0.0) return out;
  const std::int64_t slices = out.rank() == 4 ? out.dim(0) : 1;
  const std::int64_t slice = out.rank() == 4 ? out.slice_size() : out.size();
  for (std::int64_t n = 0; n < slices; ++n) {
    float* d = out.data() + n * slice;
    switch (norm) {
      case NormKind::kLinf:
        for (std::int64_t i = 0; i < slice; ++i) {
          d[i] = static_cast<float>(stream.uniform(-radius, radius));
        }
        break;
      case NormKind::kL2: {
        double sq = 0.0;
        for (std::int64_t i = 0; i < slice; ++i) {
          d[i] = static_cast<float>(stream.normal());
          sq += static_cast<double>(d[i]) * d[i];
        }
        double r = radius * std::pow(stream.next_double(), 1.0 / static_cast<double>(slice));
        double scale = sq > 0.0 ? r / std::sqrt(sq) : 0.0;
        for (std::int64_t i = 0; i < slice; ++i) d[i] = static_cast<float>(d[i] * scale);
        break;
      }
      case NormKind::kL1: {
        // Exponential magnitudes with random signs are uniform on the L1
        // sphere after normalization; a radial beta factor fills the ball.
        double sum = 0.0;
        for (std::int64_t i = 0; i < slice; ++i) {
          double e = -std::log(std::max(stream.next_double(), 1e-300));
          d[i] = static_cast<float>(stream.next_u64() & 1 ? e : -e);
          sum += e;
        }
        double r = radius * std::pow(stream.next_double(), 1.0 / static_cast<double>(slice));
        double scale = sum > 0.0 ? r / sum : 0.0;
        for (std::int64_t i = 0; i < slice; ++i) d[i] = static_cast<float>(d[i] * scale);
        break;
      }
    }
  }
  return out;
}

}  // namespace unlearn
