#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

enum class NormKind { kLinf, kL2, kL1 };

NormKind norm_from_string(const std::string& name);
std::string to_string(NormKind norm);

// Parameters of one projected-gradient run: ball, step size, step count and
// gradient direction (+1 climbs the loss, -1 descends).
struct PerturbationBudget {
  NormKind norm = NormKind::kLinf;
  double radius = 0.0;
  double step = 0.0;
  int steps = 0;
  int direction = +1;

  void validate() const;
};

double norm_of(std::span<const float> v, NormKind norm);

// Euclidean-nearest projection of one flat vector onto the norm ball.
// Points already inside the ball are returned bit-identically.
void project_span(std::span<float> v, NormKind norm, double radius);

// Projects per leading-dimension slice for rank-4 batches, otherwise treats
// the whole tensor as a single vector. Throws NumericError on NaN/Inf input.
Tensor project(const Tensor& delta, const PerturbationBudget& budget);
void project_inplace(Tensor& delta, NormKind norm, double radius);

// One signed step followed by projection. For the Linf ball the step is
// step * sign(grad) with sign(0) = 0; for L1/L2 the gradient is scaled to
// unit L2 length per slice before stepping.
Tensor pgd_step(const Tensor& delta, const Tensor& grad, const PerturbationBudget& budget);

// Uniform sample inside the ball, drawn per leading-dimension slice for
// rank-4 tensors.
Tensor uniform_in_ball(const std::vector<std::int64_t>& shape, NormKind norm, double radius,
                       RngStream stream);

}  // namespace unlearn
