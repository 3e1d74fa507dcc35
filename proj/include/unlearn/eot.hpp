#pragma once

#include <functional>
#include <span>
#include <vector>

#include "unlearn/budget.hpp"
#include "unlearn/model.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"
#include "unlearn/transform.hpp"

namespace unlearn {

struct EotResult {
  Tensor grad;       // d(mean loss)/d(delta_u), averaged over the J samples
  double mean_loss;  // loss averaged over the J samples
};

// Randomness sources for one estimator call. `transforms(j)` returns either
// a single transform shared by the batch (generator training follows the
// per-minibatch sampling of the training algorithm) or one per example
// (crafting derives per-id streams so banks are batching-invariant).
// `adv_init(j, shape)` supplies the inner maximizer's start point.
struct EotSampler {
  std::function<std::vector<ImageTransform>(int j)> transforms;
  std::function<Tensor(int j, const std::vector<std::int64_t>& shape)> adv_init;
};

// Gradient of the expected adversarial loss with respect to the defensive
// perturbation: for each of J sampled transforms, finds the inner-max
// adversarial perturbation with PGD, then differentiates the loss at that
// fixed point back through the transform (the maximizer is treated as a
// constant, never differentiated through). Per-sample terms are averaged in
// double, so degenerate distributions give J-independent results.
EotResult eot_gradient_with(const Tensor& x_raw, const Tensor& delta_u,
                            std::span<const std::int32_t> labels, const Classifier& model,
                            const TransformDistribution& dist, int J,
                            const PerturbationBudget& adv_budget, const EotSampler& sampler);

// Spec-level entry point: samples one transform per EOT draw from `seed`.
EotResult eot_rem_gradient(const Tensor& x_raw, const Tensor& delta_u,
                           std::span<const std::int32_t> labels, const Classifier& model,
                           const TransformDistribution& dist, int J,
                           const PerturbationBudget& adv_budget, RngStream seed);

}  // namespace unlearn
