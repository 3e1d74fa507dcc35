#pragma once

#include <functional>

#include "unlearn/budget.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

// Mean loss and its gradient with respect to the given (already perturbed)
// input batch. Implementations must be pure: identical inputs and model
// parameters produce identical outputs.
using InputLossFn = std::function<LossGrad(const Tensor& input)>;

enum class PgdInit { kZeros, kUniformInBall };

// Iterative signed-gradient search inside the budget's norm ball. Runs
// exactly budget.steps iterations and returns the final iterate, which never
// leaves the ball. A zero-radius budget short-circuits to a zero tensor.
Tensor pgd(const Tensor& x, const InputLossFn& loss_fn, const PerturbationBudget& budget,
           PgdInit init, RngStream init_stream);

// Same search from a caller-supplied start point (projected first).
Tensor pgd(const Tensor& x, const InputLossFn& loss_fn, const PerturbationBudget& budget,
           Tensor init);

}  // namespace unlearn
