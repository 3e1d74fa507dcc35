#include "unlearn/pgd.hpp"

#include <cassert>
#include <cmath>

#include "unlearn/common.hpp"

namespace unlearn {

Tensor pgd(const Tensor& x, const InputLossFn& loss_fn, const PerturbationBudget& budget,
           Tensor init) {
  budget.validate();
  if (budget.radius <= 0.0) return Tensor(x.shape());
  check_contract(init.same_shape(x), "pgd: init/input shape mismatch");

  Tensor delta = std::move(init);
  project_inplace(delta, budget.norm, budget.radius);

  Tensor point = x;
  for (int k = 0; k < budget.steps; ++k) {
    for (std::int64_t i = 0; i < point.size(); ++i) point[i] = x[i] + delta[i];
    LossGrad lg = loss_fn(point);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("pgd: non-finite loss at step " + std::to_string(k + 1));
    }
    delta = pgd_step(delta, lg.grad, budget);
#ifndef NDEBUG
    const std::int64_t slices = delta.rank() == 4 ? delta.dim(0) : 1;
    const std::int64_t slice = delta.rank() == 4 ? delta.slice_size() : delta.size();
    for (std::int64_t n = 0; n < slices; ++n) {
      assert(norm_of({delta.data() + n * slice, static_cast<std::size_t>(slice)}, budget.norm) <=
             budget.radius + 1e-6);
    }
#endif
  }
  return delta;
}

Tensor pgd(const Tensor& x, const InputLossFn& loss_fn, const PerturbationBudget& budget,
           PgdInit init, RngStream init_stream) {
  budget.validate();
  if (budget.radius <= 0.0) return Tensor(x.shape());
  Tensor start = init == PgdInit::kZeros
                     ? Tensor(x.shape())
                     : uniform_in_ball(x.shape(), budget.norm, budget.radius,
                                       std::move(init_stream));
  return pgd(x, loss_fn, budget, std::move(start));
}

}  // namespace unlearn
