#include "unlearn/eot.hpp"

#include <cmath>

#include "unlearn/common.hpp"
#include "unlearn/pgd.hpp"

namespace unlearn {

EotResult eot_gradient_with(const Tensor& x_raw, const Tensor& delta_u,
                            std::span<const std::int32_t> labels, const Classifier& model,
                            const TransformDistribution& dist, int J,
                            const PerturbationBudget& adv_budget, const EotSampler& sampler) {
  check_config(J >= 1, "EOT sample count must be at least 1");
  check_contract(adv_budget.direction == +1, "inner maximizer must climb the loss (c=+1)");
  check_contract(x_raw.same_shape(delta_u), "x and delta_u shapes differ");

  Tensor noised(x_raw.shape());
  for (std::int64_t i = 0; i < noised.size(); ++i) noised[i] = x_raw[i] + delta_u[i];

  std::vector<double> grad_acc(static_cast<std::size_t>(x_raw.size()), 0.0);
  double loss_acc = 0.0;
  double first_loss = 0.0;
  bool losses_equal = true;
  std::vector<std::int32_t> label_vec(labels.begin(), labels.end());

  for (int j = 0; j < J; ++j) {
    const std::vector<ImageTransform> ts = sampler.transforms(j);
    Tensor point = apply_transforms(noised, dist, ts);

    Tensor attacked = point;
    if (adv_budget.radius > 0.0 && adv_budget.steps > 0) {
      Tensor init = sampler.adv_init(j, point.shape());
      Tensor delta_a = pgd(point, model.input_loss_fn(label_vec), adv_budget, std::move(init));
      for (std::int64_t i = 0; i < attacked.size(); ++i) attacked[i] += delta_a[i];
    }

    GradRequest req;
    req.inputs = true;
    LossGrads lg = model.eval_loss_and_grads(attacked, labels, req);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("eot gradient: non-finite loss at sample " + std::to_string(j + 1));
    }
    Tensor gu = transforms_backward(lg.input_grad, dist, ts, x_raw.shape());
    for (std::int64_t i = 0; i < gu.size(); ++i) {
      grad_acc[static_cast<std::size_t>(i)] += static_cast<double>(gu[i]);
    }
    loss_acc += lg.loss;
    if (j == 0) first_loss = lg.loss;
    losses_equal &= lg.loss == first_loss;
  }

  EotResult out;
  out.grad = Tensor(x_raw.shape());
  for (std::int64_t i = 0; i < out.grad.size(); ++i) {
    out.grad[i] =
        static_cast<float>(grad_acc[static_cast<std::size_t>(i)] / static_cast<double>(J));
  }
  // Means of identical per-sample values reproduce the value itself, so a
  // point-mass distribution yields J-independent output.
  out.mean_loss = losses_equal ? first_loss : loss_acc / static_cast<double>(J);
  return out;
}

EotResult eot_rem_gradient(const Tensor& x_raw, const Tensor& delta_u,
                           std::span<const std::int32_t> labels, const Classifier& model,
                           const TransformDistribution& dist, int J,
                           const PerturbationBudget& adv_budget, RngStream seed) {
  const int h = static_cast<int>(x_raw.dim(2));
  const int w = static_cast<int>(x_raw.dim(3));
  EotSampler sampler;
  sampler.transforms = [&dist, h, w, seed](int j) {
    RngStream stream = seed.derive("transform", static_cast<std::uint64_t>(j));
    return std::vector<ImageTransform>{dist.sample(h, w, stream)};
  };
  // One start point per estimator call, shared by the J inner maximizations:
  // a point-mass transform distribution then averages J identical terms.
  sampler.adv_init = [&adv_budget, seed](int, const std::vector<std::int64_t>& shape) {
    return uniform_in_ball(shape, adv_budget.norm, adv_budget.radius, seed.derive("adv-init"));
  };
  return eot_gradient_with(x_raw, delta_u, labels, model, dist, J, adv_budget, sampler);
}

}  // namespace unlearn
