#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "unlearn/pgd.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

struct ParamView {
  std::string name;
  Tensor* tensor;
};

struct GradRequest {
  bool inputs = false;
  bool params = false;
};

struct LossGrads {
  double loss = 0.0;
  Tensor input_grad;               // empty unless requested
  std::vector<Tensor> param_grads; // aligned with parameters(); empty unless requested
};

// Differentiable classifier contract. Inputs are batches in the augmented
// [-0.5, 0.5] scale. Gradients are of the mean loss. Norm statistics stay
// frozen on the eval path, so eval calls are pure and safe to run
// concurrently; train_loss_and_grads may update internal statistics and
// requires exclusive access.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const std::string& architecture() const = 0;
  virtual int num_classes() const = 0;
  virtual std::vector<std::int64_t> input_shape() const = 0;  // {c, h, w}
  virtual std::uint64_t init_seed() const = 0;

  virtual Tensor forward(const Tensor& batch) const = 0;

  virtual LossGrads eval_loss_and_grads(const Tensor& batch,
                                        std::span<const std::int32_t> labels,
                                        GradRequest req) const = 0;
  virtual LossGrads train_loss_and_grads(const Tensor& batch,
                                         std::span<const std::int32_t> labels,
                                         GradRequest req) = 0;

  virtual std::vector<ParamView> parameters() = 0;
  virtual std::vector<ParamView> buffers() = 0;

  virtual std::unique_ptr<Classifier> clone() const = 0;

  // Loss-and-input-gradient closure for PGD against fixed labels.
  InputLossFn input_loss_fn(std::vector<std::int32_t> labels) const;
};

double mean_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels);

std::unique_ptr<Classifier> make_classifier(const std::string& architecture, int num_classes,
                                            const std::vector<std::int64_t>& input_chw,
                                            std::uint64_t seed);

}  // namespace unlearn
