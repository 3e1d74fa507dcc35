#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unlearn/budget.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/model.hpp"
#include "unlearn/transform.hpp"

namespace unlearn {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_factor = 0.1;
  std::int64_t decay_period = 16000;

  double lr_at(std::int64_t iteration) const;
};

// SGD with momentum; weight decay enters as an L2 term added to the raw
// gradient: v <- momentum * v + (grad + wd * theta); theta <- theta - lr * v.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {}

  void step(std::vector<ParamView>& params, const std::vector<Tensor>& grads,
            std::int64_t iteration);

  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  std::vector<Tensor> velocity_;
};

// Shuffled-epoch minibatch order, reshuffled every pass.
class BatchSampler {
 public:
  BatchSampler(std::int64_t count, std::int64_t batch, RngStream stream);
  std::vector<std::int64_t> next();

 private:
  void reshuffle();

  std::int64_t count_;
  std::int64_t batch_;
  std::int64_t cursor_ = 0;
  RngStream stream_;
  std::vector<std::int64_t> order_;
};

struct ModelConfig {
  std::string architecture = "tinycnn";
  std::uint64_t seed = 0;
};

struct TrainConfig {
  std::int64_t iterations = 40000;
  std::int64_t batch = 128;
  SgdConfig sgd;
  std::optional<PerturbationBudget> attack;  // absent (or zero radius) = ERM
  TransformDistribution augment;
  bool augment_enabled = true;
  std::int64_t eval_period = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsLog {
  std::vector<double> loss;  // one entry per iteration
  struct Eval {
    std::int64_t iteration;
    double train_acc;
    double test_acc;
    double wall_seconds;  // since training start; never serialized to CSV
  };
  std::vector<Eval> evals;
  double total_seconds = 0.0;

  // Columns: iteration,loss,train_acc,test_acc (accuracy cells empty except
  // on evaluation rows).
  void write_csv(const std::string& path) const;
};

struct TrainResult {
  std::unique_ptr<Classifier> model;
  MetricsLog log;
};

// Minimizes the (adversarial, when an attack budget is present) training
// loss with the configured SGD schedule. `test_set` feeds the periodic
// accuracy log and may be null. On a non-finite loss the last finite
// parameters are written to `abort_checkpoint_stem` (when given) before a
// NumericError is thrown.
TrainResult train(const ExampleSet& train_set, const ExampleSet* test_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::string* abort_checkpoint_stem = nullptr);

// Deterministic accuracy in percent: plain rescale (no augmentation), argmax
// ties break toward the lowest class id.
double evaluate(const Classifier& model, const ExampleSet& set, std::int64_t batch = 256);

}  // namespace unlearn
