#include "unlearn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "unlearn/checkpoint.hpp"
#include "unlearn/common.hpp"
#include "unlearn/pgd.hpp"

namespace unlearn {

double SgdConfig::lr_at(std::int64_t iteration) const {
  if (decay_period <= 0 || decay_factor == 1.0) return lr;
  return lr * std::pow(decay_factor, static_cast<double>(iteration / decay_period));
}

void SgdOptimizer::step(std::vector<ParamView>& params, const std::vector<Tensor>& grads,
                        std::int64_t iteration) {
  check_contract(params.size() == grads.size(), "optimizer: parameter/gradient count mismatch");
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (auto& p : params) velocity_.emplace_back(p.tensor->shape());
  }
  const float lr = static_cast<float>(cfg_.lr_at(iteration));
  const float mu = static_cast<float>(cfg_.momentum);
  const float wd = static_cast<float>(cfg_.weight_decay);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& theta = *params[t].tensor;
    Tensor& v = velocity_[t];
    const Tensor& g = grads[t];
    check_contract(theta.same_shape(g), "optimizer: gradient shape mismatch");
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * theta[i]);
      theta[i] -= lr * v[i];
    }
  }
}

BatchSampler::BatchSampler(std::int64_t count, std::int64_t batch, RngStream stream)
    : count_(count), batch_(batch), stream_(stream) {
  check_contract(count > 0 && batch > 0, "batch sampler: empty dataset or batch");
  order_.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) order_[static_cast<std::size_t>(i)] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::int64_t i = count_ - 1; i > 0; --i) {
    const std::int64_t j =
        static_cast<std::int64_t>(stream_.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(j)]);
  }
  cursor_ = 0;
}

std::vector<std::int64_t> BatchSampler::next() {
  if (cursor_ >= count_) reshuffle();
  const std::int64_t take = std::min(batch_, count_ - cursor_);
  std::vector<std::int64_t> out(order_.begin() + cursor_, order_.begin() + cursor_ + take);
  cursor_ += take;
  return out;
}

void TrainConfig::validate() const {
  check_config(iterations >= 0, "training iterations must be nonnegative");
  check_config(batch > 0, "batch size must be positive");
  check_config(eval_period > 0, "eval period must be positive");
  if (attack) attack->validate();
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  check_data(out.good(), "cannot open " + path + " for writing");
  out << "iteration,loss,train_acc,test_acc\n";
  std::size_t e = 0;
  char buf[128];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    const auto iter = static_cast<std::int64_t>(i);
    if (e < evals.size() && evals[e].iteration == iter) {
      std::snprintf(buf, sizeof buf, "%lld,%.9g,%.4f,%.4f\n",
                    static_cast<long long>(iter), loss[i], evals[e].train_acc,
                    evals[e].test_acc);
      ++e;
    } else {
      std::snprintf(buf, sizeof buf, "%lld,%.9g,,\n", static_cast<long long>(iter), loss[i]);
    }
    out << buf;
  }
  // Final evaluations may land one past the last training iteration.
  for (; e < evals.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%lld,,%.4f,%.4f\n",
                  static_cast<long long>(evals[e].iteration), evals[e].train_acc,
                  evals[e].test_acc);
    out << buf;
  }
}

namespace {

void gather_batch(const ExampleSet& set, const std::vector<std::int64_t>& idx, Tensor* images,
                  std::vector<std::int32_t>* labels) {
  const std::int64_t slice = set.images.slice_size();
  const auto n = static_cast<std::int64_t>(idx.size());
  *images = Tensor({n, set.images.dim(1), set.images.dim(2), set.images.dim(3)});
  labels->resize(idx.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t src = idx[static_cast<std::size_t>(i)];
    std::copy(set.images.data() + src * slice, set.images.data() + (src + 1) * slice,
              images->data() + i * slice);
    (*labels)[static_cast<std::size_t>(i)] = set.labels[static_cast<std::size_t>(src)];
  }
}

}  // namespace

TrainResult train(const ExampleSet& train_set, const ExampleSet* test_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::string* abort_checkpoint_stem) {
  train_cfg.validate();
  check_contract(train_set.count() > 0, "train: dataset is empty");
  const int height = static_cast<int>(train_set.images.dim(2));
  const int width = static_cast<int>(train_set.images.dim(3));
  if (train_cfg.augment_enabled) train_cfg.augment.validate(height, width);

  TrainResult result;
  result.model = make_classifier(model_cfg.architecture, train_set.num_classes,
                                 train_set.input_chw(), model_cfg.seed);
  Classifier& model = *result.model;
  SgdOptimizer optimizer(train_cfg.sgd);
  auto params = model.parameters();

  const RngStream root(train_cfg.seed);
  BatchSampler sampler(train_set.count(), train_cfg.batch, root.derive("batches"));
  const TransformDistribution dist =
      train_cfg.augment_enabled ? train_cfg.augment : TransformDistribution::identity();

  const bool attack_on = train_cfg.attack && train_cfg.attack->radius > 0.0 &&
                         train_cfg.attack->steps > 0;

  const auto t0 = std::chrono::steady_clock::now();
  auto seconds_since_start = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto record_eval = [&](std::int64_t iteration) {
    MetricsLog::Eval e;
    e.iteration = iteration;
    e.train_acc = evaluate(model, train_set);
    e.test_acc = test_set ? evaluate(model, *test_set) : 0.0;
    e.wall_seconds = seconds_since_start();
    result.log.evals.push_back(e);
  };

  Tensor images;
  std::vector<std::int32_t> labels;
  std::vector<ImageTransform> transforms;
  for (std::int64_t iter = 0; iter < train_cfg.iterations; ++iter) {
    const std::vector<std::int64_t> idx = sampler.next();
    gather_batch(train_set, idx, &images, &labels);

    RngStream aug_stream = root.derive("augment", static_cast<std::uint64_t>(iter));
    transforms.clear();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      transforms.push_back(dist.sample(height, width, aug_stream));
    }
    Tensor batch = apply_transforms(images, dist, transforms);

    if (attack_on) {
      Tensor delta = pgd(batch, model.input_loss_fn(labels), *train_cfg.attack,
                         PgdInit::kUniformInBall,
                         root.derive("attack", static_cast<std::uint64_t>(iter)));
      for (std::int64_t i = 0; i < batch.size(); ++i) batch[i] += delta[i];
    }

    GradRequest req;
    req.params = true;
    LossGrads lg;
    try {
      lg = model.train_loss_and_grads(batch, labels, req);
    } catch (const NumericError& e) {
      if (abort_checkpoint_stem) {
        save_checkpoint(model, *abort_checkpoint_stem, iter);
      }
      throw NumericError("training aborted at iteration " + std::to_string(iter) + ": " +
                         e.what());
    }
    optimizer.step(params, lg.param_grads, iter);
    result.log.loss.push_back(lg.loss);

    if ((iter + 1) % train_cfg.eval_period == 0 || iter + 1 == train_cfg.iterations) {
      record_eval(iter + 1);
    }
  }
  result.log.total_seconds = seconds_since_start();
  return result;
}

double evaluate(const Classifier& model, const ExampleSet& set, std::int64_t batch) {
  check_contract(set.count() > 0, "evaluate: dataset is empty");
  const TransformDistribution identity = TransformDistribution::identity();
  const ImageTransform center =
      identity.center(static_cast<int>(set.images.dim(2)), static_cast<int>(set.images.dim(3)));
  std::int64_t correct = 0;
  Tensor images;
  std::vector<std::int32_t> labels;
  for (std::int64_t start = 0; start < set.count(); start += batch) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min(start + batch, set.count()); ++i) {
      idx.push_back(i);
    }
    gather_batch(set, idx, &images, &labels);
    Tensor rescaled = apply_transforms(images, identity, {&center, 1});
    Tensor logits = model.forward(rescaled);
    for (std::int64_t i = 0; i < logits.dim(0); ++i) {
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < logits.dim(1); ++j) {
        if (logits.at(i, j) > logits.at(i, best)) best = j;  // ties keep the lowest id
      }
      correct += best == labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(set.count());
}

}  // namespace unlearn
