#include "unlearn/model.hpp"

#include <utility>

#include "unlearn/common.hpp"
#include "unlearn/nn.hpp"
#include "unlearn/resnet.hpp"
#include "unlearn/tinycnn.hpp"

namespace unlearn {

InputLossFn Classifier::input_loss_fn(std::vector<std::int32_t> labels) const {
  return [this, labels = std::move(labels)](const Tensor& input) {
    GradRequest req;
    req.inputs = true;
    LossGrads lg = eval_loss_and_grads(input, labels, req);
    return LossGrad{lg.loss, std::move(lg.input_grad)};
  };
}

double mean_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels) {
  return nn::cross_entropy(logits, labels, static_cast<Tensor*>(nullptr));
}

namespace {

class TinyCnnClassifier final : public Classifier {
 public:
  TinyCnnClassifier(int num_classes, std::vector<std::int64_t> chw, std::uint64_t seed)
      : seed_(seed),
        chw_(std::move(chw)),
        net_(chw_[0], chw_[1], chw_[2], num_classes, RngStream(seed).derive("tinycnn")) {}

  const std::string& architecture() const override {
    static const std::string kName = "tinycnn";
    return kName;
  }
  int num_classes() const override { return static_cast<int>(net_.classes); }
  std::vector<std::int64_t> input_shape() const override { return chw_; }
  std::uint64_t init_seed() const override { return seed_; }

  Tensor forward(const Tensor& batch) const override { return net_.forward(batch, nullptr); }

  LossGrads eval_loss_and_grads(const Tensor& batch, std::span<const std::int32_t> labels,
                                GradRequest req) const override {
    return compute(batch, labels, req);
  }

  LossGrads train_loss_and_grads(const Tensor& batch, std::span<const std::int32_t> labels,
                                 GradRequest req) override {
    return compute(batch, labels, req);  // no normalization layers
  }

  std::vector<ParamView> parameters() override {
    return {{"conv1.weight", &net_.w1}, {"conv1.bias", &net_.b1},
            {"conv2.weight", &net_.w2}, {"conv2.bias", &net_.b2},
            {"fc.weight", &net_.wf},    {"fc.bias", &net_.bf}};
  }

  std::vector<ParamView> buffers() override { return {}; }

  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<TinyCnnClassifier>(*this);
  }

 private:
  LossGrads compute(const Tensor& batch, std::span<const std::int32_t> labels,
                    GradRequest req) const {
    LossGrads out;
    typename TinyCnnNet<float>::Cache cache;
    Tensor logits = net_.forward(batch, &cache);
    if (!all_finite(logits)) throw NumericError("tinycnn: non-finite logits");
    Tensor grad_logits;
    out.loss = nn::cross_entropy(logits, labels, (req.inputs || req.params) ? &grad_logits
                                                                            : nullptr);
    if (!std::isfinite(out.loss)) throw NumericError("tinycnn: non-finite loss");
    if (req.inputs || req.params) {
      auto g = net_.backward(cache, grad_logits, req.inputs);
      if (req.inputs) out.input_grad = std::move(g.input);
      if (req.params) {
        out.param_grads.reserve(6);
        out.param_grads.push_back(std::move(g.w1));
        out.param_grads.push_back(std::move(g.b1));
        out.param_grads.push_back(std::move(g.w2));
        out.param_grads.push_back(std::move(g.b2));
        out.param_grads.push_back(std::move(g.wf));
        out.param_grads.push_back(std::move(g.bf));
      }
    }
    return out;
  }

  std::uint64_t seed_;
  std::vector<std::int64_t> chw_;
  TinyCnnNet<float> net_;
};

class ResNet18Classifier final : public Classifier {
 public:
  ResNet18Classifier(int num_classes, std::vector<std::int64_t> chw, std::uint64_t seed)
      : seed_(seed),
        chw_(std::move(chw)),
        net_(chw_[0], num_classes, RngStream(seed).derive("resnet18")) {}

  const std::string& architecture() const override {
    static const std::string kName = "resnet18";
    return kName;
  }
  int num_classes() const override { return static_cast<int>(net_.classes); }
  std::vector<std::int64_t> input_shape() const override { return chw_; }
  std::uint64_t init_seed() const override { return seed_; }

  Tensor forward(const Tensor& batch) const override {
    return net_.forward_eval(batch, nullptr);
  }

  LossGrads eval_loss_and_grads(const Tensor& batch, std::span<const std::int32_t> labels,
                                GradRequest req) const override {
    typename ResNet18Net<float>::Cache cache;
    Tensor logits = net_.forward_eval(batch, &cache);
    return finish(logits, cache, labels, req);
  }

  LossGrads train_loss_and_grads(const Tensor& batch, std::span<const std::int32_t> labels,
                                 GradRequest req) override {
    typename ResNet18Net<float>::Cache cache;
    Tensor logits = net_.forward(batch, /*train=*/true, &cache);
    return finish(logits, cache, labels, req);
  }

  std::vector<ParamView> parameters() override {
    std::vector<ParamView> out;
    ResNet18Net<float>::visit_params(net_, [&](const std::string& name, Tensor& t) {
      out.push_back({name, &t});
    });
    return out;
  }

  std::vector<ParamView> buffers() override {
    std::vector<ParamView> out;
    ResNet18Net<float>::visit_buffers(net_, [&](const std::string& name, Tensor& t) {
      out.push_back({name, &t});
    });
    return out;
  }

  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<ResNet18Classifier>(*this);
  }

 private:
  LossGrads finish(const Tensor& logits, const typename ResNet18Net<float>::Cache& cache,
                   std::span<const std::int32_t> labels, GradRequest req) const {
    LossGrads out;
    if (!all_finite(logits)) throw NumericError("resnet18: non-finite logits");
    Tensor grad_logits;
    out.loss = nn::cross_entropy(logits, labels, (req.inputs || req.params) ? &grad_logits
                                                                            : nullptr);
    if (!std::isfinite(out.loss)) throw NumericError("resnet18: non-finite loss");
    if (req.inputs || req.params) {
      auto g = net_.backward(cache, grad_logits, req.inputs);
      if (req.inputs) out.input_grad = std::move(g.input);
      if (req.params) out.param_grads = std::move(g.params);
    }
    return out;
  }

  std::uint64_t seed_;
  std::vector<std::int64_t> chw_;
  ResNet18Net<float> net_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const std::string& architecture, int num_classes,
                                            const std::vector<std::int64_t>& input_chw,
                                            std::uint64_t seed) {
  check_config(input_chw.size() == 3, "classifier input shape must be {channels,height,width}");
  check_config(num_classes >= 2, "classifier needs at least two classes");
  if (architecture == "tinycnn") {
    return std::make_unique<TinyCnnClassifier>(num_classes, input_chw, seed);
  }
  if (architecture == "resnet18") {
    return std::make_unique<ResNet18Classifier>(num_classes, input_chw, seed);
  }
  throw ConfigError("unknown architecture '" + architecture + "'");
}

}  // namespace unlearn
