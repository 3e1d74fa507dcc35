#include "unlearn/generator.hpp"

#include <cmath>
#include <unordered_set>

#include "unlearn/checkpoint.hpp"
#include "unlearn/common.hpp"
#include "unlearn/eot.hpp"
#include "unlearn/pgd.hpp"

namespace unlearn {

void GeneratorConfig::validate() const {
  check_config(mode == "em" || mode == "rem" || mode == "tap",
               "generator mode must be em, rem or tap");
  check_config(rho_u >= 0.0 && rho_a >= 0.0, "radii must be nonnegative");
  check_config(steps_u >= 0 && steps_a >= 0, "PGD step counts must be nonnegative");
  check_config(iterations >= 0, "iteration count must be nonnegative");
  check_config(batch > 0, "batch size must be positive");
  check_config(tap_steps >= 0, "TAP step count must be nonnegative");
  if (mode == "rem") {
    check_config(eot_samples >= 1, "rem needs at least one EOT sample");
    check_config(rho_u > rho_a || allow_degenerate_radii,
                 "rem requires rho_u > rho_a; a smaller defensive radius cannot suppress the "
                 "adversarial loss (set allow_degenerate_radii to override)");
  }
}

void to_json(nlohmann::json& j, const GeneratorConfig& cfg) {
  j = nlohmann::json{{"mode", cfg.mode},
                     {"architecture", cfg.architecture},
                     {"norm", to_string(cfg.norm)},
                     {"rho_u", cfg.rho_u},
                     {"rho_a", cfg.rho_a},
                     {"alpha_u", cfg.alpha_u},
                     {"alpha_a", cfg.alpha_a},
                     {"steps_u", cfg.steps_u},
                     {"steps_a", cfg.steps_a},
                     {"eot_samples", cfg.eot_samples},
                     {"iterations", cfg.iterations},
                     {"batch", cfg.batch},
                     {"lr", cfg.sgd.lr},
                     {"momentum", cfg.sgd.momentum},
                     {"weight_decay", cfg.sgd.weight_decay},
                     {"lr_decay_factor", cfg.sgd.decay_factor},
                     {"lr_decay_period", cfg.sgd.decay_period},
                     {"seed", cfg.seed},
                     {"allow_degenerate_radii", cfg.allow_degenerate_radii},
                     {"augment_enabled", cfg.augment_enabled},
                     {"augment_pad", cfg.augment.pad},
                     {"augment_flip_prob", cfg.augment.flip_prob},
                     {"tap_steps", cfg.tap_steps},
                     {"tap_alpha", cfg.tap_alpha}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& cfg) {
  cfg.mode = j.value("mode", cfg.mode);
  cfg.architecture = j.value("architecture", cfg.architecture);
  if (j.contains("norm")) cfg.norm = norm_from_string(j["norm"].get<std::string>());
  cfg.rho_u = j.value("rho_u", cfg.rho_u);
  cfg.rho_a = j.value("rho_a", cfg.rho_a);
  cfg.alpha_u = j.value("alpha_u", cfg.alpha_u);
  cfg.alpha_a = j.value("alpha_a", cfg.alpha_a);
  cfg.steps_u = j.value("steps_u", cfg.steps_u);
  cfg.steps_a = j.value("steps_a", cfg.steps_a);
  cfg.eot_samples = j.value("eot_samples", cfg.eot_samples);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.sgd.lr = j.value("lr", cfg.sgd.lr);
  cfg.sgd.momentum = j.value("momentum", cfg.sgd.momentum);
  cfg.sgd.weight_decay = j.value("weight_decay", cfg.sgd.weight_decay);
  cfg.sgd.decay_factor = j.value("lr_decay_factor", cfg.sgd.decay_factor);
  cfg.sgd.decay_period = j.value("lr_decay_period", cfg.sgd.decay_period);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.allow_degenerate_radii = j.value("allow_degenerate_radii", cfg.allow_degenerate_radii);
  cfg.augment_enabled = j.value("augment_enabled", cfg.augment_enabled);
  cfg.augment.pad = j.value("augment_pad", cfg.augment.pad);
  cfg.augment.flip_prob = j.value("augment_flip_prob", cfg.augment.flip_prob);
  cfg.tap_steps = j.value("tap_steps", cfg.tap_steps);
  cfg.tap_alpha = j.value("tap_alpha", cfg.tap_alpha);
}

std::vector<std::int32_t> cyclic_permutation(int num_classes) {
  std::vector<std::int32_t> g(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    g[static_cast<std::size_t>(c)] = static_cast<std::int32_t>((c + 1) % num_classes);
  }
  return g;
}

namespace {

struct ModeSetup {
  TransformDistribution dist;
  int eot_samples = 1;
  PerturbationBudget u_step;  // one signed descent step on delta_u
  PerturbationBudget attack;  // inner maximizer
};

ModeSetup setup_for(const GeneratorConfig& cfg, bool em_mode) {
  ModeSetup s;
  s.dist = (!em_mode && cfg.augment_enabled) ? cfg.augment : TransformDistribution::identity();
  s.eot_samples = em_mode ? 1 : cfg.eot_samples;
  s.u_step = {cfg.norm, cfg.rho_u, cfg.alpha_u_or_default(), cfg.steps_u, -1};
  const double rho_a = em_mode ? 0.0 : cfg.rho_a;
  s.attack = {cfg.norm, rho_a, rho_a > 0.0 ? cfg.alpha_a_or_default() : 1.0, cfg.steps_a, +1};
  return s;
}

void gather(const ExampleSet& set, const std::vector<std::int64_t>& idx, Tensor* images,
            std::vector<std::int32_t>* labels, std::vector<std::int64_t>* ids) {
  const std::int64_t slice = set.images.slice_size();
  const auto n = static_cast<std::int64_t>(idx.size());
  *images = Tensor({n, set.images.dim(1), set.images.dim(2), set.images.dim(3)});
  labels->resize(idx.size());
  if (ids) ids->resize(idx.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t src = idx[static_cast<std::size_t>(i)];
    std::copy(set.images.data() + src * slice, set.images.data() + (src + 1) * slice,
              images->data() + i * slice);
    (*labels)[static_cast<std::size_t>(i)] = set.labels[static_cast<std::size_t>(src)];
    if (ids) (*ids)[static_cast<std::size_t>(i)] = set.ids[static_cast<std::size_t>(src)];
  }
}

// K_u rounds of signed descent on the defensive perturbation under the
// expected adversarial loss.
Tensor minimize_defensive_noise(const Tensor& images, std::span<const std::int32_t> labels,
                                const Classifier& model, const ModeSetup& s,
                                const std::function<EotSampler(int k)>& sampler_for) {
  Tensor delta_u(images.shape());
  if (s.u_step.radius <= 0.0) return delta_u;
  for (int k = 0; k < s.u_step.steps; ++k) {
    EotResult res = eot_gradient_with(images, delta_u, labels, model, s.dist, s.eot_samples,
                                      s.attack, sampler_for(k));
    delta_u = pgd_step(delta_u, res.grad, s.u_step);
  }
  return delta_u;
}

GeneratorResult train_generator(const ExampleSet& dataset, const GeneratorConfig& cfg,
                                bool em_mode) {
  cfg.validate();
  dataset.validate();
  const ModeSetup s = setup_for(cfg, em_mode);
  const int height = static_cast<int>(dataset.images.dim(2));
  const int width = static_cast<int>(dataset.images.dim(3));
  if (!em_mode && cfg.augment_enabled) cfg.augment.validate(height, width);

  GeneratorResult result;
  result.model = make_classifier(cfg.architecture, dataset.num_classes, dataset.input_chw(),
                                 cfg.seed);
  Classifier& model = *result.model;
  SgdOptimizer optimizer(cfg.sgd);
  auto params = model.parameters();

  const RngStream root(cfg.seed);
  BatchSampler sampler(dataset.count(), cfg.batch, root.derive("batches"));

  Tensor images;
  std::vector<std::int32_t> labels;
  for (std::int64_t iter = 0; iter < cfg.iterations; ++iter) {
    gather(dataset, sampler.next(), &images, &labels, nullptr);

    auto sampler_for = [&](int k) {
      EotSampler es;
      es.transforms = [&s, &root, height, width, iter, k](int j) {
        RngStream st = root.derive("gen-t", static_cast<std::uint64_t>(iter),
                                   static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
        return std::vector<ImageTransform>{s.dist.sample(height, width, st)};
      };
      es.adv_init = [&s, &root, iter, k](int, const std::vector<std::int64_t>& shape) {
        return uniform_in_ball(shape, s.attack.norm, s.attack.radius,
                               root.derive("gen-a", static_cast<std::uint64_t>(iter),
                                           static_cast<std::uint64_t>(k)));
      };
      return es;
    };
    Tensor delta_u = minimize_defensive_noise(images, labels, model, s, sampler_for);

    // One optimizer step at a single freshly transformed adversarial batch.
    RngStream tstream = root.derive("gen-theta-t", static_cast<std::uint64_t>(iter));
    ImageTransform t = s.dist.sample(height, width, tstream);
    Tensor noised(images.shape());
    for (std::int64_t i = 0; i < noised.size(); ++i) noised[i] = images[i] + delta_u[i];
    Tensor point = apply_transforms(noised, s.dist, {&t, 1});
    if (s.attack.radius > 0.0 && s.attack.steps > 0) {
      Tensor delta_a =
          pgd(point, model.input_loss_fn(labels), s.attack, PgdInit::kUniformInBall,
              root.derive("gen-theta-a", static_cast<std::uint64_t>(iter)));
      for (std::int64_t i = 0; i < point.size(); ++i) point[i] += delta_a[i];
    }

    GradRequest req;
    req.params = true;
    LossGrads lg;
    try {
      lg = model.train_loss_and_grads(point, labels, req);
    } catch (const NumericError& e) {
      throw NumericError("generator training diverged at iteration " + std::to_string(iter) +
                         ": " + e.what());
    }
    optimizer.step(params, lg.param_grads, iter);
    result.log.loss.push_back(lg.loss);
  }
  return result;
}

}  // namespace

GeneratorResult train_em_generator(const ExampleSet& dataset, const GeneratorConfig& cfg) {
  check_config(cfg.mode == "em", "train_em_generator expects mode=em");
  return train_generator(dataset, cfg, /*em_mode=*/true);
}

GeneratorResult train_rem_generator(const ExampleSet& dataset, const GeneratorConfig& cfg) {
  check_config(cfg.mode == "rem", "train_rem_generator expects mode=rem");
  return train_generator(dataset, cfg, /*em_mode=*/false);
}

NoiseBank craft_bank(const ExampleSet& dataset, const Classifier& generator,
                     const GeneratorConfig& cfg) {
  cfg.validate();
  check_config(cfg.mode == "em" || cfg.mode == "rem", "craft_bank handles em and rem modes");
  dataset.validate();
  const bool em_mode = cfg.mode == "em";
  const ModeSetup s = setup_for(cfg, em_mode);
  const int height = static_cast<int>(dataset.images.dim(2));
  const int width = static_cast<int>(dataset.images.dim(3));

  NoiseBank bank;
  bank.mode = cfg.mode;
  bank.norm = cfg.norm;
  bank.rho_u = cfg.rho_u;
  bank.rho_a = em_mode ? 0.0 : cfg.rho_a;
  bank.generator_hash = checkpoint_hash(generator);
  nlohmann::json cfg_json = cfg;
  bank.creation_config = cfg_json;
  bank.config_hash = json_hash(cfg_json);
  bank.ids = dataset.ids;
  bank.deltas = Tensor(dataset.images.shape());

  const RngStream root(cfg.seed);
  const std::int64_t slice = dataset.images.slice_size();
  Tensor images;
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> ids;
  for (std::int64_t start = 0; start < dataset.count(); start += cfg.batch) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min(start + cfg.batch, dataset.count()); ++i) {
      idx.push_back(i);
    }
    gather(dataset, idx, &images, &labels, &ids);
    const auto b = static_cast<std::int64_t>(idx.size());

    // Per-example streams keyed by (seed, id, step): batch grouping cannot
    // change the result, and crafting parallelizes deterministically.
    auto sampler_for = [&](int k) {
      EotSampler es;
      es.transforms = [&s, &root, &ids, height, width, k, b](int j) {
        std::vector<ImageTransform> ts(static_cast<std::size_t>(b));
        for (std::int64_t i = 0; i < b; ++i) {
          RngStream st = root.derive("craft-t",
                                     static_cast<std::uint64_t>(ids[static_cast<std::size_t>(i)]),
                                     static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
          ts[static_cast<std::size_t>(i)] = s.dist.sample(height, width, st);
        }
        return ts;
      };
      es.adv_init = [&s, &root, &ids, k, b](int, const std::vector<std::int64_t>& shape) {
        Tensor init(shape);
        const std::int64_t sz = init.slice_size();
        for (std::int64_t i = 0; i < b; ++i) {
          Tensor row = uniform_in_ball(
              {1, shape[1], shape[2], shape[3]}, s.attack.norm, s.attack.radius,
              root.derive("craft-a",
                          static_cast<std::uint64_t>(ids[static_cast<std::size_t>(i)]),
                          static_cast<std::uint64_t>(k)));
          std::copy(row.data(), row.data() + sz, init.data() + i * sz);
        }
        return init;
      };
      return es;
    };
    Tensor delta_u = minimize_defensive_noise(images, labels, generator, s, sampler_for);
    std::copy(delta_u.data(), delta_u.data() + b * slice, bank.deltas.data() + start * slice);
  }
  bank.validate();
  return bank;
}

NoiseBank tap_bank(const ExampleSet& dataset, const Classifier& clean_model,
                   const GeneratorConfig& cfg, const std::vector<std::int32_t>& permutation) {
  cfg.validate();
  check_config(cfg.mode == "tap", "tap_bank expects mode=tap");
  dataset.validate();
  check_config(static_cast<int>(permutation.size()) == dataset.num_classes,
               "label permutation must cover every class");
  for (int c = 0; c < dataset.num_classes; ++c) {
    const auto target = permutation[static_cast<std::size_t>(c)];
    check_config(target >= 0 && target < dataset.num_classes,
                 "label permutation target out of range");
    check_config(target != c, "label permutation has a fixed point at class " +
                                  std::to_string(c) + "; targets must differ from true labels");
  }

  const TransformDistribution dist =
      cfg.augment_enabled ? cfg.augment : TransformDistribution::identity();
  const int height = static_cast<int>(dataset.images.dim(2));
  const int width = static_cast<int>(dataset.images.dim(3));
  if (cfg.augment_enabled) cfg.augment.validate(height, width);
  const PerturbationBudget climb = {cfg.norm, cfg.rho_u, cfg.tap_alpha_or_default(),
                                    cfg.tap_steps, +1};
  const PerturbationBudget no_attack = {cfg.norm, 0.0, 1.0, 0, +1};

  NoiseBank bank;
  bank.mode = "tap";
  bank.norm = cfg.norm;
  bank.rho_u = cfg.rho_u;
  bank.rho_a = 0.0;
  bank.generator_hash = checkpoint_hash(clean_model);
  nlohmann::json cfg_json = cfg;
  bank.creation_config = cfg_json;
  bank.config_hash = json_hash(cfg_json);
  bank.ids = dataset.ids;
  bank.deltas = Tensor(dataset.images.shape());

  const RngStream root(cfg.seed);
  const std::int64_t slice = dataset.images.slice_size();
  Tensor images;
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> ids;
  for (std::int64_t start = 0; start < dataset.count(); start += cfg.batch) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min(start + cfg.batch, dataset.count()); ++i) {
      idx.push_back(i);
    }
    gather(dataset, idx, &images, &labels, &ids);
    const auto b = static_cast<std::int64_t>(idx.size());

    std::vector<std::int32_t> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      targets[i] = permutation[static_cast<std::size_t>(labels[i])];
    }

    Tensor delta(images.shape());
    if (climb.radius > 0.0) {
      for (int step = 0; step < cfg.tap_steps; ++step) {
        EotSampler es;
        es.transforms = [&dist, &root, &ids, height, width, step, b](int) {
          std::vector<ImageTransform> ts(static_cast<std::size_t>(b));
          for (std::int64_t i = 0; i < b; ++i) {
            RngStream st =
                root.derive("tap-t",
                            static_cast<std::uint64_t>(ids[static_cast<std::size_t>(i)]),
                            static_cast<std::uint64_t>(step));
            ts[static_cast<std::size_t>(i)] = dist.sample(height, width, st);
          }
          return ts;
        };
        es.adv_init = [](int, const std::vector<std::int64_t>& shape) { return Tensor(shape); };
        EotResult res =
            eot_gradient_with(images, delta, targets, clean_model, dist, 1, no_attack, es);
        delta = pgd_step(delta, res.grad, climb);
      }
    }
    std::copy(delta.data(), delta.data() + b * slice, bank.deltas.data() + start * slice);
  }
  bank.validate();
  return bank;
}

}  // namespace unlearn
