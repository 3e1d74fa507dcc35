#include <doctest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "unlearn/checkpoint.hpp"
#include "unlearn/common.hpp"
#include "unlearn/generator.hpp"
#include "unlearn/pgd.hpp"
#include "unlearn/trainer.hpp"

using namespace unlearn;

namespace {

ExampleSet small_set(int per_class, const char* split = "train") {
  SyntheticSpec spec;
  spec.per_class = per_class;
  spec.seed = 77;
  spec.split = split;
  return make_synthetic(spec);
}

GeneratorConfig desk_generator(const std::string& mode, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.mode = mode;
  cfg.rho_u = 8.0 / 255.0;
  cfg.rho_a = 4.0 / 255.0;
  cfg.steps_u = 3;
  cfg.steps_a = 3;
  cfg.eot_samples = 2;
  cfg.iterations = 40;
  cfg.batch = 32;
  cfg.sgd = {0.05, 0.9, 5e-4, 0.1, 1000};
  cfg.seed = seed;
  cfg.augment.pad = 1;
  return cfg;
}

bool banks_identical(const NoiseBank& a, const NoiseBank& b) {
  if (a.ids != b.ids || a.deltas.size() != b.deltas.size()) return false;
  for (std::int64_t i = 0; i < a.deltas.size(); ++i) {
    if (a.deltas[i] != b.deltas[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generator config guards its invariants") {
  GeneratorConfig cfg = desk_generator("rem", 1);
  cfg.rho_a = cfg.rho_u;  // degenerate
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.allow_degenerate_radii = true;
  CHECK_NOTHROW(cfg.validate());

  GeneratorConfig bad = desk_generator("rem", 1);
  bad.eot_samples = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.mode = "nope";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero outer iterations return the freshly initialized model") {
  ExampleSet data = small_set(10);
  GeneratorConfig cfg = desk_generator("em", 9);
  cfg.iterations = 0;
  GeneratorResult res = train_em_generator(data, cfg);
  auto fresh = make_classifier(cfg.architecture, data.num_classes, data.input_chw(), cfg.seed);
  CHECK(checkpoint_hash(*res.model) == checkpoint_hash(*fresh));
  CHECK(res.log.loss.empty());
}

TEST_CASE("em generator training drives its loss down") {
  ExampleSet data = small_set(100);
  GeneratorConfig cfg = desk_generator("em", 5);
  cfg.iterations = 300;
  cfg.steps_u = 5;
  cfg.sgd.lr = 0.01;  // slow enough that the descent spans the whole run
  GeneratorResult res = train_em_generator(data, cfg);
  REQUIRE(res.log.loss.size() == 300);
  // 100-iteration means must decrease monotonically.
  double m1 = 0, m2 = 0, m3 = 0;
  for (int i = 0; i < 100; ++i) {
    m1 += res.log.loss[static_cast<std::size_t>(i)];
    m2 += res.log.loss[static_cast<std::size_t>(100 + i)];
    m3 += res.log.loss[static_cast<std::size_t>(200 + i)];
  }
  CHECK(m2 < m1);
  CHECK(m3 < m2);
  CHECK(res.log.loss.back() < res.log.loss.front());
}

TEST_CASE("rem with zero adversarial radius and identity transforms collapses to em") {
  ExampleSet data = small_set(100);  // 200 examples

  GeneratorConfig em = desk_generator("em", 31);
  em.rho_a = 0.0;
  GeneratorResult em_gen = train_em_generator(data, em);
  NoiseBank em_bank = craft_bank(data, *em_gen.model, em);

  GeneratorConfig rem = desk_generator("rem", 31);
  rem.rho_a = 0.0;
  rem.allow_degenerate_radii = true;  // rho_a == 0 with identity T is the em limit
  rem.augment_enabled = false;        // identity T
  GeneratorResult rem_gen = train_rem_generator(data, rem);
  NoiseBank rem_bank = craft_bank(data, *rem_gen.model, rem);

  CHECK(checkpoint_hash(*em_gen.model) == checkpoint_hash(*rem_gen.model));
  CHECK(banks_identical(em_bank, rem_bank));
}

TEST_CASE("point-mass transforms make the eot sample count irrelevant end to end") {
  ExampleSet data = small_set(25);
  GeneratorConfig one = desk_generator("rem", 13);
  one.iterations = 15;
  one.augment_enabled = false;
  one.eot_samples = 1;
  GeneratorConfig five = one;
  five.eot_samples = 5;

  GeneratorResult g1 = train_rem_generator(data, one);
  GeneratorResult g5 = train_rem_generator(data, five);
  CHECK(checkpoint_hash(*g1.model) == checkpoint_hash(*g5.model));
  NoiseBank b1 = craft_bank(data, *g1.model, one);
  NoiseBank b5 = craft_bank(data, *g5.model, five);
  CHECK(banks_identical(b1, b5));
}

TEST_CASE("crafting is independent of batch grouping and deterministic") {
  ExampleSet data = small_set(15);  // odd count, forces ragged batches
  GeneratorConfig cfg = desk_generator("rem", 3);
  cfg.iterations = 20;
  GeneratorResult gen = train_rem_generator(data, cfg);

  NoiseBank whole = craft_bank(data, *gen.model, cfg);
  GeneratorConfig tiny = cfg;
  tiny.batch = 1;
  NoiseBank single = craft_bank(data, *gen.model, tiny);
  CHECK(banks_identical(whole, single));

  GeneratorConfig ragged = cfg;
  ragged.batch = 7;
  NoiseBank mid = craft_bank(data, *gen.model, ragged);
  CHECK(banks_identical(whole, mid));

  NoiseBank again = craft_bank(data, *gen.model, cfg);
  CHECK(banks_identical(whole, again));
  CHECK(whole.generator_hash == again.generator_hash);
  CHECK(whole.config_hash == again.config_hash);
}

TEST_CASE("em crafting with zero steps returns an all-zero bank") {
  ExampleSet data = small_set(10);
  GeneratorConfig cfg = desk_generator("em", 2);
  cfg.iterations = 5;
  GeneratorResult gen = train_em_generator(data, cfg);
  cfg.steps_u = 0;
  NoiseBank bank = craft_bank(data, *gen.model, cfg);
  for (std::int64_t i = 0; i < bank.deltas.size(); ++i) CHECK(bank.deltas[i] == 0.0f);
}

// Mirrors the per-example crafting loop on a 1-D quadratic to compare
// against an exhaustive min-max search. The model is a pure function, so the
// production pieces under test are the PGD inner maximizer and the signed
// outer descent.
TEST_CASE("the crafting recursion solves a 1-D min-max to grid accuracy") {
  RngStream rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    const double b = rng.uniform(-0.2, 0.2);
    const double rho_u = 0.05 + rng.uniform(0.0, 0.05);
    const double rho_a = rho_u / 2.0;
    auto loss = [b](double z) { return (z - b) * (z - b); };
    InputLossFn oracle_fn = [b](const Tensor& point) {
      LossGrad lg;
      const double z = static_cast<double>(point[0]);
      lg.loss = (z - b) * (z - b);
      lg.grad = Tensor(point.shape());
      lg.grad[0] = static_cast<float>(2.0 * (z - b));
      return lg;
    };

    // Production-style loop: K_u signed-descent steps on the Danskin
    // gradient at the inner PGD maximizer. The step is fine enough that the
    // terminal zigzag stays inside the comparison tolerance.
    const PerturbationBudget attack{NormKind::kLinf, rho_a, rho_a / 5.0, 10, +1};
    const PerturbationBudget descend{NormKind::kLinf, rho_u, rho_u / 40.0, 60, -1};
    Tensor delta_u({1});
    Tensor x({1});
    for (int k = 0; k < descend.steps; ++k) {
      Tensor point({1});
      point[0] = x[0] + delta_u[0];
      Tensor delta_a = pgd(point, oracle_fn, attack, PgdInit::kZeros, RngStream(0));
      Tensor attacked({1});
      attacked[0] = point[0] + delta_a[0];
      LossGrad lg = oracle_fn(attacked);
      PerturbationBudget one_step = descend;
      delta_u = pgd_step(delta_u, lg.grad, one_step);
    }

    // Nested grid search at 1e-3 resolution.
    double best_u = 0.0, best_val = 1e300;
    for (double u = -rho_u; u <= rho_u + 1e-12; u += 1e-3) {
      double worst = -1e300;
      for (double a = -rho_a; a <= rho_a + 1e-12; a += 1e-3) {
        worst = std::max(worst, loss(u + a));
      }
      if (worst < best_val) {
        best_val = worst;
        best_u = u;
      }
    }
    CHECK(std::abs(delta_u[0] - best_u) < 2e-3);
  }
}

// With an exact inner maximizer and rho_u <= rho_a, the defender cannot push
// the min-max value below the clean loss: the attacker can always cancel the
// defensive move. Checked by exhaustive search on random smooth losses.
TEST_CASE("degeneration inequality holds under exact nested search") {
  RngStream rng(4242);
  int violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const bool two_d = rep % 2 == 1;
    const double rho_u = rng.uniform(0.02, 0.2);
    const double rho_a = rho_u + rng.uniform(0.0, 0.1);  // rho_u <= rho_a

    // Random smooth loss: mixture of cosine ridges.
    struct Ridge {
      double wx, wy, phase, amp;
    };
    std::vector<Ridge> ridges;
    for (int r = 0; r < 4; ++r) {
      ridges.push_back({rng.uniform(-6, 6), two_d ? rng.uniform(-6, 6) : 0.0,
                        rng.uniform(0, 6.28), rng.uniform(0.2, 1.0)});
    }
    auto loss = [&](double zx, double zy) {
      double v = 0.0;
      for (const auto& r : ridges) v += r.amp * std::cos(r.wx * zx + r.wy * zy + r.phase);
      return v;
    };

    const double x0 = rng.uniform(-0.3, 0.3);
    const double y0 = two_d ? rng.uniform(-0.3, 0.3) : 0.0;
    const double clean = loss(x0, y0);

    // Symmetric integer grids with one shared step so that -delta_u is
    // always available to the attacker.
    const double h = rho_u / 12.0;
    const auto iu = static_cast<long>(std::floor(rho_u / h + 1e-9));
    const auto ia = static_cast<long>(std::floor(rho_a / h + 1e-9));
    const long iu_y = two_d ? iu : 0;
    const long ia_y = two_d ? ia : 0;

    double minmax = 1e300;
    for (long ux = -iu; ux <= iu; ++ux) {
      for (long uy = -iu_y; uy <= iu_y; ++uy) {
        double worst = -1e300;
        for (long ax = -ia; ax <= ia; ++ax) {
          for (long ay = -ia_y; ay <= ia_y; ++ay) {
            worst = std::max(worst, loss(x0 + (ux + ax) * h, y0 + (uy + ay) * h));
          }
        }
        minmax = std::min(minmax, worst);
      }
    }
    if (minmax < clean - 1e-9) ++violations;
  }
  CHECK(violations == 0);
}

namespace {

// Shared across subcases; doctest re-enters the test body per subcase.
const Classifier& clean_source_model(const ExampleSet& data) {
  static std::unique_ptr<Classifier> cached = [&]() {
    TrainConfig tc;
    tc.iterations = 300;
    tc.batch = 32;
    tc.sgd = {0.05, 0.9, 5e-4, 0.1, 1000};
    tc.augment.pad = 1;
    tc.eval_period = 300;
    tc.seed = 8;
    return train(data, nullptr, ModelConfig{"tinycnn", 8}, tc).model;
  }();
  return *cached;
}

}  // namespace

TEST_CASE("tap banks climb the loss toward permuted labels") {
  ExampleSet data = small_set(100);  // 200 examples
  const Classifier& clean_model = clean_source_model(data);

  GeneratorConfig cfg = desk_generator("tap", 21);
  cfg.tap_steps = 30;
  auto g = cyclic_permutation(data.num_classes);

  SUBCASE("fixed-point permutations are rejected") {
    auto bad = g;
    bad[0] = 0;
    CHECK_THROWS_AS(tap_bank(data, clean_model, cfg, bad), ConfigError);
  }

  SUBCASE("zero radius gives a zero bank") {
    GeneratorConfig flat = cfg;
    flat.rho_u = 0.0;
    NoiseBank bank = tap_bank(data, clean_model, flat, g);
    for (std::int64_t i = 0; i < bank.deltas.size(); ++i) CHECK(bank.deltas[i] == 0.0f);
  }

  SUBCASE("crafted points raise the permuted-label loss almost everywhere") {
    NoiseBank bank = tap_bank(data, clean_model, cfg, g);
    const std::int64_t slice = data.images.slice_size();
    const TransformDistribution identity = TransformDistribution::identity();
    const ImageTransform center = identity.center(8, 8);
    int raised = 0;
    for (std::int64_t i = 0; i < data.count(); ++i) {
      Tensor img({1, 3, 8, 8});
      std::copy(data.images.data() + i * slice, data.images.data() + (i + 1) * slice,
                img.data());
      std::vector<std::int32_t> target{
          g[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])]};
      Tensor base = apply_transforms(img, identity, {&center, 1});
      const double loss0 = mean_cross_entropy(clean_model.forward(base), target);

      for (std::int64_t j = 0; j < slice; ++j) img[j] += bank.deltas[i * slice + j];
      Tensor poisoned = apply_transforms(img, identity, {&center, 1});
      const double loss1 = mean_cross_entropy(clean_model.forward(poisoned), target);
      raised += loss1 >= loss0 ? 1 : 0;
    }
    CHECK(static_cast<double>(raised) / static_cast<double>(data.count()) >= 0.95);
  }
}

TEST_CASE("cyclic permutations are derangements for two or more classes") {
  for (int c = 2; c <= 7; ++c) {
    auto g = cyclic_permutation(c);
    for (int i = 0; i < c; ++i) {
      CHECK(g[static_cast<std::size_t>(i)] != i);
    }
  }
}
