#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "unlearn/budget.hpp"
#include "unlearn/common.hpp"
#include "unlearn/pgd.hpp"

using namespace unlearn;

namespace {

Tensor vec(std::initializer_list<float> values) {
  Tensor t({static_cast<std::int64_t>(values.size())});
  std::int64_t i = 0;
  for (float v : values) t[i++] = v;
  return t;
}

PerturbationBudget budget(NormKind norm, double radius, double step = 0.0, int steps = 0,
                          int direction = +1) {
  PerturbationBudget b;
  b.norm = norm;
  b.radius = radius;
  b.step = step;
  b.steps = steps;
  b.direction = direction;
  return b;
}

int oracle_norm_id(NormKind n) {
  return n == NormKind::kLinf ? 0 : (n == NormKind::kL2 ? 2 : 1);
}

}  // namespace

TEST_CASE("budget validation") {
  CHECK_THROWS_AS(budget(NormKind::kLinf, -0.1).validate(), ConfigError);
  CHECK_THROWS_AS(budget(NormKind::kLinf, 0.1, 0.0, 3).validate(), ConfigError);
  PerturbationBudget bad = budget(NormKind::kLinf, 0.1, 0.01, 3);
  bad.direction = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(budget(NormKind::kLinf, 0.0, 0.0, 0).validate());
}

TEST_CASE("linf projection clamps coordinates") {
  Tensor inside = vec({0.05f, -0.02f});
  Tensor projected = project(inside, budget(NormKind::kLinf, 0.1));
  CHECK(projected[0] == 0.05f);
  CHECK(projected[1] == -0.02f);

  Tensor outside = vec({0.5f, -0.2f});
  projected = project(outside, budget(NormKind::kLinf, 0.1));
  CHECK(projected[0] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(projected[1] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("l1 projection matches the grid oracle") {
  Tensor d = vec({0.8f, 0.6f});
  auto reference = oracles::grid_project({0.8, 0.6}, 1, 1.0);
  Tensor projected = project(d, budget(NormKind::kL1, 1.0));
  CHECK(std::abs(projected[0] - reference[0]) < 1e-4);
  CHECK(std::abs(projected[1] - reference[1]) < 1e-4);
  // Analytic value for this case.
  CHECK(projected[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(projected[1] == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("projections match grid oracles on random 2-D and 3-D points") {
  RngStream rng(101);
  for (NormKind norm : {NormKind::kLinf, NormKind::kL2, NormKind::kL1}) {
    for (int d : {2, 3}) {
      for (int rep = 0; rep < 40; ++rep) {
        double radius = rng.uniform(0.05, 1.0);
        Tensor p({d});
        std::vector<double> pd(d);
        for (int i = 0; i < d; ++i) {
          pd[i] = rng.uniform(-2.0 * radius, 2.0 * radius);
          p[i] = static_cast<float>(pd[i]);
        }
        auto reference = oracles::grid_project(pd, oracle_norm_id(norm), radius);
        Tensor got = project(p, budget(norm, radius));
        for (int i = 0; i < d; ++i) {
          CHECK(std::abs(got[i] - reference[i]) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("projection is idempotent and stays in the ball") {
  RngStream rng(7);
  for (NormKind norm : {NormKind::kLinf, NormKind::kL2, NormKind::kL1}) {
    for (int rep = 0; rep < 10000; ++rep) {
      Tensor v({6});
      for (int i = 0; i < 6; ++i) v[i] = static_cast<float>(rng.uniform(-1.5, 1.5));
      double radius = 0.5;
      Tensor once = project(v, budget(norm, radius));
      Tensor twice = project(once, budget(norm, radius));
      CHECK(norm_of({once.data(), 6}, norm) <= radius + 1e-6);
      for (int i = 0; i < 6; ++i) {
        if (norm == NormKind::kLinf) {
          CHECK(once[i] == twice[i]);
        } else {
          CHECK(std::abs(once[i] - twice[i]) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("points already inside the ball are untouched") {
  RngStream rng(13);
  for (NormKind norm : {NormKind::kLinf, NormKind::kL2, NormKind::kL1}) {
    for (int rep = 0; rep < 100; ++rep) {
      Tensor v({4});
      for (int i = 0; i < 4; ++i) v[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
      double radius = norm_of({v.data(), 4}, norm) + 0.01;
      Tensor got = project(v, budget(norm, radius));
      for (int i = 0; i < 4; ++i) CHECK(got[i] == v[i]);
    }
  }
}

TEST_CASE("non-finite input to project raises a numeric error") {
  Tensor v = vec({0.1f, std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(project(v, budget(NormKind::kLinf, 0.1)), NumericError);
  v[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(project(v, budget(NormKind::kL2, 0.1)), NumericError);
}

TEST_CASE("pgd_step follows the signed-gradient update") {
  PerturbationBudget b = budget(NormKind::kLinf, 0.1, 0.05, 1, +1);
  Tensor delta = vec({0.0f, 0.0f});
  Tensor grad = vec({0.3f, -0.7f});
  Tensor next = pgd_step(delta, grad, b);
  CHECK(next[0] == doctest::Approx(0.05));
  CHECK(next[1] == doctest::Approx(-0.05));

  // sign(0) = 0 keeps stationary coordinates in place.
  Tensor zero_grad = vec({0.0f, 0.0f});
  next = pgd_step(delta, zero_grad, b);
  CHECK(next[0] == 0.0f);
  CHECK(next[1] == 0.0f);

  // A coordinate at +radius with positive gradient stays clamped there.
  Tensor at_edge = vec({0.1f, 0.0f});
  Tensor pos_grad = vec({1.0f, 0.0f});
  next = pgd_step(at_edge, pos_grad, b);
  CHECK(next[0] == doctest::Approx(0.1));
}

TEST_CASE("pgd with zero steps projects the init") {
  auto never_called = [](const Tensor&) -> LossGrad {
    FAIL("loss function must not be evaluated when steps == 0");
    return {};
  };
  Tensor x({2});
  Tensor out = pgd(x, never_called, budget(NormKind::kLinf, 0.1, 0.05, 0), PgdInit::kZeros,
                   RngStream(1));
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 0.0f);
}

namespace {

// Scalar least-squares probe: loss(p) = (w * p - y)^2.
InputLossFn scalar_model(double w, double y) {
  return [w, y](const Tensor& input) {
    LossGrad lg;
    double p = static_cast<double>(input[0]);
    double r = w * p - y;
    lg.loss = r * r;
    lg.grad = Tensor(input.shape());
    lg.grad[0] = static_cast<float>(2.0 * r * w);
    return lg;
  };
}

}  // namespace

TEST_CASE("pgd matches the 1-D grid-search optimum") {
  auto loss_at = [](double delta) {
    double r = delta - 1.0;
    return r * r;
  };
  Tensor x({1});

  double grid_max = oracles::grid_argopt(loss_at, -0.1, 0.1, 1e-4, /*maximize=*/true);
  Tensor up = pgd(x, scalar_model(1.0, 1.0), budget(NormKind::kLinf, 0.1, 0.02, 10, +1),
                  PgdInit::kZeros, RngStream(1));
  CHECK(std::abs(up[0] - grid_max) < 2e-3);
  CHECK(up[0] == doctest::Approx(-0.1));

  double grid_min = oracles::grid_argopt(loss_at, -0.1, 0.1, 1e-4, /*maximize=*/false);
  Tensor down = pgd(x, scalar_model(1.0, 1.0), budget(NormKind::kLinf, 0.1, 0.02, 10, -1),
                    PgdInit::kZeros, RngStream(1));
  CHECK(std::abs(down[0] - grid_min) < 2e-3);
  CHECK(down[0] == doctest::Approx(0.1));
}

TEST_CASE("maximizing pgd never does worse than the zero perturbation") {
  RngStream rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    double a = rng.uniform(0.5, 2.0);
    double b = rng.uniform(-0.3, 0.3);
    if (std::abs(b) < 0.01) b = 0.01;
    double radius = rng.uniform(0.05, 0.2);
    auto f = [a, b](const Tensor& input) {
      LossGrad lg;
      double p = static_cast<double>(input[0]);
      lg.loss = a * (p - b) * (p - b);
      lg.grad = Tensor(input.shape());
      lg.grad[0] = static_cast<float>(2.0 * a * (p - b));
      return lg;
    };
    Tensor x({1});
    PerturbationBudget bud = budget(NormKind::kLinf, radius, radius / 5.0, 10, +1);
    Tensor delta = pgd(x, f, bud, PgdInit::kZeros, RngStream(rep));
    double end_loss = f(delta).loss;
    double zero_loss = a * b * b;
    CHECK(end_loss >= zero_loss - 1e-6);
    double grid = oracles::grid_argopt([a, b](double d) { return a * (d - b) * (d - b); },
                                       -radius, radius, 1e-4, true);
    CHECK(std::abs(delta[0] - grid) < 2e-3);
  }
}

TEST_CASE("uniform ball samples respect every norm") {
  RngStream rng(3);
  for (NormKind norm : {NormKind::kLinf, NormKind::kL2, NormKind::kL1}) {
    for (int rep = 0; rep < 200; ++rep) {
      Tensor s = uniform_in_ball({8}, norm, 0.3, rng.derive("sample", rep));
      CHECK(norm_of({s.data(), 8}, norm) <= 0.3 + 1e-6);
    }
  }
  // Per-slice sampling for batches: each example is its own ball.
  Tensor batch = uniform_in_ball({4, 1, 2, 2}, NormKind::kL2, 0.5, rng.derive("batch"));
  for (int n = 0; n < 4; ++n) {
    CHECK(norm_of({batch.data() + n * 4, 4}, NormKind::kL2) <= 0.5 + 1e-6);
  }
}
