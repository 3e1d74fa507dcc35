#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "unlearn/common.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/filter.hpp"
#include "unlearn/io_util.hpp"
#include "unlearn/noise_bank.hpp"
#include "unlearn/transform.hpp"

using namespace unlearn;

namespace {

std::string temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "unlearn_data_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

NoiseBank constant_bank(const ExampleSet& set, float value, double rho_u) {
  NoiseBank bank;
  bank.mode = "em";
  bank.rho_u = rho_u;
  bank.deltas = Tensor(set.images.shape());
  bank.deltas.fill(value);
  bank.ids = set.ids;
  return bank;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and sized by its parameters") {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.per_class = 100;
  spec.seed = 7;
  ExampleSet a = make_synthetic(spec);
  CHECK(a.count() == 200);
  CHECK(a.num_classes == 2);
  CHECK(a.images.dim(2) == 8);

  ExampleSet b = make_synthetic(spec);
  for (std::int64_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);

  spec.split = "test";
  ExampleSet t = make_synthetic(spec);
  bool differs = false;
  for (std::int64_t i = 0; i < a.images.size() && !differs; ++i) {
    differs = a.images[i] != t.images[i];
  }
  CHECK(differs);

  spec.per_class = 0;
  CHECK_THROWS_AS(make_synthetic(spec), ConfigError);
}

TEST_CASE("cifar reader parses 3073-byte records and rejects bad input") {
  const std::string dir = temp_dir();
  // Two fabricated records.
  std::vector<unsigned char> blob(2 * 3073, 0);
  blob[0] = 3;
  for (int j = 0; j < 3072; ++j) blob[static_cast<std::size_t>(1 + j)] = 128;
  blob[3073] = 9;
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                           "data_batch_4.bin", "data_batch_5.bin"}) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
  }
  ExampleSet set = load_cifar10(dir, "train");
  CHECK(set.count() == 10);
  CHECK(set.num_classes == 10);
  CHECK(set.labels[0] == 3);
  CHECK(set.labels[1] == 9);
  CHECK(set.images[0] == doctest::Approx(128.0 / 255.0));

  CHECK_THROWS_AS(load_cifar10(dir + "/missing", "train"), DataError);

  // Truncated file.
  {
    std::ofstream out(dir + "/test_batch.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()), 100);
  }
  CHECK_THROWS_AS(load_cifar10(dir, "test"), DataError);

  // Out-of-range label.
  blob[0] = 200;
  {
    std::ofstream out(dir + "/test_batch.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
  }
  CHECK_THROWS_AS(load_cifar10(dir, "test"), DataError);
}

TEST_CASE("example sets round-trip through the f32+json format") {
  SyntheticSpec spec;
  spec.per_class = 20;
  spec.seed = 5;
  ExampleSet set = make_synthetic(spec);
  set.perturbed_ids = {1, 3, 5};
  const std::string stem = temp_dir() + "/roundtrip";
  save_examples(set, stem);
  ExampleSet loaded = load_examples(stem);
  CHECK(loaded.count() == set.count());
  CHECK(loaded.num_classes == set.num_classes);
  CHECK(loaded.perturbed_ids == set.perturbed_ids);
  CHECK(loaded.ids == set.ids);
  CHECK(loaded.labels == set.labels);
  for (std::int64_t i = 0; i < set.images.size(); ++i) {
    CHECK(loaded.images[i] == set.images[i]);
  }
}

TEST_CASE("mix_protected honors the rounding rule and the coverage contract") {
  SyntheticSpec spec;
  spec.per_class = 100;
  spec.seed = 3;
  ExampleSet clean = make_synthetic(spec);
  NoiseBank bank = constant_bank(clean, 0.02f, 8.0 / 255.0);

  SUBCASE("zero percentage is a no-op") {
    ExampleSet mixed = mix_protected(clean, bank, 0.0, 17);
    CHECK(mixed.perturbed_ids.empty());
    for (std::int64_t i = 0; i < clean.images.size(); ++i) {
      CHECK(mixed.images[i] == clean.images[i]);
    }
  }

  SUBCASE("full coverage perturbs every example within the radius") {
    ExampleSet mixed = mix_protected(clean, bank, 1.0, 17);
    CHECK(mixed.perturbed_ids.size() == 200);
    float max_abs = 0.0f;
    for (std::int64_t i = 0; i < clean.images.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(mixed.images[i] - clean.images[i]));
      CHECK(mixed.images[i] >= 0.0f);
      CHECK(mixed.images[i] <= 1.0f);
    }
    CHECK(max_abs <= 8.0f / 255.0f + 1e-6f);
  }

  SUBCASE("eighty percent of 200 is exactly 160, reproducibly") {
    ExampleSet mixed = mix_protected(clean, bank, 0.8, 17);
    CHECK(mixed.perturbed_ids.size() == 160);
    ExampleSet again = mix_protected(clean, bank, 0.8, 17);
    CHECK(again.perturbed_ids == mixed.perturbed_ids);
    ExampleSet other = mix_protected(clean, bank, 0.8, 18);
    CHECK(other.perturbed_ids != mixed.perturbed_ids);
  }

  SUBCASE("a bank that misses a selected id is rejected up front") {
    bank.ids.back() = 999999;
    CHECK_THROWS_AS(mix_protected(clean, bank, 1.0, 17), DataError);
  }

  SUBCASE("quantization lands pixels on the 8-bit grid") {
    ExampleSet mixed = mix_protected(clean, bank, 1.0, 17, /*quantize=*/true);
    for (std::int64_t i = 0; i < mixed.images.size(); ++i) {
      const float scaled = mixed.images[i] * 255.0f;
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-4f);
    }
  }
}

TEST_CASE("noise banks round-trip and enforce their radius") {
  SyntheticSpec spec;
  spec.per_class = 10;
  ExampleSet set = make_synthetic(spec);
  NoiseBank bank = constant_bank(set, 0.01f, 8.0 / 255.0);
  bank.creation_config = {{"mode", "em"}};
  bank.config_hash = json_hash(bank.creation_config);
  const std::string stem = temp_dir() + "/bank";
  save_bank(bank, stem);
  NoiseBank loaded = load_bank(stem);
  CHECK(loaded.mode == "em");
  CHECK(loaded.ids == bank.ids);
  CHECK(loaded.config_hash == bank.config_hash);
  for (std::int64_t i = 0; i < bank.deltas.size(); ++i) {
    CHECK(loaded.deltas[i] == bank.deltas[i]);
  }

  NoiseBank fat = constant_bank(set, 0.2f, 8.0 / 255.0);  // exceeds rho_u
  CHECK_THROWS_AS(save_bank(fat, stem), DataError);
}

TEST_CASE("augment rescales, crops and flips as specified") {
  TransformDistribution dist;
  dist.pad = 1;
  dist.flip_prob = 0.5;

  Tensor half({1, 3, 4, 4});
  half.fill(0.5f);

  SUBCASE("identity transform on an all-0.5 image is all zero") {
    ImageTransform id = dist.center(4, 4);
    Tensor out = augment(half, dist, id);
    REQUIRE(out.dim(2) == 4);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
  }

  SUBCASE("flipping twice recovers the unflipped crop") {
    Tensor img({1, 1, 4, 4});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i) / 16.0f;
    TransformDistribution nopad = TransformDistribution::identity();
    ImageTransform flip;
    flip.flip = true;
    Tensor once = augment(img, nopad, flip);
    // Flip the result again by hand.
    Tensor twice(once.shape());
    for (std::int64_t y = 0; y < 4; ++y) {
      for (std::int64_t x = 0; x < 4; ++x) {
        twice.at(0, 0, y, x) = once.at(0, 0, y, 3 - x);
      }
    }
    ImageTransform id;
    Tensor plain = augment(img, nopad, id);
    for (std::int64_t i = 0; i < plain.size(); ++i) CHECK(twice[i] == plain[i]);
  }

  SUBCASE("contract violations are rejected") {
    Tensor bad({1, 3, 4, 4});
    bad.fill(1.5f);
    CHECK_THROWS_AS(augment(bad, dist, dist.center(4, 4)), ContractError);
  }
}

TEST_CASE("augmentation draws keep shape and range over many samples") {
  TransformDistribution dist;
  dist.pad = 2;
  RngStream rng(99);
  Tensor img({1, 3, 8, 8});
  RngStream pix(1);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(pix.next_double());

  for (int rep = 0; rep < 10000; ++rep) {
    ImageTransform t = dist.sample(8, 8, rng);
    Tensor out = augment(img, dist, t);
    REQUIRE(out.dim(2) == 8);
    REQUIRE(out.dim(3) == 8);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      REQUIRE(out[i] >= -0.5f);
      REQUIRE(out[i] <= 0.5f);
    }
  }
}

TEST_CASE("fixed seeds reproduce augmented batches bit for bit") {
  TransformDistribution dist;
  dist.pad = 1;
  SyntheticSpec spec;
  spec.per_class = 8;
  ExampleSet set = make_synthetic(spec);

  auto run = [&]() {
    RngStream rng(555);
    std::vector<ImageTransform> ts;
    for (std::int64_t i = 0; i < set.count(); ++i) ts.push_back(dist.sample(8, 8, rng));
    return apply_transforms(set.images, dist, ts);
  };
  Tensor a = run();
  Tensor b = run();
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("transform gradients route back exactly") {
  TransformDistribution dist;
  dist.pad = 1;
  RngStream rng(12);
  Tensor x({2, 1, 4, 4});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.next_double());
  std::vector<ImageTransform> ts{dist.sample(4, 4, rng), dist.sample(4, 4, rng)};
  ts[1].flip = true;

  // For a linear map, <T(x), g> must equal <x, T^t(g)> exactly.
  Tensor y = apply_transforms(x, dist, ts);
  Tensor g(y.shape());
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(rng.uniform(-1, 1));
  Tensor gx = transforms_backward(g, dist, ts, x.shape());

  // The -0.5 rescale is affine, not linear; compare against T with the shift
  // removed.
  double lhs = 0.0, rhs = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) {
    lhs += static_cast<double>(y[i] + 0.5f) * g[i];
  }
  for (std::int64_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * gx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("lowpass filters behave like their definitions") {
  SUBCASE("a constant image is unchanged by the mean filter") {
    Tensor img({1, 1, 5, 5});
    img.fill(0.42f);
    FilterSpec spec;
    spec.kind = FilterKind::kMean;
    Tensor out = lowpass(img, spec);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] == doctest::Approx(0.42f).epsilon(1e-6));
    }
  }

  SUBCASE("median of the 3x3 ramp patch is 4/8") {
    Tensor img({1, 1, 3, 3});
    for (std::int64_t i = 0; i < 9; ++i) img[i] = static_cast<float>(i) / 8.0f;
    FilterSpec spec;
    spec.kind = FilterKind::kMedian;
    Tensor out = lowpass(img, spec);
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(4.0 / 8.0));
  }

  SUBCASE("gaussian weights are normalized") {
    auto k = gaussian_kernel(3, 1.0);
    double sum = 0.0;
    for (double v : k) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }

  SUBCASE("even windows are rejected") {
    FilterSpec spec;
    spec.window = 4;
    Tensor img({1, 1, 4, 4});
    CHECK_THROWS_AS(lowpass(img, spec), ConfigError);
  }

  SUBCASE("mean and gaussian filtering are linear maps") {
    RngStream rng(8);
    Tensor x({1, 2, 6, 6}), y({1, 2, 6, 6});
    for (std::int64_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>(rng.next_double());
      y[i] = static_cast<float>(rng.next_double());
    }
    const float a = 0.3f, b = 0.7f;
    for (FilterKind kind : {FilterKind::kMean, FilterKind::kGaussian}) {
      FilterSpec spec;
      spec.kind = kind;
      Tensor combo({1, 2, 6, 6});
      for (std::int64_t i = 0; i < x.size(); ++i) combo[i] = a * x[i] + b * y[i];
      Tensor lhs = lowpass(combo, spec);
      Tensor fx = lowpass(x, spec);
      Tensor fy = lowpass(y, spec);
      for (std::int64_t i = 0; i < lhs.size(); ++i) {
        CHECK(std::abs(lhs[i] - (a * fx[i] + b * fy[i])) < 1e-6f);
      }
    }
  }
}
