#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/budget.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/model.hpp"
#include "unlearn/noise_bank.hpp"
#include "unlearn/trainer.hpp"
#include "unlearn/transform.hpp"

namespace unlearn {

// Hyperparameters for training a noise-generator source model and crafting
// per-example defensive perturbations from it.
struct GeneratorConfig {
  std::string mode = "rem";  // em | rem | tap
  std::string architecture = "tinycnn";
  NormKind norm = NormKind::kLinf;

  double rho_u = 8.0 / 255.0;  // defensive radius
  double rho_a = 4.0 / 255.0;  // adversarial radius (rem only)
  double alpha_u = 0.0;        // 0 = rho_u / 5
  double alpha_a = 0.0;        // 0 = rho_a / 5
  int steps_u = 10;            // K_u
  int steps_a = 10;            // K_a
  int eot_samples = 5;         // J
  std::int64_t iterations = 5000;  // M
  std::int64_t batch = 128;
  SgdConfig sgd = {0.1, 0.9, 5e-4, 0.1, 2000};
  std::uint64_t seed = 0;

  // A defensive radius at or below the adversarial radius cannot suppress
  // anything; such configs need an explicit override.
  bool allow_degenerate_radii = false;

  TransformDistribution augment;
  bool augment_enabled = true;  // rem: EOT over `augment`; off = identity T

  int tap_steps = 250;
  double tap_alpha = 0.0;  // 0 = rho_u / 125

  double alpha_u_or_default() const { return alpha_u > 0.0 ? alpha_u : rho_u / 5.0; }
  double alpha_a_or_default() const { return alpha_a > 0.0 ? alpha_a : rho_a / 5.0; }
  double tap_alpha_or_default() const { return tap_alpha > 0.0 ? tap_alpha : rho_u / 125.0; }

  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);

struct GeneratorResult {
  std::unique_ptr<Classifier> model;
  MetricsLog log;
};

// Error-minimizing generator: each outer iteration descends the loss over
// the defensive perturbation, then takes one optimizer step at the noised
// minibatch.
GeneratorResult train_em_generator(const ExampleSet& dataset, const GeneratorConfig& cfg);

// Robust error-minimizing generator: the defensive perturbation instead
// descends the expected adversarial loss over sampled transforms, and the
// optimizer step is taken at a transformed, adversarially perturbed batch.
GeneratorResult train_rem_generator(const ExampleSet& dataset, const GeneratorConfig& cfg);

// Runs the mode's inner optimization per example with the generator frozen
// and stores one perturbation per id. Crafting streams are derived from
// (seed, example id, step), so results do not depend on batch grouping.
NoiseBank craft_bank(const ExampleSet& dataset, const Classifier& generator,
                     const GeneratorConfig& cfg);

// Targeted adversarial poisoning: climbs the loss toward permuted labels
// against a clean-trained model, sampling a fresh transform per step and
// differentiating through it.
NoiseBank tap_bank(const ExampleSet& dataset, const Classifier& clean_model,
                   const GeneratorConfig& cfg, const std::vector<std::int32_t>& permutation);

// Default label permutation: shift by +1 mod C (a derangement for C >= 2).
std::vector<std::int32_t> cyclic_permutation(int num_classes);

}  // namespace unlearn
