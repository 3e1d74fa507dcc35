#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/budget.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/filter.hpp"
#include "unlearn/trainer.hpp"

namespace unlearn {

// Builds a dataset from a JSON spec: {"kind": "synthetic" | "cifar10" |
// "cifar100" | "file", ...}.
ExampleSet resolve_dataset(const nlohmann::json& spec);

TrainConfig parse_train_config(const nlohmann::json& j);
ModelConfig parse_model_config(const nlohmann::json& j);

// One training grid: noise banks x protection percentages x adversarial
// radii x low-pass filters, sharing a train config.
struct ExperimentSpec {
  nlohmann::json raw;  // resolved document, hashed for cell idempotence

  nlohmann::json dataset;
  nlohmann::json test_dataset;
  std::vector<std::pair<std::string, std::string>> banks;  // label -> stem; "" = clean
  std::vector<double> percentages{1.0};
  std::vector<double> adv_radii{0.0};
  NormKind attack_norm = NormKind::kLinf;
  int attack_steps = 10;
  double attack_alpha = 0.0;  // 0 = 2*radius/steps (the paper ratio at K=10)
  std::vector<std::string> filters{"none"};
  int filter_window = 3;
  double filter_sigma = 1.0;
  ModelConfig model;
  TrainConfig train_base;
  bool quantize = false;
  std::uint64_t seed = 0;
  int parallelism = 1;

  static ExperimentSpec parse(const nlohmann::json& doc);
};

struct CellOutcome {
  std::string cell;
  bool skipped = false;
  bool failed = false;
  std::string error;
};

// Runs every cell (skipping completed ones by manifest hash), then writes
// the summary. Failures are recorded per cell and do not stop the sweep.
std::vector<CellOutcome> run_experiment(const ExperimentSpec& spec, const std::string& out_dir);

// Rebuilds summary.csv purely from the cell manifests under out_dir.
void write_summary(const std::string& out_dir);

// Emits accuracy-vs-radius, loss-vs-iteration and accuracy-vs-iteration
// charts plus a tidy CSV of every plotted value; gaps are listed in a
// warning manifest.
void emit_plots(const std::string& out_dir);

}  // namespace unlearn
