#include "unlearn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "unlearn/checkpoint.hpp"
#include "unlearn/common.hpp"
#include "unlearn/io_util.hpp"
#include "unlearn/noise_bank.hpp"

namespace unlearn {

namespace fs = std::filesystem;

ExampleSet resolve_dataset(const nlohmann::json& spec) {
  check_config(spec.is_object() && spec.contains("kind"),
               "dataset spec needs a \"kind\" field");
  const std::string kind = spec["kind"].get<std::string>();
  if (kind == "synthetic") {
    SyntheticSpec s;
    s.classes = spec.value("classes", s.classes);
    s.per_class = spec.value("per_class", s.per_class);
    s.channels = spec.value("channels", s.channels);
    s.height = spec.value("height", s.height);
    s.width = spec.value("width", s.width);
    s.seed = spec.value("seed", s.seed);
    s.split = spec.value("split", s.split);
    s.pattern_amplitude = spec.value("pattern_amplitude", s.pattern_amplitude);
    s.noise_sigma = spec.value("noise_sigma", s.noise_sigma);
    s.pattern_cell = spec.value("pattern_cell", s.pattern_cell);
    return make_synthetic(s);
  }
  if (kind == "cifar10") {
    return load_cifar10(spec.at("dir").get<std::string>(), spec.value("split", "train"));
  }
  if (kind == "cifar100") {
    return load_cifar100(spec.at("dir").get<std::string>(), spec.value("split", "train"));
  }
  if (kind == "file") {
    return load_examples(spec.at("stem").get<std::string>());
  }
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

TrainConfig parse_train_config(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.sgd.lr = j.value("lr", cfg.sgd.lr);
  cfg.sgd.momentum = j.value("momentum", cfg.sgd.momentum);
  cfg.sgd.weight_decay = j.value("weight_decay", cfg.sgd.weight_decay);
  cfg.sgd.decay_factor = j.value("lr_decay_factor", cfg.sgd.decay_factor);
  cfg.sgd.decay_period = j.value("lr_decay_period", cfg.sgd.decay_period);
  cfg.eval_period = j.value("eval_period", cfg.eval_period);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.augment_enabled = j.value("augment_enabled", cfg.augment_enabled);
  cfg.augment.pad = j.value("augment_pad", cfg.augment.pad);
  cfg.augment.flip_prob = j.value("augment_flip_prob", cfg.augment.flip_prob);
  if (j.contains("attack") && !j["attack"].is_null()) {
    const nlohmann::json& a = j["attack"];
    PerturbationBudget b;
    b.norm = norm_from_string(a.value("norm", "linf"));
    b.radius = a.value("radius", 0.0);
    b.steps = a.value("steps", 10);
    b.step = a.value("alpha", 0.0);
    if (b.step <= 0.0 && b.radius > 0.0 && b.steps > 0) {
      b.step = 2.0 * b.radius / b.steps;
    }
    if (b.step <= 0.0) b.step = 1.0;
    b.direction = +1;
    cfg.attack = b;
  }
  return cfg;
}

ModelConfig parse_model_config(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.architecture = j.value("architecture", cfg.architecture);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

ExperimentSpec ExperimentSpec::parse(const nlohmann::json& doc) {
  ExperimentSpec spec;
  spec.raw = doc;
  spec.raw.erase("parallelism");  // runtime knob, not part of the cell identity
  check_config(doc.contains("dataset"), "experiment spec needs a \"dataset\"");
  spec.dataset = doc["dataset"];
  check_config(doc.contains("test_dataset"), "experiment spec needs a \"test_dataset\"");
  spec.test_dataset = doc["test_dataset"];

  if (doc.contains("banks")) {
    check_config(doc["banks"].is_object(), "\"banks\" must map labels to bank stems");
    for (auto it = doc["banks"].begin(); it != doc["banks"].end(); ++it) {
      spec.banks.emplace_back(it.key(),
                              it.value().is_null() ? "" : it.value().get<std::string>());
    }
    std::sort(spec.banks.begin(), spec.banks.end());
  } else {
    spec.banks.emplace_back("clean", "");
  }

  if (doc.contains("percentages")) {
    spec.percentages = doc["percentages"].get<std::vector<double>>();
  }
  if (doc.contains("adv_radii")) spec.adv_radii = doc["adv_radii"].get<std::vector<double>>();
  spec.attack_norm = norm_from_string(doc.value("attack_norm", "linf"));
  spec.attack_steps = doc.value("attack_steps", spec.attack_steps);
  spec.attack_alpha = doc.value("attack_alpha", spec.attack_alpha);
  if (doc.contains("filters")) spec.filters = doc["filters"].get<std::vector<std::string>>();
  spec.filter_window = doc.value("filter_window", spec.filter_window);
  spec.filter_sigma = doc.value("filter_sigma", spec.filter_sigma);
  spec.model = parse_model_config(doc.value("model", nlohmann::json::object()));
  spec.train_base = parse_train_config(doc.value("train", nlohmann::json::object()));
  spec.quantize = doc.value("quantize", false);
  spec.seed = doc.value("seed", std::uint64_t{0});
  spec.parallelism = doc.value("parallelism", 1);

  check_config(!spec.percentages.empty() && !spec.adv_radii.empty() && !spec.filters.empty(),
               "sweep axes must be non-empty");
  for (double p : spec.percentages) {
    check_config(p >= 0.0 && p <= 1.0, "protection percentages must be in [0,1]");
  }
  for (const auto& f : spec.filters) {
    if (f != "none") filter_from_string(f);  // validates
  }
  return spec;
}

namespace {

struct Cell {
  std::string name;
  std::string noise;      // bank label
  std::string bank_stem;  // "" = clean
  double percentage = 0.0;
  double radius = 0.0;
  std::string filter;
};

std::string format_number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  std::string s(buf);
  for (auto& c : s) {
    if (c == '.') c = 'p';
    if (c == '-') c = 'm';
  }
  return s;
}

std::vector<Cell> enumerate_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (const auto& [label, stem] : spec.banks) {
    // A clean arm has no protection axis.
    const std::vector<double> pcts = stem.empty() ? std::vector<double>{0.0}
                                                  : spec.percentages;
    for (double pct : pcts) {
      for (double radius : spec.adv_radii) {
        for (const auto& filter : spec.filters) {
          Cell c;
          c.noise = label;
          c.bank_stem = stem;
          c.percentage = pct;
          c.radius = radius;
          c.filter = filter;
          c.name = label + "_p" + format_number(pct * 100.0) + "_r" +
                   format_number(radius * 255.0) + "_f" + filter;
          cells.push_back(std::move(c));
        }
      }
    }
  }
  std::sort(cells.begin(), cells.end(),
            [](const Cell& a, const Cell& b) { return a.name < b.name; });
  return cells;
}

nlohmann::json cell_config_json(const ExperimentSpec& spec, const Cell& cell) {
  nlohmann::json j;
  j["experiment"] = spec.raw;
  j["cell"] = {{"noise", cell.noise},
               {"bank", cell.bank_stem},
               {"percentage", cell.percentage},
               {"radius", cell.radius},
               {"filter", cell.filter}};
  return j;
}

std::uint64_t label_key(const std::string& label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

void run_cell(const ExperimentSpec& spec, const Cell& cell, const ExampleSet& clean_train,
              const ExampleSet& test_set, const NoiseBank* bank, const fs::path& cell_dir) {
  fs::create_directories(cell_dir);
  const nlohmann::json cfg_json = cell_config_json(spec, cell);
  const std::string cfg_hash = json_hash(cfg_json);

  nlohmann::json manifest;
  manifest["kind"] = "cell-manifest";
  manifest["cell"] = cell.name;
  manifest["noise"] = cell.noise;
  manifest["percentage"] = cell.percentage;
  manifest["radius"] = cell.radius;
  manifest["filter"] = cell.filter;
  manifest["config_hash"] = cfg_hash;

  try {
    ExampleSet train_set =
        bank ? mix_protected(clean_train, *bank, cell.percentage,
                             RngStream(spec.seed)
                                 .derive("mix", label_key(cell.noise),
                                         static_cast<std::uint64_t>(
                                             std::llround(cell.percentage * 1e6)))
                                 .next_u64(),
               spec.quantize)
             : clean_train;
    if (cell.filter != "none") {
      FilterSpec fspec;
      fspec.kind = filter_from_string(cell.filter);
      fspec.window = spec.filter_window;
      fspec.gaussian_sigma = spec.filter_sigma;
      train_set.images = lowpass(train_set.images, fspec);
    }

    TrainConfig tc = spec.train_base;
    if (cell.radius > 0.0) {
      PerturbationBudget b;
      b.norm = spec.attack_norm;
      b.radius = cell.radius;
      b.steps = spec.attack_steps;
      b.step = spec.attack_alpha > 0.0 ? spec.attack_alpha
                                       : 2.0 * cell.radius / spec.attack_steps;
      b.direction = +1;
      tc.attack = b;
    } else {
      tc.attack.reset();
    }

    const std::string abort_stem = (cell_dir / "abort_checkpoint").string();
    TrainResult res = train(train_set, &test_set, spec.model, tc, &abort_stem);

    save_checkpoint(*res.model, (cell_dir / "checkpoint").string(), tc.iterations);
    res.log.write_csv((cell_dir / "metrics.csv").string());

    manifest["status"] = "complete";
    manifest["iterations"] = tc.iterations;
    manifest["final_train_acc"] = res.log.evals.empty() ? 0.0 : res.log.evals.back().train_acc;
    manifest["final_test_acc"] = res.log.evals.empty() ? 0.0 : res.log.evals.back().test_acc;
    manifest["seconds"] = res.log.total_seconds;
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
  }
  write_json_file((cell_dir / "manifest.json").string(), manifest);
}

}  // namespace

std::vector<CellOutcome> run_experiment(const ExperimentSpec& spec,
                                        const std::string& out_dir) {
  const fs::path root(out_dir);
  fs::create_directories(root / "cells");

  const ExampleSet clean_train = resolve_dataset(spec.dataset);
  const ExampleSet test_set = resolve_dataset(spec.test_dataset);

  std::map<std::string, NoiseBank> banks;
  for (const auto& [label, stem] : spec.banks) {
    if (!stem.empty()) {
      banks.emplace(label, load_bank(stem));
      // Pre-flight: the bank must cover the dataset before any training.
      check_data(banks.at(label).deltas.slice_size() == clean_train.images.slice_size(),
                 "bank '" + label + "' image shape does not match the dataset");
    }
  }

  const std::vector<Cell> cells = enumerate_cells(spec);
  std::vector<CellOutcome> outcomes(cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      CellOutcome& out = outcomes[i];
      out.cell = cell.name;
      const fs::path cell_dir = root / "cells" / cell.name;
      const fs::path manifest_path = cell_dir / "manifest.json";

      const std::string cfg_hash = json_hash(cell_config_json(spec, cell));
      if (fs::exists(manifest_path)) {
        nlohmann::json existing = read_json_file(manifest_path.string());
        if (existing.value("config_hash", "") == cfg_hash &&
            existing.value("status", "") == "complete") {
          out.skipped = true;
          continue;
        }
      }
      const NoiseBank* bank =
          cell.bank_stem.empty() ? nullptr : &banks.at(cell.noise);
      run_cell(spec, cell, clean_train, test_set, bank, cell_dir);
      nlohmann::json written = read_json_file(manifest_path.string());
      if (written.value("status", "") != "complete") {
        out.failed = true;
        out.error = written.value("error", "unknown failure");
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(spec.parallelism,
                                             static_cast<int>(cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  write_summary(out_dir);
  return outcomes;
}

void write_summary(const std::string& out_dir) {
  const fs::path cells_dir = fs::path(out_dir) / "cells";
  check_data(fs::exists(cells_dir), out_dir + " has no cells directory");

  std::vector<nlohmann::json> manifests;
  for (const auto& entry : fs::directory_iterator(cells_dir)) {
    const fs::path manifest = entry.path() / "manifest.json";
    if (fs::exists(manifest)) manifests.push_back(read_json_file(manifest.string()));
  }
  std::sort(manifests.begin(), manifests.end(),
            [](const nlohmann::json& a, const nlohmann::json& b) {
              return a.value("cell", "") < b.value("cell", "");
            });

  std::ofstream out((fs::path(out_dir) / "summary.csv").string(), std::ios::trunc);
  check_data(out.good(), "cannot write summary.csv under " + out_dir);
  out << "cell,noise,percentage,radius,filter,status,final_train_acc,final_test_acc\n";
  char buf[256];
  for (const auto& m : manifests) {
    const std::string status = m.value("status", "failed");
    if (status == "complete") {
      std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.9g,%s,%s,%.4f,%.4f\n",
                    m.value("cell", "").c_str(), m.value("noise", "").c_str(),
                    m.value("percentage", 0.0), m.value("radius", 0.0),
                    m.value("filter", "").c_str(), status.c_str(),
                    m.value("final_train_acc", 0.0), m.value("final_test_acc", 0.0));
    } else {
      std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.9g,%s,%s,,\n",
                    m.value("cell", "").c_str(), m.value("noise", "").c_str(),
                    m.value("percentage", 0.0), m.value("radius", 0.0),
                    m.value("filter", "").c_str(), status.c_str());
    }
    out << buf;
  }
}

}  // namespace unlearn
