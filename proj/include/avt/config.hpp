#pragma once
// Run configuration: a plain key=value file. Unknown or repeated keys are
// errors; every run writes the fully resolved configuration next to its
// outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "avt/checkpoint.hpp"
#include "avt/data.hpp"
#include "avt/model.hpp"
#include "avt/objective.hpp"
#include "avt/optimizer.hpp"
#include "avt/transforms.hpp"

namespace avt {

struct RunConfig {
  // data
  std::string dataset = "synthetic";  // synthetic | mnist | cifar10
  std::filesystem::path data_dir = "data";
  std::size_t train_count = 2000;  // 0 = everything available (real datasets)
  std::size_t test_count = 500;
  std::size_t synthetic_size = 32;
  std::uint64_t synthetic_seed = 2024;
  // run
  Objective mode = Objective::kAvt;
  Precision precision = Precision::kFloat32;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  // model and sampler
  ModelConfig model;
  TransformPrior prior;
  // optimization; warmup/decay waypoints are derived from epochs unless set
  std::size_t batch_size = 64;
  SgdConfig sgd = SgdConfig::scaled_to(30);
  bool warmup_auto = true;
  bool decay_start_auto = true;
  std::size_t checkpoint_every = 1;
  std::size_t heldout_samples = 5;
  // evaluation
  std::vector<std::size_t> eval_k_samples{5};
  std::vector<std::size_t> knn_k{3, 5, 10, 15, 20};
  std::size_t probe_epochs = 30;
  bool probe_linear = true;
  bool probe_nonlinear = true;
  bool baseline_random = false;

  // Applies one key=value; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  // Fills derived fields and checks cross-field invariants.
  void resolve();
  // Canonical text with every key, in a fixed order.
  std::string to_text() const;
  // FNV-1a over the keys that influence training (paths and evaluation
  // settings excluded).
  std::uint64_t fingerprint() const;

  static std::vector<std::string> keys();
};

// Parses a config file (comments start with '#'). Throws ConfigError with
// the file name and line number.
RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& source);

// Train and held-out splits for the configured dataset, raw pixels.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg);

}  // namespace avt
