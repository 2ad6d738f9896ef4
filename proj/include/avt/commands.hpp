#pragma once
// Entry points behind the command-line subcommands. Each one works on a
// run directory holding config.resolved, metrics.csv and either
// checkpoint.ckpt or a FAILED marker.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "avt/config.hpp"

namespace avt {

inline constexpr const char* kResolvedConfigFile = "config.resolved";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kFailureMarker = "FAILED";

// Creates out_dir and writes the resolved configuration into it.
void prepare_run_dir(const RunConfig& cfg);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::optional<std::size_t> stop_after;        // stop once this many epochs are done
};

struct TrainOutcome {
  std::uint64_t epochs_completed = 0;
  bool failed = false;
  std::string message;
};

// Non-finite losses end the run with a FAILED marker; the last checkpoint
// written stays in place.
TrainOutcome run_train(const RunConfig& cfg, const TrainOptions& options, std::ostream& log);

// KNN errors over the configured K grid and sample counts, probe errors,
// held-out NLL and the surrogate mutual-information bound. Appends to the
// run's metrics file.
void run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Runtime self-checks of gradients, geometry, likelihoods, sampling,
// checkpoints and classification. `inject_adjoint_fault` corrupts the
// multiplication adjoint first, as a negative control.
std::vector<VerifyCheck> run_verify(bool inject_adjoint_fault, std::ostream& log);

// loss_vs_epoch.svg and knn_vs_k.svg from a metrics file.
void run_plot(const std::filesystem::path& metrics, const std::filesystem::path& out_dir);

// Writes the configured synthetic splits as IDX files readable by the
// MNIST loader.
void run_export(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace avt
