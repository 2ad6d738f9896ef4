#pragma once
// Epoch-level training and held-out scoring. Every random draw comes from a
// stream derived from (seed, epoch, batch), so an epoch can be replayed from
// the checkpointed epoch counter alone.

#include <cstddef>
#include <cstdint>

#include "avt/objective.hpp"

namespace avt {

struct TrainSetup {
  const Dataset* train = nullptr;  // raw pixels
  const Dataset* heldout = nullptr;  // raw pixels, may be null
  NormStats norm;
  TransformPrior prior;
  TargetStandardizer standardizer;
  Objective objective = Objective::kAvt;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t heldout_samples = 5;  // representation samples averaged when scoring
};

struct EpochReport {
  std::uint64_t epoch = 0;
  double lr = 0;
  double train_nll = 0;  // mean over batches
  LossDiagnostics last;  // diagnostics of the final batch
  std::size_t batches = 0;
};

// Throws NonFiniteError on a non-finite loss or gradient (parameters are
// left as they were before the failing step).
template <typename T>
EpochReport train_epoch(Model<T>& model, Sgd<T>& optimizer, const TrainSetup& setup,
                        std::uint64_t epoch, double lr);

// Mean NLL over `setup.heldout` in eval mode with a fixed transformation
// stream, so values are comparable across epochs.
template <typename T>
double heldout_nll(Model<T>& model, const TrainSetup& setup);

}  // namespace avt
