#pragma once
// Evaluation of frozen encoders: sampled feature extraction, KNN, probes,
// and the metrics file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "avt/data.hpp"
#include "avt/model.hpp"
#include "avt/objective.hpp"

namespace avt {

struct FeatureMatrix {
  std::size_t rows = 0, dims = 0;
  std::vector<double> values;  // rows x dims
  std::vector<std::int32_t> labels;
  std::size_t k_samples = 0;   // 0 = encoder means
  std::string layer = "enc.b2";

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dims, dims);
  }
};

// Globally pooled encoder output per image, averaged over `k_samples`
// reparameterized draws (0 uses the mean). Under kAet the encoder is
// deterministic and every k yields the means. Runs in eval mode without a tape.
template <typename T>
FeatureMatrix extract_features(Model<T>& model, const Dataset& raw, const NormStats& norm,
                               std::size_t k_samples, std::uint64_t seed,
                               Objective objective = Objective::kAvt,
                               std::size_t batch_size = 250);

// Replaces the encoder's batch-norm running statistics with their average
// over train-mode passes on `raw`, without touching any weight. Used to give
// a randomly initialized encoder the same footing as a trained one.
template <typename T>
void calibrate_encoder_norm(Model<T>& model, const Dataset& raw, const NormStats& norm,
                            std::size_t batch_size = 250);

struct KnnResult {
  std::vector<std::int32_t> predictions;
  double error_rate = 0;  // NaN when the test rows are unlabeled
};

// Euclidean K nearest neighbours (distance ties resolved by training row
// order). Vote ties go to the smallest summed distance, then the smallest
// class index.
KnnResult knn_classify(const FeatureMatrix& train, const FeatureMatrix& test, std::size_t k);

enum class ProbeKind { kLinear, kNonlinear };

struct ProbeOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  std::size_t hidden = 200;
  double peak_lr = 0.05;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double train_error = 0;
  double test_error = 0;
};

// Softmax classifier on frozen, standardized features. Nonlinear probes
// have two hidden layers with batch norm and ReLU.
ProbeResult probe_train(const FeatureMatrix& train, const FeatureMatrix& test, ProbeKind kind,
                        const ProbeOptions& options);

// Append-only CSV with header metric,param,value,seed,epoch.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const std::string& metric, const std::string& param, double value,
             std::uint64_t seed, std::uint64_t epoch);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct MetricRow {
  std::string metric, param;
  double value = 0;
  std::uint64_t seed = 0, epoch = 0;
};

// Throws IngestError naming the offending line.
std::vector<MetricRow> read_metrics(const std::filesystem::path& path);

inline constexpr std::size_t kKnnGrid[] = {3, 5, 10, 15, 20};

}  // namespace avt
