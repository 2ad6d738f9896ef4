#pragma once
// Image datasets: binary loaders, the synthetic shapes corpus, per-channel
// normalization, and seeded batching.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace avt {

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool empty() const { return mean.empty(); }
};

struct Dataset {
  std::vector<double> images;  // N x C x H x W
  std::vector<std::int32_t> labels;  // empty when unlabeled
  std::size_t count = 0, channels = 0, height = 0, width = 0;
  std::int32_t num_classes = 0;
  std::string split;
  NormStats norm;  // set once normalized

  std::size_t image_size() const { return channels * height * width; }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(images).subspan(i * image_size(), image_size());
  }
  bool labeled() const { return !labels.empty(); }
};

// Parses any whole number of 3073-byte CIFAR-10 records (label byte then
// 3072 channel-major pixels) into 3 x 32 x 32 images scaled to [0, 1].
Dataset parse_cifar10_file(const std::filesystem::path& file, const std::string& split);

// data_batch_1..5.bin and test_batch.bin, each exactly 10000 records.
// Looks in `dir` and in `dir/cifar-10-batches-bin`.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

Dataset parse_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        const std::string& split);
// train-images-idx3-ubyte / train-labels-idx1-ubyte / t10k-* in `dir`.
std::pair<Dataset, Dataset> load_mnist_idx(const std::filesystem::path& dir);

// Grayscale images with 1-3 anti-aliased convex polygons over a background
// that darkens from top to bottom; label = polygon count - 1. Image i depends only on (seed, i, size).
Dataset gen_synthetic_shapes(std::uint64_t seed, std::size_t n, std::size_t size = 32);

NormStats compute_norm_stats(const Dataset& train);
Dataset normalize(const Dataset& ds, const NormStats& stats);
Dataset denormalize(const Dataset& ds);

Dataset take(const Dataset& ds, std::size_t begin, std::size_t count);

// Seeded permutation of [0, n) for one epoch, cut into batches of
// `batch_size`; the last short batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

// Dataset location: AVT_DATA_DIR when set, else `fallback`.
std::filesystem::path data_root(const std::filesystem::path& fallback);

}  // namespace avt
