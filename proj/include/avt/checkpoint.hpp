#pragma once
// Binary checkpoints. Layout, all integers little-endian:
//   "AVTCKPT1" | u8 version | u8 precision (0 = f64, 1 = f32)
//   u32 count, then per tensor: u32 name length, UTF-8 name, u32 rank,
//     u64 extents[rank], values[prod(extents)] as IEEE-754 of that precision
//   u32 count and tensors again for the optimizer buffers
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avt/model.hpp"
#include "avt/optimizer.hpp"

namespace avt {

enum class Precision : std::uint8_t { kFloat64 = 0, kFloat32 = 1 };

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::string to_string(Precision p);
Precision parse_precision(const std::string& name);
template <typename T>
constexpr Precision precision_of() {
  return sizeof(T) == 4 ? Precision::kFloat32 : Precision::kFloat64;
}

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<double> values;  // exact for both precisions
};

struct CheckpointFile {
  Precision precision = Precision::kFloat64;
  std::vector<NamedArray> tensors;
  std::vector<NamedArray> buffers;
};

// Writes to a sibling temporary file and renames it into place.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
// Throws CheckpointError on bad magic, version, checksum or truncation.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

struct RunMeta {
  std::uint64_t epoch = 0;  // epochs completed
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;  // hash of the resolved configuration
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model, const Sgd<T>& optimizer,
                     const RunMeta& meta);

// Restores into an existing model of the same architecture. Nothing is
// modified unless the whole file validates.
template <typename T>
RunMeta load_checkpoint(const std::filesystem::path& path, Model<T>& model, Sgd<T>& optimizer);

}  // namespace avt
