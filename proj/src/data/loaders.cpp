#include <cstdlib>
#include <fstream>
#include <iterator>

#include "avt/data.hpp"
#include "avt/error.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPerBatch = 10000;

std::vector<unsigned char> read_all(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestError("cannot open " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void append(Dataset& dst, const Dataset& src) {
  dst.images.insert(dst.images.end(), src.images.begin(), src.images.end());
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
  dst.count += src.count;
}

fs::path cifar_dir(const fs::path& dir) {
  if (fs::exists(dir / "data_batch_1.bin")) return dir;
  return dir / "cifar-10-batches-bin";
}

}  // namespace

Dataset parse_cifar10_file(const fs::path& file, const std::string& split) {
  const auto bytes = read_all(file);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw IngestError(file.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a whole number of 3073-byte records");
  Dataset ds;
  ds.count = bytes.size() / kCifarRecord;
  ds.channels = 3;
  ds.height = ds.width = 32;
  ds.num_classes = 10;
  ds.split = split;
  ds.images.resize(ds.count * 3072);
  ds.labels.resize(ds.count);
  for (std::size_t r = 0; r < ds.count; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9)
      throw IngestError(file.string() + ": record " + std::to_string(r) + " has label " +
                        std::to_string(rec[0]));
    ds.labels[r] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) ds.images[r * 3072 + p] = rec[1 + p] / 255.0;
  }
  return ds;
}

std::pair<Dataset, Dataset> load_cifar10(const fs::path& dir) {
  const fs::path root = cifar_dir(dir);
  auto load_batch = [&](const std::string& name, const std::string& split) {
    const fs::path file = root / name;
    if (!fs::exists(file)) throw IngestError("missing CIFAR-10 file " + file.string());
    const auto size = fs::file_size(file);
    if (size != kCifarRecord * kCifarPerBatch)
      throw IngestError(file.string() + ": expected " +
                        std::to_string(kCifarRecord * kCifarPerBatch) + " bytes, found " +
                        std::to_string(size));
    return parse_cifar10_file(file, split);
  };
  Dataset train = load_batch("data_batch_1.bin", "train");
  for (int b = 2; b <= 5; ++b) append(train, load_batch("data_batch_" + std::to_string(b) + ".bin", "train"));
  Dataset test = load_batch("test_batch.bin", "test");
  return {std::move(train), std::move(test)};
}

Dataset parse_mnist_idx(const fs::path& images, const fs::path& labels, const std::string& split) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);
  if (ib.size() < 16) throw IngestError(images.string() + ": truncated header");
  if (lb.size() < 8) throw IngestError(labels.string() + ": truncated header");
  if (read_be32(ib, 0) != 0x00000803)
    throw IngestError(images.string() + ": bad magic (expected 0x00000803)");
  if (read_be32(lb, 0) != 0x00000801)
    throw IngestError(labels.string() + ": bad magic (expected 0x00000801)");
  const std::size_t n = read_be32(ib, 4), rows = read_be32(ib, 8), cols = read_be32(ib, 12);
  const std::size_t nl = read_be32(lb, 4);
  if (n != nl)
    throw IngestError(images.string() + ": " + std::to_string(n) + " images but " +
                      labels.string() + " holds " + std::to_string(nl) + " labels");
  if (ib.size() != 16 + n * rows * cols)
    throw IngestError(images.string() + ": truncated or oversized payload");
  if (lb.size() != 8 + n) throw IngestError(labels.string() + ": truncated or oversized payload");

  Dataset ds;
  ds.count = n;
  ds.channels = 1;
  ds.height = rows;
  ds.width = cols;
  ds.num_classes = 10;
  ds.split = split;
  ds.images.resize(n * rows * cols);
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = ib[16 + i] / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lb[8 + i] > 9)
      throw IngestError(labels.string() + ": label " + std::to_string(lb[8 + i]) + " at " +
                        std::to_string(i));
    ds.labels[i] = lb[8 + i];
  }
  return ds;
}

std::pair<Dataset, Dataset> load_mnist_idx(const fs::path& dir) {
  return {parse_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", "train"),
          parse_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", "test")};
}

fs::path data_root(const fs::path& fallback) {
  if (const char* env = std::getenv("AVT_DATA_DIR"); env && *env) return env;
  return fallback;
}

}  // namespace avt
