#include "avt/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include <zlib.h>

#include "avt/error.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

constexpr char kMagic[8] = {'A', 'V', 'T', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<unsigned char>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<unsigned char>(v >> s));
  }
  std::vector<unsigned char>& buffer() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& b, std::size_t end) : b_(b), end_(end) {}
  void need(std::size_t n, const char* what) {
    if (end_ - pos_ < n) throw CheckpointError(std::string("checkpoint truncated reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "name");
    std::string s(b_.begin() + pos_, b_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void write_arrays(Writer& w, const std::vector<NamedArray>& arrays, Precision p) {
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    w.u32(static_cast<std::uint32_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.u32(static_cast<std::uint32_t>(a.extents.size()));
    std::uint64_t count = 1;
    for (auto e : a.extents) {
      w.u64(e);
      count *= e;
    }
    if (count != a.values.size())
      throw CheckpointError("tensor '" + a.name + "' extents disagree with its value count");
    for (double v : a.values) {
      if (p == Precision::kFloat64)
        w.u64(std::bit_cast<std::uint64_t>(v));
      else
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
}

std::vector<NamedArray> read_arrays(Reader& r, Precision p) {
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u32("name length"));
    const std::uint32_t rank = r.u32("rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      a.extents.push_back(r.u64("extent"));
      n *= a.extents.back();
    }
    r.need(n * (p == Precision::kFloat64 ? 8 : 4), "tensor values");
    a.values.resize(n);
    for (auto& v : a.values)
      v = p == Precision::kFloat64 ? std::bit_cast<double>(r.u64("value"))
                                   : static_cast<double>(std::bit_cast<float>(r.u32("value")));
    out.push_back(std::move(a));
  }
  return out;
}

// 64-bit integers are stored as four 16-bit chunks so they survive float32.
NamedArray pack_u64(const std::string& name, std::uint64_t v) {
  NamedArray a{name, {4}, {}};
  for (int k = 0; k < 4; ++k) a.values.push_back(static_cast<double>((v >> (16 * k)) & 0xFFFF));
  return a;
}

std::uint64_t unpack_u64(const NamedArray& a) {
  if (a.values.size() != 4) throw CheckpointError("malformed metadata tensor '" + a.name + "'");
  std::uint64_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint64_t>(a.values[k]) << (16 * k);
  return v;
}

template <typename T>
NamedArray to_array(const std::string& name, const ad::Shape& shape, std::span<const T> values) {
  return {name, std::vector<std::uint64_t>(shape.begin(), shape.end()),
          std::vector<double>(values.begin(), values.end())};
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::kFloat64 ? "float64" : "float32"; }

Precision parse_precision(const std::string& name) {
  if (name == "float64" || name == "f64" || name == "double") return Precision::kFloat64;
  if (name == "float32" || name == "f32" || name == "float") return Precision::kFloat32;
  throw ConfigError("unknown precision '" + name + "' (expected float64 or float32)");
}

void write_checkpoint_file(const fs::path& path, const CheckpointFile& file) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(file.precision));
  write_arrays(w, file.tensors, file.precision);
  write_arrays(w, file.buffers, file.precision);
  auto& buf = w.buffer();
  w.u32(static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size()))));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> b{std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>()};
  if (b.size() < sizeof kMagic + 2 + 4 || !std::equal(kMagic, kMagic + 8, b.begin()))
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  if (b[8] != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported version " + std::to_string(b[8]));
  if (b[9] > 1) throw CheckpointError(path.string() + ": bad precision flag");
  const std::size_t body = b.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(b[body + i]) << (8 * i);
  if (stored != static_cast<std::uint32_t>(crc32(0L, b.data(), static_cast<uInt>(body))))
    throw CheckpointError(path.string() + ": checksum mismatch (truncated or corrupt)");

  Reader r(b, body);
  r.str(10);
  CheckpointFile f;
  f.precision = static_cast<Precision>(b[9]);
  f.tensors = read_arrays(r, f.precision);
  f.buffers = read_arrays(r, f.precision);
  if (r.pos() != body) throw CheckpointError(path.string() + ": trailing bytes before checksum");
  return f;
}

template <typename T>
void save_checkpoint(const fs::path& path, Model<T>& model, const Sgd<T>& optimizer,
                     const RunMeta& meta) {
  CheckpointFile f;
  f.precision = precision_of<T>();
  for (const auto& p : model.parameters())
    f.tensors.push_back(to_array<T>(p.name, p.value.shape(), p.value.data()));
  for (const auto& l : model.norm_layers()) {
    const ad::Shape s{l.stats->running_mean.size()};
    f.tensors.push_back(to_array<T>(l.name + ".running_mean", s, l.stats->running_mean));
    f.tensors.push_back(to_array<T>(l.name + ".running_var", s, l.stats->running_var));
  }
  f.tensors.push_back(pack_u64("meta.epoch", meta.epoch));
  f.tensors.push_back(pack_u64("meta.seed", meta.seed));
  f.tensors.push_back(pack_u64("meta.fingerprint", meta.fingerprint));
  for (const auto& [name, v] : optimizer.velocity())
    f.buffers.push_back(to_array<T>(name, {v.size()}, v));
  write_checkpoint_file(path, f);
}

template <typename T>
RunMeta load_checkpoint(const fs::path& path, Model<T>& model, Sgd<T>& optimizer) {
  const CheckpointFile f = read_checkpoint_file(path);
  if (f.precision != precision_of<T>())
    throw CheckpointError(path.string() + ": stored as " + to_string(f.precision) +
                          ", run uses " + to_string(precision_of<T>()));
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : f.tensors) by_name[a.name] = &a;
  auto find = [&](const std::string& name, const ad::Shape& shape) -> const NamedArray& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(path.string() + ": missing tensor '" + name + "'");
    if (!std::equal(shape.begin(), shape.end(), it->second->extents.begin(),
                    it->second->extents.end()))
      throw CheckpointError(path.string() + ": tensor '" + name + "' has a different shape");
    return *it->second;
  };

  // Validate everything before touching the model.
  std::vector<const NamedArray*> params, stats;
  for (const auto& p : model.parameters()) params.push_back(&find(p.name, p.value.shape()));
  auto layers = model.norm_layers();
  for (const auto& l : layers) {
    const ad::Shape s{l.stats->running_mean.size()};
    stats.push_back(&find(l.name + ".running_mean", s));
    stats.push_back(&find(l.name + ".running_var", s));
  }
  RunMeta meta{unpack_u64(find("meta.epoch", {4})), unpack_u64(find("meta.seed", {4})),
               unpack_u64(find("meta.fingerprint", {4}))};
  std::map<std::string, std::vector<T>> velocity;
  for (const auto& b : f.buffers) {
    const auto it = std::find_if(model.parameters().begin(), model.parameters().end(),
                                 [&](const auto& p) { return p.name == b.name; });
    if (it == model.parameters().end() || b.values.size() != it->value.numel())
      throw CheckpointError(path.string() + ": optimizer buffer '" + b.name +
                            "' matches no parameter");
    velocity[b.name].assign(b.values.begin(), b.values.end());
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = model.parameters()[i].value.mutable_data();
    std::copy(params[i]->values.begin(), params[i]->values.end(), dst.begin());
    model.parameters()[i].value.zero_grad();
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].stats->running_mean.assign(stats[2 * i]->values.begin(), stats[2 * i]->values.end());
    layers[i].stats->running_var.assign(stats[2 * i + 1]->values.begin(),
                                        stats[2 * i + 1]->values.end());
  }
  optimizer.velocity() = std::move(velocity);
  return meta;
}

template void save_checkpoint(const fs::path&, Model<float>&, const Sgd<float>&, const RunMeta&);
template void save_checkpoint(const fs::path&, Model<double>&, const Sgd<double>&, const RunMeta&);
template RunMeta load_checkpoint(const fs::path&, Model<float>&, Sgd<float>&);
template RunMeta load_checkpoint(const fs::path&, Model<double>&, Sgd<double>&);

}  // namespace avt
