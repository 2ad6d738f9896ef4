#include "avt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "avt/error.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  int base = 10;
  std::string_view s(v);
  if (s.starts_with("0x") || s.starts_with("0X")) {
    base = 16;
    s.remove_prefix(2);
  }
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out, base);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}


std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (const auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

template <typename F>
std::string join(const std::vector<F>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  const char* name;
  Setter set;
  Getter get;
};

std::size_t to_size(const std::string& k, const std::string& v) {
  return static_cast<std::size_t>(to_u64(k, v));
}

const std::vector<Key>& table() {
  static const std::vector<Key> keys = {
      {"dataset",
       [](RunConfig& c, auto&, auto& v) {
         if (v != "synthetic" && v != "mnist" && v != "cifar10")
           throw ConfigError("dataset: expected synthetic, mnist or cifar10, got '" + v + "'");
         c.dataset = v;
       },
       [](auto& c) { return c.dataset; }},
      {"data_dir", [](RunConfig& c, auto&, auto& v) { c.data_dir = v; },
       [](auto& c) { return c.data_dir.string(); }},
      {"train_count", [](RunConfig& c, auto& k, auto& v) { c.train_count = to_size(k, v); },
       [](auto& c) { return std::to_string(c.train_count); }},
      {"test_count", [](RunConfig& c, auto& k, auto& v) { c.test_count = to_size(k, v); },
       [](auto& c) { return std::to_string(c.test_count); }},
      {"synthetic_size", [](RunConfig& c, auto& k, auto& v) { c.synthetic_size = to_size(k, v); },
       [](auto& c) { return std::to_string(c.synthetic_size); }},
      {"synthetic_seed", [](RunConfig& c, auto& k, auto& v) { c.synthetic_seed = to_u64(k, v); },
       [](auto& c) { return std::to_string(c.synthetic_seed); }},
      {"mode", [](RunConfig& c, auto&, auto& v) { c.mode = parse_objective(v); },
       [](auto& c) { return to_string(c.mode); }},
      {"precision", [](RunConfig& c, auto&, auto& v) { c.precision = parse_precision(v); },
       [](auto& c) { return to_string(c.precision); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); },
       [](auto& c) { return std::to_string(c.seed); }},
      {"out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; },
       [](auto& c) { return c.out_dir.string(); }},
      {"enc1", [](RunConfig& c, auto& k, auto& v) { c.model.enc1 = to_size(k, v); },
       [](auto& c) { return std::to_string(c.model.enc1); }},
      {"enc2", [](RunConfig& c, auto& k, auto& v) { c.model.enc2 = to_size(k, v); },
       [](auto& c) { return std::to_string(c.model.enc2); }},
      {"dec3", [](RunConfig& c, auto& k, auto& v) { c.model.dec3 = to_size(k, v); },
       [](auto& c) { return std::to_string(c.model.dec3); }},
      {"dec4", [](RunConfig& c, auto& k, auto& v) { c.model.dec4 = to_size(k, v); },
       [](auto& c) { return std::to_string(c.model.dec4); }},
      {"logvar_init", [](RunConfig& c, auto& k, auto& v) { c.model.logvar_init = to_double(k, v); },
       [](auto& c) { return num(c.model.logvar_init); }},
      {"jitter", [](RunConfig& c, auto& k, auto& v) { c.prior.jitter_max = to_double(k, v); },
       [](auto& c) { return num(c.prior.jitter_max); }},
      {"scale_min", [](RunConfig& c, auto& k, auto& v) { c.prior.scale_min = to_double(k, v); },
       [](auto& c) { return num(c.prior.scale_min); }},
      {"scale_max", [](RunConfig& c, auto& k, auto& v) { c.prior.scale_max = to_double(k, v); },
       [](auto& c) { return num(c.prior.scale_max); }},
      {"rotations",
       [](RunConfig& c, auto& k, auto& v) {
         c.prior.rotations_deg.clear();
         for (const auto& r : split_list(v)) c.prior.rotations_deg.push_back(to_double(k, r));
       },
       [](auto& c) { return join(c.prior.rotations_deg); }},
      {"family", [](RunConfig& c, auto&, auto& v) { c.prior.family = parse_family(v); },
       [](auto& c) { return to_string(c.prior.family); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_size(k, v); },
       [](auto& c) { return std::to_string(c.batch_size); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.sgd.total_epochs = to_size(k, v); },
       [](auto& c) { return std::to_string(c.sgd.total_epochs); }},
      {"base_lr", [](RunConfig& c, auto& k, auto& v) { c.sgd.base_lr = to_double(k, v); },
       [](auto& c) { return num(c.sgd.base_lr); }},
      {"peak_lr", [](RunConfig& c, auto& k, auto& v) { c.sgd.peak_lr = to_double(k, v); },
       [](auto& c) { return num(c.sgd.peak_lr); }},
      {"final_lr", [](RunConfig& c, auto& k, auto& v) { c.sgd.final_lr = to_double(k, v); },
       [](auto& c) { return num(c.sgd.final_lr); }},
      {"warmup_epochs",
       [](RunConfig& c, auto& k, auto& v) {
         c.warmup_auto = v == "auto";
         if (!c.warmup_auto) c.sgd.warmup_epochs = to_size(k, v);
       },
       [](auto& c) { return std::to_string(c.sgd.warmup_epochs); }},
      {"decay_start_epoch",
       [](RunConfig& c, auto& k, auto& v) {
         c.decay_start_auto = v == "auto";
         if (!c.decay_start_auto) c.sgd.decay_start_epoch = to_size(k, v);
       },
       [](auto& c) { return std::to_string(c.sgd.decay_start_epoch); }},
      {"momentum", [](RunConfig& c, auto& k, auto& v) { c.sgd.momentum = to_double(k, v); },
       [](auto& c) { return num(c.sgd.momentum); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.sgd.weight_decay = to_double(k, v); },
       [](auto& c) { return num(c.sgd.weight_decay); }},
      {"checkpoint_every",
       [](RunConfig& c, auto& k, auto& v) { c.checkpoint_every = to_size(k, v); },
       [](auto& c) { return std::to_string(c.checkpoint_every); }},
      {"heldout_samples", [](RunConfig& c, auto& k, auto& v) { c.heldout_samples = to_size(k, v); },
       [](auto& c) { return std::to_string(c.heldout_samples); }},
      {"eval_k_samples",
       [](RunConfig& c, auto& k, auto& v) {
         c.eval_k_samples.clear();
         for (const auto& s : split_list(v)) c.eval_k_samples.push_back(to_size(k, s));
       },
       [](auto& c) { return join(c.eval_k_samples); }},
      {"knn_k",
       [](RunConfig& c, auto& k, auto& v) {
         c.knn_k.clear();
         for (const auto& s : split_list(v)) c.knn_k.push_back(to_size(k, s));
       },
       [](auto& c) { return join(c.knn_k); }},
      {"probe_epochs", [](RunConfig& c, auto& k, auto& v) { c.probe_epochs = to_size(k, v); },
       [](auto& c) { return std::to_string(c.probe_epochs); }},
      {"probes",
       [](RunConfig& c, auto& k, auto& v) {
         c.probe_linear = c.probe_nonlinear = false;
         for (const auto& p : split_list(v)) {
           if (p == "linear") c.probe_linear = true;
           else if (p == "nonlinear") c.probe_nonlinear = true;
           else if (p != "none") throw ConfigError(k + ": unknown probe '" + p + "'");
         }
       },
       [](auto& c) {
         std::vector<std::string> p;
         if (c.probe_linear) p.push_back("linear");
         if (c.probe_nonlinear) p.push_back("nonlinear");
         return p.empty() ? std::string("none") : join(p);
       }},
      {"baseline",
       [](RunConfig& c, auto& k, auto& v) {
         if (v != "random" && v != "none")
           throw ConfigError(k + ": expected random or none, got '" + v + "'");
         c.baseline_random = v == "random";
       },
       [](auto& c) { return std::string(c.baseline_random ? "random" : "none"); }},
  };
  return keys;
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : table()) out.emplace_back(k.name);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& t = table();
  const auto it = std::find_if(t.begin(), t.end(), [&](const Key& k) { return key == k.name; });
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  it->set(*this, key, value);
}

void RunConfig::resolve() {
  model.in_channels = dataset == "mnist" ? 1 : dataset == "cifar10" ? 3 : 1;
  model.validate();
  prior.validate();
  if (sgd.total_epochs < 4) throw ConfigError("epochs must be at least 4");
  const SgdConfig scaled = SgdConfig::scaled_to(sgd.total_epochs);
  if (warmup_auto) sgd.warmup_epochs = scaled.warmup_epochs;
  if (decay_start_auto) sgd.decay_start_epoch = scaled.decay_start_epoch;
  sgd.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
  if (dataset == "synthetic" && (train_count == 0 || test_count == 0))
    throw ConfigError("synthetic runs need positive train_count and test_count");
  if (dataset == "synthetic" && synthetic_size < 8) throw ConfigError("synthetic_size must be >= 8");
  if (knn_k.empty()) throw ConfigError("knn_k must list at least one K");
  for (auto k : knn_k)
    if (k == 0) throw ConfigError("knn_k entries must be positive");
  if (eval_k_samples.empty()) throw ConfigError("eval_k_samples must list at least one value");
  if ((probe_linear || probe_nonlinear) && probe_epochs < 4)
    throw ConfigError("probe_epochs must be at least 4");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& k : table()) os << k.name << " = " << k.get(*this) << '\n';
  return os.str();
}

std::uint64_t RunConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  // Keys that only locate files or shape evaluation leave training
  // untouched, so a checkpoint stays valid when they change.
  static const std::set<std::string> skip = {"data_dir", "out_dir",      "eval_k_samples", "knn_k",
                                             "probe_epochs", "probes", "baseline"};
  for (const auto& k : table()) {
    if (skip.contains(k.name)) continue;
    for (char ch : std::string(k.name) + "=" + k.get(*this) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  Dataset train, test;
  if (cfg.dataset == "synthetic") {
    const Dataset all =
        gen_synthetic_shapes(cfg.synthetic_seed, cfg.train_count + cfg.test_count, cfg.synthetic_size);
    train = take(all, 0, cfg.train_count);
    test = take(all, cfg.train_count, cfg.test_count);
    train.split = "train";
    test.split = "test";
    return {std::move(train), std::move(test)};
  }
  const fs::path root = data_root(cfg.data_dir);
  const fs::path sub = root / cfg.dataset;
  const fs::path dir = fs::exists(sub) ? sub : root;
  std::tie(train, test) = cfg.dataset == "mnist" ? load_mnist_idx(dir) : load_cifar10(dir);
  auto cap = [](const Dataset& ds, std::size_t n, const char* what) {
    if (n == 0) return ds;
    if (n > ds.count)
      throw ConfigError(std::string(what) + " = " + std::to_string(n) + " exceeds the " +
                        std::to_string(ds.count) + " available images");
    Dataset out = take(ds, 0, n);
    return out;
  };
  return {cap(train, cfg.train_count, "train_count"), cap(test, cfg.test_count, "test_count")};
}

}  // namespace avt
