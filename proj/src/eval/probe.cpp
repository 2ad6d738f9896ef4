#include <algorithm>
#include <cmath>
#include <set>

#include "avt/autodiff/ops.hpp"
#include "avt/error.hpp"
#include "avt/eval.hpp"
#include "avt/optimizer.hpp"
#include "avt/rng.hpp"

namespace avt {
namespace {

using TD = ad::Tensor<double>;

struct Layer {
  std::size_t w, b;
  bool norm = false;
  std::size_t gamma = 0, beta = 0;
  ad::BatchNormStats<double> stats;
};

class Probe {
 public:
  Probe(std::size_t in, std::size_t classes, ProbeKind kind, std::size_t hidden, Rng& rng) {
    if (kind == ProbeKind::kLinear) {
      add(in, classes, false, rng);
    } else {
      add(in, hidden, true, rng);
      add(hidden, hidden, true, rng);
      add(hidden, classes, false, rng);
    }
  }

  TD forward(const TD& x, ad::Mode mode) {
    TD h = x;
    for (auto& l : layers_) {
      h = ad::dense(h, params_[l.w].value, params_[l.b].value);
      if (!l.norm) continue;
      const std::size_t n = h.dim(0), c = h.dim(1);
      h = ad::reshape(h, {n, c, 1, 1});
      h = ad::batch_norm2d(h, params_[l.gamma].value, params_[l.beta].value, mode, l.stats);
      h = ad::relu(ad::reshape(h, {n, c}));
    }
    return h;
  }

  std::vector<Parameter<double>>& params() { return params_; }

 private:
  void add(std::size_t in, std::size_t out, bool norm, Rng& rng) {
    Layer l;
    std::vector<double> w(in * out);
    fill_normal<double>(rng, w);
    const double sd = std::sqrt((norm ? 2.0 : 1.0) / static_cast<double>(in));
    for (double& v : w) v *= sd;
    l.w = push("w", {in, out}, std::move(w), true);
    l.b = push("b", {out}, std::vector<double>(out, 0.0), false);
    l.norm = norm;
    if (norm) {
      l.gamma = push("gamma", {out}, std::vector<double>(out, 1.0), false);
      l.beta = push("beta", {out}, std::vector<double>(out, 0.0), false);
      l.stats = ad::BatchNormStats<double>(out);
    }
    layers_.push_back(std::move(l));
  }
  std::size_t push(const std::string& kind, ad::Shape shape, std::vector<double> v, bool decay) {
    params_.push_back({"probe." + std::to_string(layers_.size()) + "." + kind,
                       TD::from(std::move(shape), std::move(v), true), decay});
    return params_.size() - 1;
  }

  std::vector<Layer> layers_;
  std::vector<Parameter<double>> params_;
};

TD gather(const std::vector<double>& z, std::size_t dims, std::span<const std::size_t> rows) {
  std::vector<double> v(rows.size() * dims);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(rows[i] * dims), dims, v.begin() + i * dims);
  return TD::from({rows.size(), dims}, std::move(v));
}

double error_of(Probe& probe, const std::vector<double>& z, const FeatureMatrix& fm) {
  if (fm.rows == 0 || fm.labels.size() != fm.rows) return std::nan("");
  ad::NoGradGuard no_grad;
  const auto logits = probe.forward(TD::from({fm.rows, fm.dims}, z), ad::Mode::kEval);
  const std::size_t k = logits.dim(1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < fm.rows; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
    wrong += pred != fm.labels[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(fm.rows);
}

}  // namespace

ProbeResult probe_train(const FeatureMatrix& train, const FeatureMatrix& test, ProbeKind kind,
                        const ProbeOptions& options) {
  if (train.labels.size() != train.rows || train.rows < 2)
    throw ConfigError("probe_train: needs at least two labeled training rows");
  if (test.dims != train.dims) throw ShapeError("probe_train: feature widths differ");
  const std::set<std::int32_t> classes(train.labels.begin(), train.labels.end());
  if (classes.size() < 2) throw ConfigError("probe_train: training labels hold a single class");
  if (*classes.begin() < 0) throw ConfigError("probe_train: negative class label");
  const std::size_t num_classes = static_cast<std::size_t>(*classes.rbegin()) + 1;

  // Standardize with training statistics.
  const std::size_t d = train.dims;
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < train.rows; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += train.values[i * d + j];
  for (double& m : mu) m /= static_cast<double>(train.rows);
  for (std::size_t i = 0; i < train.rows; ++i)
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(train.values[i * d + j] - mu[j], 2);
  for (double& s : sd) s = std::max(std::sqrt(s / static_cast<double>(train.rows)), 1e-12);
  auto standardize = [&](const FeatureMatrix& fm) {
    std::vector<double> z(fm.values);
    for (std::size_t i = 0; i < fm.rows; ++i)
      for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (z[i * d + j] - mu[j]) / sd[j];
    return z;
  };
  const auto ztrain = standardize(train), ztest = standardize(test);

  Rng rng = derive_rng(options.seed, {0x960BEull});
  Probe probe(d, num_classes, kind, options.hidden, rng);
  SgdConfig sgd = SgdConfig::scaled_to(std::max<std::size_t>(options.epochs, 4));
  sgd.peak_lr = options.peak_lr;
  sgd.base_lr = options.peak_lr / 5;
  sgd.final_lr = options.peak_lr / 100;
  sgd.validate();
  Sgd<double> opt(sgd);
  for (std::size_t e = 0; e < sgd.total_epochs; ++e) {
    const double lr = lr_schedule(e, sgd);
    for (const auto& rows : epoch_batches(train.rows, options.batch_size, options.seed, e)) {
      if (rows.size() < 2) continue;  // batch norm needs two rows
      std::vector<std::int32_t> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = train.labels[rows[i]];
      const auto logits = probe.forward(gather(ztrain, d, rows), ad::Mode::kTrain);
      ad::backward(ad::cross_entropy(logits, labels));
      opt.step(probe.params(), lr);
    }
  }
  return {error_of(probe, ztrain, train), error_of(probe, ztest, test)};
}

}  // namespace avt
