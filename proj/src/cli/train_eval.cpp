#include <cmath>
#include <fstream>
#include <sstream>

#include "avt/commands.hpp"
#include "avt/error.hpp"
#include "avt/eval.hpp"
#include "avt/training.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

TrainSetup make_setup(const RunConfig& cfg, const Dataset& train, const Dataset& test) {
  TrainSetup s;
  s.train = &train;
  s.heldout = &test;
  s.norm = compute_norm_stats(train);
  s.prior = cfg.prior;
  s.standardizer = TargetStandardizer::for_prior(cfg.prior);
  s.objective = cfg.mode;
  s.batch_size = cfg.batch_size;
  s.seed = cfg.seed;
  s.heldout_samples = cfg.heldout_samples;
  return s;
}

void check_channels(const RunConfig& cfg, const Dataset& ds) {
  if (ds.channels != cfg.model.in_channels)
    throw ConfigError("dataset has " + std::to_string(ds.channels) + " channels, model expects " +
                      std::to_string(cfg.model.in_channels));
}

template <typename T>
TrainOutcome train_impl(const RunConfig& cfg, const TrainOptions& opts, std::ostream& log) {
  const auto [train, test] = load_datasets(cfg);
  check_channels(cfg, train);
  const TrainSetup setup = make_setup(cfg, train, test);
  const fs::path ckpt = cfg.out_dir / kCheckpointFile;
  const std::uint64_t fp = cfg.fingerprint();

  Model<T> model(cfg.model, cfg.seed);
  Sgd<T> opt(cfg.sgd);
  std::uint64_t start = 0;
  if (opts.resume) {
    const RunMeta meta = load_checkpoint(*opts.resume, model, opt);
    if (meta.fingerprint != fp || meta.seed != cfg.seed)
      throw ConfigError("resume: " + opts.resume->string() +
                        " was written under a different configuration");
    start = meta.epoch;
    log << "resuming at epoch " << start << '\n';
  } else {
    save_checkpoint(ckpt, model, opt, RunMeta{0, cfg.seed, fp});
  }

  const std::uint64_t total = cfg.sgd.total_epochs;
  const std::uint64_t end = opts.stop_after ? std::min<std::uint64_t>(total, *opts.stop_after) : total;
  MetricsWriter metrics(cfg.out_dir / kMetricsFile);
  const std::string h_param =
      "surrogate_entropy=" + fmt(setup.standardizer.surrogate_entropy());
  TrainOutcome out{start, false, ""};
  for (std::uint64_t e = start; e < end; ++e) {
    const double lr = lr_schedule(e, cfg.sgd);
    EpochReport rep;
    double held = 0;
    try {
      rep = train_epoch(model, opt, setup, e, lr);
      held = heldout_nll(model, setup);
      if (!std::isfinite(held)) throw NonFiniteError("held-out NLL is not finite");
    } catch (const NonFiniteError& err) {
      std::ofstream marker(cfg.out_dir / kFailureMarker);
      marker << "epoch " << e << ": " << err.what() << '\n';
      out.failed = true;
      out.message = err.what();
      log << "epoch " << e << " failed: " << err.what() << '\n';
      return out;
    }
    metrics.write("lr", "-", lr, cfg.seed, e);
    metrics.write("train_nll", "-", rep.train_nll, cfg.seed, e);
    metrics.write("heldout_nll", "samples=" + std::to_string(cfg.heldout_samples), held, cfg.seed, e);
    metrics.write("mi_lower_bound", h_param, mi_lower_bound_estimate(-held, setup.standardizer),
                  cfg.seed, e);
    metrics.write("encoder_var", "-", rep.last.mean_encoder_var, cfg.seed, e);
    metrics.write("decoder_var", "-", rep.last.mean_decoder_var, cfg.seed, e);
    out.epochs_completed = e + 1;
    if ((e + 1) % cfg.checkpoint_every == 0 || e + 1 == end)
      save_checkpoint(ckpt, model, opt, RunMeta{e + 1, cfg.seed, fp});
    log << "epoch " << e << " lr " << fmt(lr) << " train_nll " << fmt(rep.train_nll)
        << " heldout_nll " << fmt(held) << '\n';
  }
  return out;
}

template <typename T>
void eval_impl(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  const auto [train, test] = load_datasets(cfg);
  check_channels(cfg, train);
  if (!train.labeled() || !test.labeled()) throw ConfigError("evaluation needs labeled data");
  const TrainSetup setup = make_setup(cfg, train, test);
  Model<T> model(cfg.model, cfg.seed);
  Sgd<T> opt(cfg.sgd);
  const RunMeta meta = load_checkpoint(checkpoint, model, opt);
  if (meta.fingerprint != cfg.fingerprint())
    log << "warning: checkpoint fingerprint differs from the configuration\n";
  for (auto k : cfg.knn_k)
    if (k > train.count) throw ConfigError("knn_k " + std::to_string(k) + " exceeds the training set");

  std::optional<Model<T>> random;
  if (cfg.baseline_random) {
    // Same architecture, independent init, batch-norm statistics taken
    // from the training images so only the weights differ.
    random.emplace(cfg.model, cfg.seed ^ 0x5A5A5A5A5A5A5A5Aull);
    calibrate_encoder_norm(*random, train, setup.norm);
  }

  MetricsWriter metrics(cfg.out_dir / kMetricsFile);
  const std::uint64_t epoch = meta.epoch;
  for (std::size_t s : cfg.eval_k_samples) {
    const std::string tag = "_s" + std::to_string(s);
    const auto ftr = extract_features(model, train, setup.norm, s, cfg.seed + 1, cfg.mode);
    const auto fte = extract_features(model, test, setup.norm, s, cfg.seed + 2, cfg.mode);
    std::optional<FeatureMatrix> rtr, rte;
    if (random) {
      rtr = extract_features(*random, train, setup.norm, s, cfg.seed + 1, cfg.mode);
      rte = extract_features(*random, test, setup.norm, s, cfg.seed + 2, cfg.mode);
    }
    for (std::size_t k : cfg.knn_k) {
      const std::string param = "K=" + std::to_string(k);
      const double err = knn_classify(ftr, fte, k).error_rate;
      metrics.write("knn_error" + tag, param, err, cfg.seed, epoch);
      log << "knn_error" << tag << ' ' << param << ' ' << fmt(err);
      if (random) {
        const double rerr = knn_classify(*rtr, *rte, k).error_rate;
        metrics.write("knn_error_random" + tag, param, rerr, cfg.seed, epoch);
        metrics.write("knn_gap" + tag, param, rerr - err, cfg.seed, epoch);
        log << " random " << fmt(rerr) << " gap " << fmt(rerr - err);
      }
      log << '\n';
    }
    ProbeOptions po;
    po.epochs = cfg.probe_epochs;
    po.seed = cfg.seed;
    const std::string pparam = "epochs=" + std::to_string(cfg.probe_epochs);
    for (auto [on, kind, name] : {std::tuple{cfg.probe_linear, ProbeKind::kLinear, "linear"},
                                  std::tuple{cfg.probe_nonlinear, ProbeKind::kNonlinear, "nonlinear"}}) {
      if (!on) continue;
      const auto r = probe_train(ftr, fte, kind, po);
      metrics.write(std::string("probe_") + name + "_error" + tag, pparam, r.test_error, cfg.seed, epoch);
      log << "probe_" << name << "_error" << tag << ' ' << fmt(r.test_error) << '\n';
    }
  }
  const double held = heldout_nll(model, setup);
  metrics.write("heldout_nll", "samples=" + std::to_string(cfg.heldout_samples), held, cfg.seed, epoch);
  metrics.write("mi_lower_bound", "surrogate_entropy=" + fmt(setup.standardizer.surrogate_entropy()),
                mi_lower_bound_estimate(-held, setup.standardizer), cfg.seed, epoch);
  log << "heldout_nll " << fmt(held) << '\n';
}

}  // namespace

void prepare_run_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = cfg.out_dir / kResolvedConfigFile;
  std::ofstream out(path);
  out << cfg.to_text();
  if (!out) throw Error("cannot write " + path.string());
}

TrainOutcome run_train(const RunConfig& cfg, const TrainOptions& options, std::ostream& log) {
  prepare_run_dir(cfg);
  return cfg.precision == Precision::kFloat32 ? train_impl<float>(cfg, options, log)
                                              : train_impl<double>(cfg, options, log);
}

void run_eval(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  if (!fs::exists(cfg.out_dir / kResolvedConfigFile)) prepare_run_dir(cfg);
  if (cfg.precision == Precision::kFloat32)
    eval_impl<float>(cfg, checkpoint, log);
  else
    eval_impl<double>(cfg, checkpoint, log);
}

}  // namespace avt
