// avt: train, evaluate, verify, plot and export.
// Exit codes: 0 success, 1 verification failure, 2 configuration error,
// 3 runtime abort.

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avt/commands.hpp"
#include "avt/error.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kRuntimeAbort = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string mode, out;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--set", overrides, "override one key (key=value), repeatable");
    app->add_option("--mode", mode, "avt or aet");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--out", out, "run directory");
  }

  avt::RunConfig resolve() const {
    avt::RunConfig cfg = config.empty() ? avt::RunConfig{} : avt::parse_config_file(config);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw avt::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!mode.empty()) cfg.set("mode", mode);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out_dir = out;
    cfg.resolve();
    return cfg;
  }
};

int verify(bool inject) {
  const auto checks = avt::run_verify(inject, std::cerr);
  std::size_t failed = 0;
  std::cout << std::left << std::setw(6) << "status" << "  " << std::setw(54) << "check"
            << "detail\n";
  for (const auto& c : checks) {
    failed += !c.passed;
    std::cout << std::setw(6) << (c.passed ? "PASS" : "FAIL") << "  " << std::setw(54) << c.name
              << c.detail << '\n';
  }
  std::cout << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed ? kVerifyFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autoencoding variational transformations: training and evaluation"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, export_opts;
  bool resume = false;
  std::string resume_from;
  std::optional<std::size_t> stop_after;
  auto* train = app.add_subcommand("train", "train an encoder");
  train_opts.attach(train);
  train->add_flag("--resume", resume, "continue from the run directory's checkpoint");
  train->add_option("--resume-from", resume_from, "continue from this checkpoint");
  train->add_option("--stop-after", stop_after, "stop once this many epochs are complete");

  std::string checkpoint, baseline;
  std::vector<std::size_t> k_samples;
  auto* eval = app.add_subcommand("eval", "evaluate a trained encoder");
  eval_opts.attach(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/checkpoint.ckpt)");
  eval->add_option("--baseline", baseline, "also score a random encoder")
      ->check(CLI::IsMember({"random", "none"}));
  eval->add_option("--k-samples", k_samples, "representation samples per feature, repeatable")
      ->delimiter(',');

  std::string fault;
  auto* ver = app.add_subcommand("verify", "run the built-in self-checks");
  ver->add_option("--inject-fault", fault, "negative control: corrupt an adjoint")
      ->check(CLI::IsMember({"adjoint"}));

  std::string metrics, plot_out = ".";
  auto* plot = app.add_subcommand("plot", "SVG charts from a metrics file");
  plot->add_option("--metrics", metrics, "metrics.csv")->required();
  plot->add_option("--out", plot_out, "output directory");

  auto* exp = app.add_subcommand("export", "write the synthetic dataset as IDX files");
  export_opts.attach(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) {
      const auto cfg = train_opts.resolve();
      avt::TrainOptions o;
      if (!resume_from.empty()) o.resume = resume_from;
      else if (resume) o.resume = cfg.out_dir / avt::kCheckpointFile;
      o.stop_after = stop_after;
      const auto r = avt::run_train(cfg, o, std::cerr);
      return r.failed ? kRuntimeAbort : kOk;
    }
    if (*eval) {
      auto cfg = eval_opts.resolve();
      if (!baseline.empty()) cfg.baseline_random = baseline == "random";
      if (!k_samples.empty()) cfg.eval_k_samples = k_samples;
      avt::run_eval(cfg, checkpoint.empty() ? cfg.out_dir / avt::kCheckpointFile : fs::path(checkpoint),
                    std::cerr);
      return kOk;
    }
    if (*ver) return verify(fault == "adjoint");
    if (*plot) {
      avt::run_plot(metrics, plot_out);
      return kOk;
    }
    if (*exp) {
      const auto cfg = export_opts.resolve();
      avt::run_export(cfg, cfg.out_dir);
      return kOk;
    }
  } catch (const avt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }
  return kOk;
}
