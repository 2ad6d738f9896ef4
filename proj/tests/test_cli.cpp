#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "avt/commands.hpp"
#include "avt/config.hpp"
#include "avt/error.hpp"
#include "avt/eval.hpp"
#include "doctest.h"

using namespace avt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "avt_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing, comments and errors") {
  const auto cfg = parse_config_text("# comment\n\nseed = 0x10\nmode=aet  # trailing\nrotations = 0, 180\n"
                                     "knn_k = 5\nprobes = linear\n",
                                     "t.cfg");
  CHECK(cfg.seed == 16);
  CHECK(cfg.mode == Objective::kAet);
  CHECK(cfg.prior.rotations_deg == std::vector<double>{0, 180});
  CHECK(cfg.knn_k == std::vector<std::size_t>{5});
  CHECK(cfg.probe_linear);
  CHECK_FALSE(cfg.probe_nonlinear);

  CHECK(error_of("seed = 1\nbogus = 3\n").find("t.cfg:2:") != std::string::npos);
  CHECK(error_of("seed = 1\nbogus = 3\n").find("bogus") != std::string::npos);
  CHECK(error_of("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(error_of("seed\n").find("t.cfg:1:") != std::string::npos);
  CHECK(error_of("seed = -1\n") != "");
  CHECK(error_of("peak_lr = fast\n") != "");
  CHECK(error_of("dataset = imagenet\n") != "");
  CHECK(error_of("mode = vae\n") != "");
  CHECK(error_of("precision = half\n") != "");
  CHECK_THROWS_AS(parse_config_file("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("resolution derives schedule waypoints and checks invariants") {
  RunConfig cfg;
  cfg.set("epochs", "30");
  cfg.resolve();
  CHECK(cfg.sgd.warmup_epochs == SgdConfig::scaled_to(30).warmup_epochs);
  CHECK(cfg.sgd.decay_start_epoch == SgdConfig::scaled_to(30).decay_start_epoch);
  CHECK(cfg.model.in_channels == 1);

  RunConfig explicit_cfg;
  explicit_cfg.set("epochs", "30");
  explicit_cfg.set("warmup_epochs", "3");
  explicit_cfg.set("decay_start_epoch", "12");
  explicit_cfg.resolve();
  CHECK(explicit_cfg.sgd.warmup_epochs == 3);
  CHECK(explicit_cfg.sgd.decay_start_epoch == 12);

  auto bad = [](const std::string& key, const std::string& value) {
    RunConfig c;
    c.set(key, value);
    CHECK_THROWS_AS(c.resolve(), ConfigError);
  };
  bad("epochs", "3");
  bad("batch_size", "0");
  bad("peak_lr", "0.0001");  // below base_lr
  bad("scale_min", "1.5");
  bad("rotations", "");
  bad("knn_k", "0");
  bad("train_count", "0");
}

TEST_CASE("resolved text round-trips and the fingerprint ignores paths") {
  RunConfig a = parse_config_text("seed = 9\nenc1 = 16\nlogvar_init = -3.5\nout_dir = x\n", "a");
  a.resolve();
  RunConfig b = parse_config_text(a.to_text(), "b");
  b.resolve();
  CHECK(a.to_text() == b.to_text());
  CHECK(a.fingerprint() == b.fingerprint());

  for (const auto& k : RunConfig::keys()) CHECK(a.to_text().find(k + " = ") != std::string::npos);

  RunConfig moved = b;
  moved.out_dir = "elsewhere";
  moved.knn_k = {1};
  moved.baseline_random = true;
  CHECK(moved.fingerprint() == a.fingerprint());
  RunConfig reseeded = b;
  reseeded.seed = 10;
  CHECK(reseeded.fingerprint() != a.fingerprint());
}

TEST_CASE("plot draws one polyline per metric and covers the extrema") {
  const fs::path dir = scratch("plot");
  {
    MetricsWriter w(dir / "m.csv");
    w.write("train_nll", "-", 11.5, 1, 0);
    w.write("train_nll", "-", 9.25, 1, 1);
  }
  run_plot(dir / "m.csv", dir);
  const std::string svg = read(dir / "loss_vs_epoch.svg");
  const std::regex poly("<polyline[^>]*points=\"([^\"]*)\"");
  std::vector<std::string> lines;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it)
    lines.push_back((*it)[1]);
  REQUIRE(lines.size() == 1);
  std::istringstream pts(lines[0]);
  std::vector<std::string> points{std::istream_iterator<std::string>(pts), {}};
  CHECK(points.size() == 2);
  // Tick labels span the data range.
  CHECK(svg.find(">9.25<") != std::string::npos);
  CHECK(svg.find(">11.5<") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(read(dir / "knn_vs_k.svg").find("no data") != std::string::npos);

  std::ofstream(dir / "bad.csv") << "metric,param,value,seed,epoch\ntrain_nll,-,1,0,0\ntrain_nll,-,x,0,1\n";
  try {
    run_plot(dir / "bad.csv", dir);
    FAIL("malformed metrics accepted");
  } catch (const IngestError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("exported synthetic data reads back through the IDX loader") {
  const fs::path dir = scratch("export");
  RunConfig cfg = parse_config_text("train_count = 12\ntest_count = 5\nsynthetic_size = 16\n", "e");
  cfg.resolve();
  run_export(cfg, dir);
  const auto [train, test] = load_mnist_idx(dir);
  const auto [ref_train, ref_test] = load_datasets(cfg);
  REQUIRE(train.count == 12);
  REQUIRE(test.count == 5);
  CHECK(train.labels == ref_train.labels);
  CHECK(test.labels == ref_test.labels);
  double worst = 0;
  for (std::size_t i = 0; i < train.images.size(); ++i)
    worst = std::max(worst, std::abs(train.images[i] - ref_train.images[i]));
  CHECK(worst <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization

  RunConfig mnist = cfg;
  mnist.dataset = "mnist";
  CHECK_THROWS_AS(run_export(mnist, dir), ConfigError);
}

TEST_CASE("train writes the run directory and resume rejects a foreign config") {
  const fs::path dir = scratch("train");
  RunConfig cfg = parse_config_text(
      "train_count = 64\ntest_count = 16\nsynthetic_size = 16\nenc1 = 4\nenc2 = 4\ndec3 = 4\n"
      "dec4 = 4\nepochs = 4\nbatch_size = 32\nprobe_epochs = 4\n",
      "t");
  cfg.out_dir = dir;
  cfg.resolve();
  std::ostringstream log;
  TrainOptions opts;
  opts.stop_after = 2;
  const auto r = run_train(cfg, opts, log);
  CHECK(r.epochs_completed == 2);
  CHECK_FALSE(r.failed);
  CHECK(fs::exists(dir / kResolvedConfigFile));
  CHECK(fs::exists(dir / kCheckpointFile));
  CHECK(read(dir / kResolvedConfigFile) == cfg.to_text());
  const auto rows = read_metrics(dir / kMetricsFile);
  std::size_t train_rows = 0;
  for (const auto& row : rows) train_rows += row.metric == "train_nll";
  CHECK(train_rows == 2);

  RunConfig other = cfg;
  other.seed = 99;
  TrainOptions resume;
  resume.resume = dir / kCheckpointFile;
  CHECK_THROWS_AS(run_train(other, resume, log), ConfigError);

  run_eval(cfg, dir / kCheckpointFile, log);
  std::size_t knn_rows = 0;
  for (const auto& row : read_metrics(dir / kMetricsFile)) knn_rows += row.metric == "knn_error_s5";
  CHECK(knn_rows == cfg.knn_k.size());
}
