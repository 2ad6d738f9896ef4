#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <fstream>
#include <random>

#include <unistd.h>

#include "avt/autodiff/grad_check.hpp"
#include "avt/checkpoint.hpp"
#include "avt/commands.hpp"
#include "avt/error.hpp"
#include "avt/eval.hpp"
#include "avt/simd/kernels.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

using TD = ad::Tensor<double>;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

TD leaf(ad::Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng = derive_rng(seed, {0xC4EC});
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return TD::from(std::move(shape), std::move(v), true);
}

VerifyCheck grad_case(const std::string& name,
                      const std::function<TD(const std::vector<TD>&)>& fn, std::vector<TD> inputs,
                      double step = 1e-5) {
  ad::GradCheckOptions o;
  o.step = step;
  const auto r = ad::grad_check(fn, std::move(inputs), o);
  return {name, r.passed(1e-4), "worst rel err " + sci(r.worst()) + " (tol 1e-4)"};
}

Model<double> tiny_model(std::uint64_t seed) {
  ModelConfig c;
  c.in_channels = 1;
  c.enc1 = 4;
  c.enc2 = 6;
  c.dec3 = 6;
  c.dec4 = 5;
  return Model<double>(c, seed);
}

TransformBatch tiny_batch() {
  const Dataset raw = gen_synthetic_shapes(31, 2, 16);
  const std::vector<std::size_t> idx{0, 1};
  Rng rng = derive_rng(31, {1});
  return make_transform_batch(raw, idx, compute_norm_stats(raw), TransformPrior{},
                              TargetStandardizer::default_projective(), rng);
}

std::vector<VerifyCheck> gradient_checks() {
  std::vector<VerifyCheck> out;
  out.push_back(grad_case(
      "grad: elementwise chain",
      [](const std::vector<TD>& in) {
        const TD a = ad::mul(in[0], in[1]);
        const TD b = ad::add(ad::exp(a), ad::log(ad::add_scalar(ad::mul(in[1], in[1]), 0.5)));
        return ad::sum(ad::relu(ad::sub(b, ad::mul_scalar(in[0], 0.3))));
      },
      {leaf({3, 4}, 1), leaf({3, 4}, 2)}));
  out.push_back(grad_case(
      "grad: conv2d stride 2 pad 1",
      [](const std::vector<TD>& in) {
        const TD y = ad::conv2d(in[0], in[1], in[2], 2, 1);
        return ad::sum(ad::mul(y, y));
      },
      {leaf({2, 2, 5, 5}, 3), leaf({3, 2, 3, 3}, 4), leaf({3}, 5)}));
  out.push_back(grad_case(
      "grad: batch norm (train)",
      [](const std::vector<TD>& in) {
        ad::BatchNormStats<double> stats(3);
        const TD y = ad::batch_norm2d(in[0], in[1], in[2], ad::Mode::kTrain, stats);
        return ad::sum(ad::mul(y, ad::exp(ad::mul_scalar(y, 0.1))));
      },
      {leaf({4, 3, 2, 2}, 6), leaf({3}, 7, 0.5, 1.5), leaf({3}, 8)}));
  out.push_back(grad_case(
      "grad: batch norm (eval), pooling, clamp, mean",
      [](const std::vector<TD>& in) {
        ad::BatchNormStats<double> stats(2);
        stats.running_mean = {0.1, -0.2};
        stats.running_var = {0.5, 2.0};
        const TD y = ad::batch_norm2d(in[0], in[1], in[2], ad::Mode::kEval, stats);
        const TD p = ad::global_avg_pool(ad::clamp(y, -0.6, 0.6));
        return ad::mean(ad::mul(p, p));
      },
      {leaf({3, 2, 3, 3}, 12), leaf({2}, 13, 0.5, 1.5), leaf({2}, 14)}));
  out.push_back(grad_case(
      "grad: reshape, concat and slice",
      [](const std::vector<TD>& in) {
        const TD c = ad::concat_cols(in[0], ad::reshape(in[1], {3, 2}));
        const TD r = ad::concat_rows(ad::slice_cols(ad::slice_rows(c, 1, 3), 0, 4), ad::slice_cols(c, 2, 6));
        return ad::sum(ad::mul(r, ad::exp(r)));
      },
      {leaf({3, 4}, 15), leaf({6}, 16)}));
  out.push_back(grad_case(
      "grad: dense + cross entropy",
      [](const std::vector<TD>& in) {
        static const std::vector<std::int32_t> labels{0, 2, 1, 2};
        return ad::cross_entropy(ad::dense(in[0], in[1], in[2]), labels);
      },
      {leaf({4, 5}, 9), leaf({5, 3}, 10), leaf({3}, 11)}));

  const TransformBatch batch = tiny_batch();
  for (auto objective : {Objective::kAvt, Objective::kAet}) {
    auto model = std::make_shared<Model<double>>(tiny_model(9));
    std::vector<TD> inputs;
    for (auto& p : model->parameters()) inputs.push_back(p.value);
    out.push_back(grad_case(
        "grad: full " + to_string(objective) + " loss",
        [model, &batch, objective](const std::vector<TD>&) {
          Rng rng = derive_rng(77, {});
          return avt_loss(*model, batch, objective, ad::Mode::kTrain, rng).loss;
        },
        inputs));
  }
  return out;
}

VerifyCheck simd_check() {
  const auto& ref = simd::scalar::table<double>();
  const auto& act = simd::active<double>();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t m = 13, n = 17, k = 19;
  std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
  for (auto& x : a) x = u(gen);
  for (auto& x : b) x = u(gen);
  ref.gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
  act.gemm_nn(m, n, k, a.data(), b.data(), c2.data(), false);
  double worst = 0;
  for (std::size_t i = 0; i < c1.size(); ++i) worst = std::max(worst, std::abs(c1[i] - c2[i]));
  worst = std::max(worst, std::abs(ref.dot(a.size(), a.data(), a.data()) -
                                   act.dot(a.size(), a.data(), a.data())));
  return {std::string("simd: ") + std::string(simd::isa_name(simd::active_isa())) +
              " matches scalar reference",
          worst < 1e-12, "max abs diff " + sci(worst) + " (tol 1e-12)"};
}

std::vector<VerifyCheck> geometry_checks() {
  std::vector<VerifyCheck> out;
  Rng rng = derive_rng(4, {});
  double worst = 0;
  int solved = 0;
  while (solved < 1000) {
    std::array<Point, 4> src, dst;
    for (int c = 0; c < 4; ++c) {
      src[c] = {kCanonicalCorners[c].x + uniform(rng, -0.4, 0.4),
                kCanonicalCorners[c].y + uniform(rng, -0.4, 0.4)};
      dst[c] = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
    }
    try {
      const auto h = dlt_solve(src, dst);
      for (int c = 0; c < 4; ++c) {
        const auto p = apply_homography_point(h, src[c]);
        worst = std::max({worst, std::abs(p.x - dst[c].x), std::abs(p.y - dst[c].y)});
      }
      ++solved;
    } catch (const DegeneracyError&) {
    }
  }
  out.push_back({"geometry: DLT recovers 1000 random corner maps", worst < 1e-9,
                 "max corner err " + sci(worst) + " (tol 1e-9)"});

  double assoc = 0;
  const TransformPrior prior;
  for (int t = 0; t < 1000; ++t) {
    const auto h1 = sample_homography(rng, prior);
    const auto h2 = sample_homography(rng, prior);
    const Point q{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto a = apply_homography_point(compose(h2, h1), q);
    const auto b = apply_homography_point(h2, apply_homography_point(h1, q));
    assoc = std::max({assoc, std::abs(a.x - b.x), std::abs(a.y - b.y)});
  }
  out.push_back({"geometry: composition equals staged mapping", assoc < 1e-12,
                 "max err " + sci(assoc) + " (tol 1e-12)"});

  std::vector<double> img(2 * 5 * 5);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(1.0 + 3.0 * static_cast<double>(i));
  bool exact = warp_image(img, 2, 5, 5, Homography()) == img;
  TransformParams half;
  half.rotation_deg = 180;
  const auto rot = warp_image(img, 2, 5, 5, params_to_homography(half));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        exact = exact && rot[c * 25 + i * 5 + j] == img[c * 25 + (4 - i) * 5 + (4 - j)];
  out.push_back({"warp: identity and half turn are exact", exact, "bitwise"});

  bool in_range = true;
  for (int t = 0; t < 100000; ++t) {
    const auto p = sample_transform(rng, prior);
    in_range = in_range && p.scale >= prior.scale_min && p.scale <= prior.scale_max &&
               std::find(prior.rotations_deg.begin(), prior.rotations_deg.end(), p.rotation_deg) !=
                   prior.rotations_deg.end();
    for (double j : p.corner_jitter) in_range = in_range && std::abs(j) <= prior.jitter_max;
  }
  out.push_back({"sampler: 1e5 draws inside the prior support", in_range, "exact bounds"});
  return out;
}

std::vector<VerifyCheck> likelihood_checks() {
  std::vector<VerifyCheck> out;
  const double ln2pi = std::log(2 * std::numbers::pi);
  const TD t = leaf({3, 8}, 20), d = leaf({3, 8}, 21);
  double sq = 0;
  for (std::size_t i = 0; i < 24; ++i) sq += std::pow(t.data()[i] - d.data()[i], 2);
  const double unit = gaussian_nll(t, d, TD::zeros({3, 8})).item();
  const double err_unit = std::abs(unit - (4 * ln2pi + 0.5 * sq / 3));
  out.push_back({"nll: unit variance reduces to squared error", err_unit < 1e-12,
                 "abs err " + sci(err_unit) + " (tol 1e-12)"});
  const double zero = gaussian_nll(t, t, TD::zeros({3, 8})).item();
  const double err_zero = std::abs(zero - 4 * ln2pi);
  out.push_back({"nll: zero residual, unit variance is 4 ln 2pi", err_zero < 1e-12,
                 "abs err " + sci(err_zero) + " (tol 1e-12)"});
  const double exact = gaussian_nll(t, t, TD::full({3, 8}, -2.0)).item();
  const double err_exact = std::abs(exact - 0.5 * 8 * (-2 + ln2pi));
  out.push_back({"nll: zero residual closed form at logvar -2", err_exact < 1e-12,
                 "abs err " + sci(err_exact) + " (tol 1e-12)"});

  // Deterministic mode: the loss is 4 ln 2pi plus half the per-row squared
  // error of the decoder mean, computed here directly from the model.
  const TransformBatch batch = tiny_batch();
  Model<double> model = tiny_model(3);
  Rng rng = derive_rng(1, {});
  const double loss = avt_loss(model, batch, Objective::kAet, ad::Mode::kEval, rng).loss.item();
  std::vector<double> stacked(batch.transformed);
  stacked.insert(stacked.end(), batch.original.begin(), batch.original.end());
  const std::size_t n = batch.n;
  const auto mean =
      model.encode(TD::from({2 * n, batch.channels, batch.height, batch.width}, std::move(stacked)),
                   ad::Mode::kEval)
          .mean;
  const auto dec =
      model.decode(ad::slice_rows(mean, 0, n), ad::slice_rows(mean, n, 2 * n), ad::Mode::kEval).d;
  double sq_aet = 0;
  for (std::size_t i = 0; i < 8 * n; ++i) sq_aet += std::pow(batch.targets[i] - dec.data()[i], 2);
  const double err_aet = std::abs(loss - (4 * ln2pi + 0.5 * sq_aet / static_cast<double>(n)));
  out.push_back({"nll: deterministic mode is half MSE + 4 ln 2pi", err_aet < 1e-10,
                 "abs err " + sci(err_aet) + " (tol 1e-10)"});
  return out;
}

VerifyCheck checkpoint_check() {
  const fs::path dir = fs::temp_directory_path() / ("avt_verify_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path path = dir / "model.ckpt";
  std::string detail;
  bool ok = true;
  try {
    Model<double> a = tiny_model(5);
    Sgd<double> opt(SgdConfig::scaled_to(10));
    save_checkpoint(path, a, opt, RunMeta{3, 11, 0xABCDEF0123456789ull});
    Model<double> b = tiny_model(6);
    Sgd<double> opt_b(SgdConfig::scaled_to(10));
    const RunMeta meta = load_checkpoint(path, b, opt_b);
    ok = meta.epoch == 3 && meta.seed == 11 && meta.fingerprint == 0xABCDEF0123456789ull;
    for (std::size_t i = 0; i < a.parameters().size(); ++i)
      ok = ok && std::ranges::equal(a.parameters()[i].value.data(), b.parameters()[i].value.data());
    // A flipped byte in the payload must be rejected.
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekg(64);
      char c = 0;
      f.read(&c, 1);
      f.seekp(64);
      c = static_cast<char>(c ^ 0x10);
      f.write(&c, 1);
    }
    bool rejected = false;
    try {
      load_checkpoint(path, b, opt_b);
    } catch (const CheckpointError&) {
      rejected = true;
    }
    if (!rejected) detail = "corrupted file was accepted";
    ok = ok && rejected;
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  fs::remove_all(dir);
  return {"checkpoint: round trip and corruption rejection", ok, detail.empty() ? "exact" : detail};
}

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xFF));
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

VerifyCheck fixture_check() {
  const fs::path dir = fs::temp_directory_path() / ("avt_fixture_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  bool ok = true;
  std::string detail;
  try {
    // Two CIFAR records with every byte value represented.
    std::string cifar;
    for (int r = 0; r < 2; ++r) {
      cifar.push_back(static_cast<char>(r == 0 ? 3 : 9));
      for (int i = 0; i < 3072; ++i) cifar.push_back(static_cast<char>((i * 7 + r) & 0xFF));
    }
    write_bytes(dir / "batch.bin", cifar);
    const Dataset c = parse_cifar10_file(dir / "batch.bin", "fixture");
    ok = c.count == 2 && c.labels == std::vector<std::int32_t>{3, 9};
    for (int r = 0; r < 2 && ok; ++r)
      for (int i = 0; i < 3072; ++i)
        ok = ok && c.images[r * 3072 + i] == static_cast<double>((i * 7 + r) & 0xFF) / 255.0;

    std::string images, labels;
    put_be32(images, 0x803);
    put_be32(images, 3);
    put_be32(images, 2);
    put_be32(images, 2);
    for (int i = 0; i < 12; ++i) images.push_back(static_cast<char>(i * 21));
    put_be32(labels, 0x801);
    put_be32(labels, 3);
    for (int l : {7, 0, 4}) labels.push_back(static_cast<char>(l));
    write_bytes(dir / "img", images);
    write_bytes(dir / "lbl", labels);
    const Dataset m = parse_mnist_idx(dir / "img", dir / "lbl", "fixture");
    ok = ok && m.count == 3 && m.labels == std::vector<std::int32_t>{7, 0, 4};
    for (int i = 0; i < 12 && ok; ++i) ok = m.images[i] == static_cast<double>(i * 21) / 255.0;
    if (!ok) detail = "decoded values differ from the fixture bytes";
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  fs::remove_all(dir);
  return {"ingest: CIFAR-10 and IDX fixtures are byte-exact", ok, detail.empty() ? "exact" : detail};
}

VerifyCheck knn_check() {
  FeatureMatrix train, test;
  train.rows = 3;
  train.dims = 2;
  train.values = {0, 0, 1, 1, 1, 2};
  train.labels = {0, 1, 1};
  test.rows = 1;
  test.dims = 2;
  test.values = {0.9, 1.1};
  test.labels = {1};
  const auto r = knn_classify(train, test, 3);
  return {"knn: worked example", r.predictions[0] == 1 && r.error_rate == 0.0, "exact"};
}

}  // namespace

std::vector<VerifyCheck> run_verify(bool inject_adjoint_fault, std::ostream& log) {
  struct FaultScope {
    explicit FaultScope(bool on) { ad::debug::set_adjoint_fault(on); }
    ~FaultScope() { ad::debug::set_adjoint_fault(false); }
  } fault(inject_adjoint_fault);
  if (inject_adjoint_fault) log << "adjoint fault injected into mul\n";

  std::vector<VerifyCheck> checks;
  auto add = [&](std::vector<VerifyCheck> more) {
    for (auto& c : more) checks.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, auto fn) {
    try {
      add(fn());
    } catch (const std::exception& e) {
      checks.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("grad", gradient_checks);
  guarded("simd", [] { return std::vector<VerifyCheck>{simd_check()}; });
  guarded("geometry", geometry_checks);
  guarded("nll", likelihood_checks);
  guarded("checkpoint", [] { return std::vector<VerifyCheck>{checkpoint_check()}; });
  guarded("ingest", [] { return std::vector<VerifyCheck>{fixture_check()}; });
  guarded("knn", [] { return std::vector<VerifyCheck>{knn_check()}; });
  return checks;
}

}  // namespace avt
