#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "avt/commands.hpp"
#include "avt/error.hpp"
#include "avt/eval.hpp"

namespace avt {
namespace fs = std::filesystem;
namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void write_svg(const fs::path& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 170, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  const bool empty = !(x0 <= x1);
  if (empty) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title)
      << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << num(xv) << "</text>\n"
        << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
      << esc(xlabel) << "</text>\n"
      << "<text transform=\"translate(16," << (T + H - B) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << esc(ylabel) << "</text>\n";
  if (empty)
    out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << (T + H - B) / 2
        << "\" text-anchor=\"middle\">no data</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % std::size(colors)];
    out << "<polyline class=\"series\" data-name=\"" << esc(series[i].name)
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (auto [x, y] : series[i].points) {
      if (!std::isfinite(y)) continue;
      out << (first ? "" : " ") << px(x) << ',' << py(y);
      first = false;
    }
    out << "\"/>\n";
    const double ly = T + 16 * static_cast<double>(i);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << esc(series[i].name)
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw Error("cannot write " + path.string());
}

// Later rows replace earlier ones at the same x, so a resumed run that
// repeats an epoch plots once.
std::vector<Series> collect(const std::vector<MetricRow>& rows,
                            const std::function<bool(const MetricRow&, double&)>& x_of) {
  std::map<std::string, std::map<double, double>> by_name;
  for (const auto& r : rows) {
    double x = 0;
    if (x_of(r, x)) by_name[r.metric][x] = r.value;
  }
  std::vector<Series> out;
  for (auto& [name, pts] : by_name) out.push_back({name, {pts.begin(), pts.end()}});
  return out;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx(const Dataset& ds, const fs::path& images, const fs::path& labels) {
  std::ofstream im(images, std::ios::binary), lb(labels, std::ios::binary);
  write_be32(im, 0x00000803);
  write_be32(im, static_cast<std::uint32_t>(ds.count));
  write_be32(im, static_cast<std::uint32_t>(ds.height));
  write_be32(im, static_cast<std::uint32_t>(ds.width));
  std::string bytes(ds.images.size(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<char>(std::lround(std::clamp(ds.images[i], 0.0, 1.0) * 255.0));
  im.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  write_be32(lb, 0x00000801);
  write_be32(lb, static_cast<std::uint32_t>(ds.count));
  for (auto l : ds.labels) lb.put(static_cast<char>(l));
  if (!im || !lb) throw Error("cannot write " + images.string());
}

}  // namespace

void run_plot(const fs::path& metrics, const fs::path& out_dir) {
  const auto rows = read_metrics(metrics);
  fs::create_directories(out_dir);
  write_svg(out_dir / "loss_vs_epoch.svg", "Loss per epoch", "epoch", "NLL (nats)",
            collect(rows, [](const MetricRow& r, double& x) {
              if (r.metric != "train_nll" && r.metric != "heldout_nll") return false;
              x = static_cast<double>(r.epoch);
              return true;
            }));
  write_svg(out_dir / "knn_vs_k.svg", "KNN error by neighbourhood size", "K", "error rate",
            collect(rows, [](const MetricRow& r, double& x) {
              if (!r.metric.starts_with("knn_error") || !r.param.starts_with("K=")) return false;
              x = std::stod(r.param.substr(2));
              return true;
            }));
}

void run_export(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.dataset != "synthetic") throw ConfigError("export supports dataset = synthetic only");
  const auto [train, test] = load_datasets(cfg);
  fs::create_directories(out_dir);
  write_idx(train, out_dir / "train-images-idx3-ubyte", out_dir / "train-labels-idx1-ubyte");
  write_idx(test, out_dir / "t10k-images-idx3-ubyte", out_dir / "t10k-labels-idx1-ubyte");
}

}  // namespace avt
