#include <charconv>
#include <cmath>
#include <sstream>

#include "avt/error.hpp"
#include "avt/eval.hpp"

namespace avt {
namespace fs = std::filesystem;

namespace {
constexpr const char* kHeader = "metric,param,value,seed,epoch";
}

MetricsWriter::MetricsWriter(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open metrics file " + path.string());
  if (fresh) out_ << kHeader << '\n' << std::flush;
}

void MetricsWriter::write(const std::string& metric, const std::string& param, double value,
                          std::uint64_t seed, std::uint64_t epoch) {
  if (metric.find_first_of(",\n") != std::string::npos ||
      param.find_first_of(",\n") != std::string::npos)
    throw Error("metric names and parameters may not contain commas or newlines");
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, value);
  out_ << metric << ',' << param << ',' << std::string(buf, r.ptr) << ',' << seed << ',' << epoch
       << '\n'
       << std::flush;
}

std::vector<MetricRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw IngestError(path.string() + ":1: expected header '" + kHeader + "'");
  std::vector<MetricRow> rows;
  for (std::size_t no = 2; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    auto fail = [&](const std::string& why) {
      return IngestError(path.string() + ":" + std::to_string(no) + ": " + why);
    };
    if (f.size() != 5) throw fail("expected 5 fields, found " + std::to_string(f.size()));
    MetricRow r{f[0], f[1], 0, 0, 0};
    auto parse_u = [&](const std::string& s, std::uint64_t& out) {
      const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw fail("bad integer '" + s + "'");
    };
    const auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), r.value);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size())
      throw fail("bad value '" + f[2] + "'");
    parse_u(f[3], r.seed);
    parse_u(f[4], r.epoch);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace avt
