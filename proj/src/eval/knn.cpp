#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "avt/error.hpp"
#include "avt/eval.hpp"

namespace avt {

KnnResult knn_classify(const FeatureMatrix& train, const FeatureMatrix& test, std::size_t k) {
  if (train.rows == 0) throw ConfigError("knn_classify: empty training set");
  if (train.labels.size() != train.rows) throw ConfigError("knn_classify: training rows unlabeled");
  if (k == 0 || k > train.rows)
    throw ConfigError("knn_classify: K = " + std::to_string(k) + " outside [1, " +
                      std::to_string(train.rows) + "]");
  if (train.dims != test.dims)
    throw ShapeError("knn_classify: feature widths differ (" + std::to_string(train.dims) +
                     " vs " + std::to_string(test.dims) + ")");

  KnnResult res;
  res.predictions.resize(test.rows);
  std::vector<std::pair<double, std::size_t>> dist(train.rows);
  for (std::size_t t = 0; t < test.rows; ++t) {
    const auto q = test.row(t);
    for (std::size_t r = 0; r < train.rows; ++r) {
      const auto p = train.row(r);
      double s = 0;
      for (std::size_t d = 0; d < train.dims; ++d) s += (p[d] - q[d]) * (p[d] - q[d]);
      dist[r] = {s, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::map<std::int32_t, std::pair<std::size_t, double>> votes;  // count, summed distance
    for (std::size_t j = 0; j < k; ++j) {
      auto& v = votes[train.labels[dist[j].second]];
      ++v.first;
      v.second += std::sqrt(dist[j].first);
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
      if (it->second.first > best->second.first ||
          (it->second.first == best->second.first && it->second.second < best->second.second))
        best = it;
    res.predictions[t] = best->first;
  }
  if (test.labels.size() == test.rows && test.rows > 0) {
    std::size_t wrong = 0;
    for (std::size_t t = 0; t < test.rows; ++t) wrong += res.predictions[t] != test.labels[t];
    res.error_rate = static_cast<double>(wrong) / static_cast<double>(test.rows);
  } else {
    res.error_rate = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

}  // namespace avt
