#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "anchorface/error.hpp"
#include "anchorface/random.hpp"

namespace anchorface {

struct KMeansOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;  // on the largest squared centroid shift
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  int iterations = 0;
  double inertia = 0.0;
};

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::size_t nearest(const std::vector<std::vector<double>>& centroids,
                           const std::vector<double>& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. On return every point is
/// assigned to its nearest centroid and every centroid is the mean of its
/// members.
inline KMeansResult lloyd_kmeans(const std::vector<std::vector<double>>& data, std::size_t k,
                                 std::uint64_t seed, KMeansOptions opts = {}) {
  if (k == 0) detail::fail(ErrorKind::InvalidInput, "kmeans: k must be positive");
  if (data.size() < k) {
    detail::fail(ErrorKind::InvalidInput, "kmeans: " + std::to_string(data.size()) +
                                              " points for " + std::to_string(k) + " clusters");
  }
  const std::size_t dim = data.front().size();
  for (const auto& x : data) {
    if (x.size() != dim) detail::fail(ErrorKind::ShapeMismatch, "kmeans: ragged input");
  }

  Rng rng(seed);
  KMeansResult res;
  res.centroids.push_back(data[rng.below(data.size())]);
  std::vector<double> d2(data.size());
  while (res.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) best = std::min(best, detail::squared_distance(c, data[i]));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < data.size(); ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    } else {
      pick = rng.below(data.size());
    }
    res.centroids.push_back(data[pick]);
  }

  res.assignment.assign(data.size(), 0);
  std::vector<std::size_t> previous;
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    for (std::size_t i = 0; i < data.size(); ++i) res.assignment[i] = detail::nearest(res.centroids, data[i]);
    if (it > 0 && res.assignment == previous) break;
    previous = res.assignment;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += data[i][d];
      ++counts[res.assignment[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double d = detail::squared_distance(res.centroids[res.assignment[i]], data[i]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        max_shift = std::max(max_shift, detail::squared_distance(res.centroids[c], data[far]));
        res.centroids[c] = data[far];
        previous.clear();
        continue;
      }
      for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
      max_shift = std::max(max_shift, detail::squared_distance(res.centroids[c], sums[c]));
      res.centroids[c] = std::move(sums[c]);
    }
    if (max_shift < opts.tolerance && !previous.empty()) break;
  }

  res.inertia = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    res.inertia += detail::squared_distance(res.centroids[res.assignment[i]], data[i]);
  }
  return res;
}

}  // namespace anchorface
