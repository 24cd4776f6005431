#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "bcl/geometry.hpp"
#include "bcl/hac.hpp"
#include "bcl/numeric.hpp"

namespace bcl {

struct KmeansResult {
  ClusterAssignment assignment;
  std::vector<Vec> centers;
  std::vector<double> inertia_history;  // after each Lloyd iteration
};

namespace detail {

// k-means++: next center drawn with probability proportional to the squared
// distance to the nearest chosen center.
inline std::vector<Vec> kmeanspp_seed(const std::vector<Vec>& points, int k,
                                      std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<Vec> centers;
  centers.reserve(k);
  std::vector<bool> chosen(n, false);

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t idx = first(rng);
  centers.push_back(points[idx]);
  chosen[idx] = true;

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], sq_dist(points[i], centers.back()));
      if (!chosen[i]) total += min_d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        acc += min_d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    if (pick == n) {  // all remaining mass zero: duplicates of chosen points
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    centers.push_back(points[pick]);
    chosen[pick] = true;
  }
  return centers;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Runs to an assignment fixpoint
// or 300 iterations; an emptied cluster steals the point farthest from its
// current center. Deterministic given the rng state.
inline KmeansResult kmeans_run(const std::vector<Vec>& points, int k, std::mt19937_64& rng,
                               int max_iters = 300) {
  const std::size_t n = points.size();
  if (k < 1 || k > static_cast<int>(n)) throw std::invalid_argument("kmeans: k out of range");
  const int dim = static_cast<int>(points[0].size());

  KmeansResult res;
  res.centers = detail::kmeanspp_seed(points, k, rng);
  std::vector<int> labels(n, -1);

  auto assign = [&](std::vector<int>& out) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points[i], res.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], res.centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (out[i] != best) changed = true;
      out[i] = best;
    }
    return changed;
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    const bool changed = assign(labels);

    std::vector<Vec> sums(k, Vec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(1.0, points[i], sums[labels[i]]);
      ++counts[labels[i]];
    }
    // Repair empty clusters before the center update: each steals the
    // worst-fit point (ties to the lowest index), never draining a
    // singleton cluster.
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t worst = n;
      double worst_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double d = sq_dist(points[i], res.centers[labels[i]]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      if (worst == n) continue;
      axpy(-1.0, points[worst], sums[labels[worst]]);
      --counts[labels[worst]];
      labels[worst] = c;
      sums[c] = points[worst];
      counts[c] = 1;
    }
    for (int c = 0; c < k; ++c) {
      res.centers[c] = sums[c];
      for (double& v : res.centers[c]) v /= static_cast<double>(counts[c]);
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(points[i], res.centers[labels[i]]);
    res.inertia_history.push_back(inertia);

    if (!changed && iter > 0) break;
  }

  res.assignment.labels = std::move(labels);
  res.assignment.num_clusters = k;
  return res;
}

inline ClusterAssignment kmeans(const std::vector<Vec>& points, int k, std::mt19937_64& rng) {
  return kmeans_run(points, k, rng).assignment;
}

}  // namespace bcl
