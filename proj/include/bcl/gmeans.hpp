#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "bcl/kmeans.hpp"
#include "bcl/xmeans.hpp"

namespace bcl {

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Anderson-Darling normality test (mean and variance estimated from the
// sample). Returns the p-value of the case-3 statistic using the
// D'Agostino-Stephens approximation, which extrapolates cleanly to the
// small significances G-means runs at.
inline double anderson_darling_pvalue(std::vector<double> sample) {
  const std::size_t n = sample.size();
  if (n < 3) return 1.0;
  double mean = 0.0;
  for (double v : sample) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : sample) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  if (var <= 0.0) return 1.0;
  const double sd = std::sqrt(var);

  std::sort(sample.begin(), sample.end());
  double a2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = normal_cdf((sample[i] - mean) / sd);
    const double zr = normal_cdf((sample[n - 1 - i] - mean) / sd);
    const double lo = std::clamp(zi, 1e-300, 1.0 - 1e-16);
    const double hi = std::clamp(1.0 - zr, 1e-300, 1.0 - 1e-16);
    a2 += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log(hi));
  }
  a2 = -static_cast<double>(n) - a2 / static_cast<double>(n);
  const double nd = static_cast<double>(n);
  const double a2s = a2 * (1.0 + 0.75 / nd + 2.25 / (nd * nd));

  if (a2s >= 0.6) return std::exp(1.2937 - 5.709 * a2s + 0.0186 * a2s * a2s);
  if (a2s > 0.34) return std::exp(0.9177 - 4.279 * a2s - 1.38 * a2s * a2s);
  if (a2s > 0.2) return 1.0 - std::exp(-8.318 + 42.796 * a2s - 59.938 * a2s * a2s);
  return 1.0 - std::exp(-13.436 + 101.14 * a2s - 223.73 * a2s * a2s);
}

// G-means: recursively 2-means-split; a cluster is kept only if its members,
// projected onto the split direction, pass the Anderson-Darling normality
// test at the given significance. Never returns more than k_max clusters.
inline ClusterAssignment gmeans(const std::vector<Vec>& points, double significance, int k_max,
                                std::mt19937_64& rng) {
  if (points.empty()) throw std::invalid_argument("gmeans: empty point set");
  if (!(significance > 0.0 && significance < 0.5))
    throw std::invalid_argument("gmeans: significance must be in (0, 0.5)");
  if (k_max < 1) throw std::invalid_argument("gmeans: k_max must be >= 1");
  const std::size_t n = points.size();
  const int dim = static_cast<int>(points[0].size());

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  std::deque<std::vector<std::size_t>> open;
  open.push_back(std::move(all));
  std::vector<std::vector<std::size_t>> closed;
  int cluster_count = 1;

  // Too-small clusters cannot reject normality meaningfully; keep them.
  constexpr std::size_t kMinSplit = 8;

  while (!open.empty()) {
    std::vector<std::size_t> members = std::move(open.front());
    open.pop_front();

    if (cluster_count >= k_max || members.size() < kMinSplit) {
      closed.push_back(std::move(members));
      continue;
    }

    detail::SplitAttempt split = detail::try_2means(points, members, rng);
    bool accept = false;
    if (split.ok) {
      Vec v(dim, 0.0);
      for (int c = 0; c < dim; ++c) v[c] = split.center_left[c] - split.center_right[c];
      const double vnorm = norm2(v);
      if (vnorm > 0.0) {
        std::vector<double> proj;
        proj.reserve(members.size());
        for (std::size_t i : members) proj.push_back(dot(points[i], v) / vnorm);
        accept = anderson_darling_pvalue(std::move(proj)) < significance;
      }
    }

    if (accept) {
      ++cluster_count;
      open.push_back(std::move(split.left));
      open.push_back(std::move(split.right));
    } else {
      closed.push_back(std::move(members));
    }
  }

  return detail::densify_groups(n, closed);
}

}  // namespace bcl
