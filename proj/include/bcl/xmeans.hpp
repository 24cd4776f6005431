#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "bcl/kmeans.hpp"

namespace bcl {

// BIC of a K-center model on a point subset, identical-spherical-variance
// formulation (Pelleg-Moore): free parameter count p = K*(D+1), pooled
// per-coordinate variance with K means subtracted.
inline double spherical_bic(const std::vector<Vec>& points,
                            const std::vector<std::size_t>& members,
                            const std::vector<Vec>& centers,
                            const std::vector<int>& center_of_member) {
  const double r = static_cast<double>(members.size());
  const int k = static_cast<int>(centers.size());
  const double d = static_cast<double>(points[members[0]].size());

  double sq_sum = 0.0;
  std::vector<double> r_k(k, 0.0);
  for (std::size_t m = 0; m < members.size(); ++m) {
    sq_sum += sq_dist(points[members[m]], centers[center_of_member[m]]);
    r_k[center_of_member[m]] += 1.0;
  }
  if (r <= static_cast<double>(k)) return -std::numeric_limits<double>::infinity();
  double variance = sq_sum / (d * (r - static_cast<double>(k)));
  variance = std::max(variance, 1e-30);  // identical points

  double ll = 0.0;
  for (int c = 0; c < k; ++c)
    if (r_k[c] > 0.0) ll += r_k[c] * std::log(r_k[c]);
  ll -= r * std::log(r);
  ll -= 0.5 * r * d * std::log(2.0 * M_PI * variance);
  ll -= 0.5 * d * (r - static_cast<double>(k));

  const double p = static_cast<double>(k) * (d + 1.0);
  return ll - 0.5 * p * std::log(r);
}

namespace detail {

struct SplitAttempt {
  bool ok{false};
  std::vector<std::size_t> left, right;
  Vec center_left, center_right;
};

inline SplitAttempt try_2means(const std::vector<Vec>& points,
                               const std::vector<std::size_t>& members,
                               std::mt19937_64& rng) {
  SplitAttempt s;
  if (members.size() < 2) return s;
  std::vector<Vec> sub;
  sub.reserve(members.size());
  for (std::size_t i : members) sub.push_back(points[i]);
  const KmeansResult km = kmeans_run(sub, 2, rng);
  for (std::size_t m = 0; m < members.size(); ++m)
    (km.assignment.labels[m] == 0 ? s.left : s.right).push_back(members[m]);
  if (s.left.empty() || s.right.empty()) return s;
  s.center_left = km.centers[0];
  s.center_right = km.centers[1];
  s.ok = true;
  return s;
}

inline ClusterAssignment densify_groups(std::size_t n,
                                        const std::vector<std::vector<std::size_t>>& groups) {
  ClusterAssignment out;
  out.labels.assign(n, -1);
  // Canonical labels by smallest member index.
  std::vector<std::size_t> order(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) order[g] = g;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return groups[a].front() < groups[b].front();
  });
  int next = 0;
  for (std::size_t g : order) {
    for (std::size_t i : groups[g]) out.labels[i] = next;
    ++next;
  }
  out.num_clusters = next;
  return out;
}

}  // namespace detail

// X-means: start from one cluster and recursively 2-means-split, keeping a
// split only when the local BIC of the two children beats the parent's.
// Never returns more than k_max clusters.
inline ClusterAssignment xmeans(const std::vector<Vec>& points, int k_max,
                                std::mt19937_64& rng) {
  if (points.empty()) throw std::invalid_argument("xmeans: empty point set");
  if (k_max < 1) throw std::invalid_argument("xmeans: k_max must be >= 1");
  const std::size_t n = points.size();
  const int dim = static_cast<int>(points[0].size());

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  std::deque<std::vector<std::size_t>> open;
  open.push_back(std::move(all));
  std::vector<std::vector<std::size_t>> closed;
  int cluster_count = 1;

  while (!open.empty()) {
    std::vector<std::size_t> members = std::move(open.front());
    open.pop_front();

    if (cluster_count >= k_max || members.size() < 2) {
      closed.push_back(std::move(members));
      continue;
    }

    Vec mean(dim, 0.0);
    for (std::size_t i : members) axpy(1.0, points[i], mean);
    for (double& v : mean) v /= static_cast<double>(members.size());
    const std::vector<int> one(members.size(), 0);
    const double bic_parent = spherical_bic(points, members, {mean}, one);

    detail::SplitAttempt split = detail::try_2means(points, members, rng);
    bool accept = false;
    if (split.ok) {
      std::vector<int> two(members.size());
      {
        std::size_t li = 0, ri = 0;
        for (std::size_t m = 0; m < members.size(); ++m) {
          if (li < split.left.size() && split.left[li] == members[m]) {
            two[m] = 0;
            ++li;
          } else {
            two[m] = 1;
            ++ri;
          }
        }
      }
      const double bic_children =
          spherical_bic(points, members, {split.center_left, split.center_right}, two);
      accept = bic_children > bic_parent;
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
