#pragma once

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bcl/geometry.hpp"
#include "bcl/numeric.hpp"

namespace bcl {

struct Merge {
  int id_a;        // smaller cluster id
  int id_b;        // larger cluster id
  double linkage;  // complete linkage at merge time, squared distance scale
  int new_id;
};

// Full merge history. Leaves are 0..N-1, internal nodes N..2N-2; complete
// linkage makes the linkage column non-decreasing.
struct Dendrogram {
  std::size_t leaf_count{0};
  std::vector<Merge> merges;
};

struct ClusterAssignment {
  std::vector<int> labels;
  int num_clusters{0};
};

namespace detail {

inline int hac_threads() {
  if (const char* env = std::getenv("BCL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Pairwise squared distances, row-parallel when BCL_THREADS > 1. Rows are
// written to disjoint memory, so the result does not depend on the thread
// count.
inline std::vector<double> distance_matrix(const std::vector<Vec>& points) {
  const std::size_t n = points.size();
  std::vector<double> d(n * n, 0.0);
  const int threads = std::min<int>(hac_threads(), static_cast<int>(n));
  auto fill_rows = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) d[i * n + j] = sq_dist(points[i], points[j]);
  };
  if (threads <= 1) {
    fill_rows(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
      if (lo < hi) pool.emplace_back(fill_rows, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return d;
}

struct PairChoice {
  double linkage = std::numeric_limits<double>::infinity();
  int id_a = -1, id_b = -1;  // cluster ids, id_a < id_b
  std::size_t slot_a = 0, slot_b = 0;

  // Ordering: smaller linkage first, ties by smallest (min id, then max id).
  bool better_than(const PairChoice& o) const {
    if (linkage != o.linkage) return linkage < o.linkage;
    if (id_a != o.id_a) return id_a < o.id_a;
    return id_b < o.id_b;
  }
};

}  // namespace detail

// Hierarchical agglomerative clustering with complete linkage, squared
// distances throughout. Deterministic: linkage ties break on the smallest
// (min cluster id, then second id) pair. Uses the Lance-Williams update
// D(U+V, W) = max(D(U,W), D(V,W)) on a full distance matrix with cached
// per-row nearest neighbors.
inline Dendrogram hac_complete(const std::vector<Vec>& points) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("hac_complete: empty point set");

  Dendrogram dg;
  dg.leaf_count = n;
  if (n == 1) return dg;

  std::vector<double> dist = detail::distance_matrix(points);
  std::vector<bool> active(n, true);
  std::vector<int> cluster_id(n);
  for (std::size_t i = 0; i < n; ++i) cluster_id[i] = static_cast<int>(i);

  auto make_pair_choice = [&](std::size_t sa, std::size_t sb) {
    detail::PairChoice p;
    p.linkage = dist[sa * n + sb];
    p.slot_a = sa;
    p.slot_b = sb;
    p.id_a = std::min(cluster_id[sa], cluster_id[sb]);
    p.id_b = std::max(cluster_id[sa], cluster_id[sb]);
    return p;
  };

  // Best partner per slot.
  std::vector<detail::PairChoice> nearest(n);
  auto rescan = [&](std::size_t s) {
    detail::PairChoice best;
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s || !active[t]) continue;
      detail::PairChoice cand = make_pair_choice(s, t);
      if (cand.better_than(best)) best = cand;
    }
    nearest[s] = best;
  };
  for (std::size_t s = 0; s < n; ++s) rescan(s);

  dg.merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    detail::PairChoice best;
    for (std::size_t s = 0; s < n; ++s)
      if (active[s] && nearest[s].id_b >= 0 && nearest[s].better_than(best)) best = nearest[s];

    const std::size_t sa = best.slot_a, sb = best.slot_b;
    const int new_id = static_cast<int>(n + step);
    dg.merges.push_back({best.id_a, best.id_b, best.linkage, new_id});

    // Merged cluster lives in slot sa.
    active[sb] = false;
    cluster_id[sa] = new_id;
    for (std::size_t w = 0; w < n; ++w) {
      if (!active[w] || w == sa) continue;
      const double m = std::max(dist[sa * n + w], dist[sb * n + w]);
      dist[sa * n + w] = dist[w * n + sa] = m;
    }

    // Rows whose cached partner involved sa or sb grew; rescan them.
    // Other cached minima stay valid: their distance to the merged cluster
    // only increased, and the new id is larger than any existing one.
    rescan(sa);
    for (std::size_t s = 0; s < n; ++s) {
      if (!active[s] || s == sa) continue;
      if (nearest[s].slot_a == sa || nearest[s].slot_b == sa || nearest[s].slot_a == sb ||
          nearest[s].slot_b == sb)
        rescan(s);
    }
  }
  return dg;
}

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

// Apply the first `count` merges and densify labels by first occurrence.
inline ClusterAssignment assignment_from_prefix(const Dendrogram& dg, std::size_t count) {
  const std::size_t n = dg.leaf_count;
  // node -> representative leaf via union-find over leaves; track each
  // internal node's component by a member leaf.
  UnionFind uf(n);
  std::vector<std::size_t> node_leaf(2 * n);  // any leaf inside node id
  for (std::size_t i = 0; i < n; ++i) node_leaf[i] = i;
  for (std::size_t s = 0; s < count; ++s) {
    const Merge& m = dg.merges[s];
    const std::size_t la = node_leaf[m.id_a], lb = node_leaf[m.id_b];
    uf.unite(la, lb);
    node_leaf[m.new_id] = la;
  }
  ClusterAssignment out;
  out.labels.assign(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    out.labels[i] = root_label[r];
  }
  out.num_clusters = next;
  return out;
}

}  // namespace detail

// Cut by threshold: apply merges with linkage <= tau. Every returned
// cluster has all pairwise squared distances <= tau (complete linkage
// guarantee).
inline ClusterAssignment cut_threshold(const Dendrogram& dg, double tau) {
  if (tau < 0.0) throw std::invalid_argument("cut_threshold: tau must be >= 0");
  std::size_t count = 0;
  while (count < dg.merges.size() && dg.merges[count].linkage <= tau) ++count;
  return detail::assignment_from_prefix(dg, count);
}

// Cut to exactly k clusters: apply the first N-k merges.
inline ClusterAssignment cut_k(const Dendrogram& dg, int k) {
  const int n = static_cast<int>(dg.leaf_count);
  if (k < 1 || k > n) throw std::invalid_argument("cut_k: k out of range");
  return detail::assignment_from_prefix(dg, static_cast<std::size_t>(n - k));
}

// The baselines' threshold strategy: pick a tau whose cut of the validation
// dendrogram yields exactly true_k clusters, at the midpoint of the
// bracketing linkage values.
inline double select_threshold_on_validation(const std::vector<Vec>& val_points, int true_k) {
  const int n = static_cast<int>(val_points.size());
  if (true_k < 1 || true_k > n)
    throw std::invalid_argument("select_threshold_on_validation: true_k out of range");
  if (n == 1) return 0.0;
  const Dendrogram dg = hac_complete(val_points);
  const auto& merges = dg.merges;
  if (true_k == n) return 0.5 * merges.front().linkage;
  if (true_k == 1) return merges.back().linkage + 1.0;
  // Applying n - true_k merges leaves true_k clusters.
  const std::size_t applied = static_cast<std::size_t>(n - true_k);
  return 0.5 * (merges[applied - 1].linkage + merges[applied].linkage);
}

// Text export, one merge per line: "idA idB linkage newId".
inline void write_dendrogram(const Dendrogram& dg, std::ostream& os) {
  os.precision(17);
  for (const Merge& m : dg.merges)
    os << m.id_a << ' ' << m.id_b << ' ' << m.linkage << ' ' << m.new_id << '\n';
}

}  // namespace bcl
