#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "bcl/hac.hpp"

namespace bcl {

// Cluster-by-class count table backing the entropy and purity metrics.
// Labels on either side may be arbitrary ints; rows/columns are densified.
struct ContingencyTable {
  std::vector<std::vector<long>> counts;  // [cluster][class]
  std::vector<long> row_sums;
  std::vector<long> col_sums;
  long total{0};

  static ContingencyTable from(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
      throw std::invalid_argument("ContingencyTable: label vectors must be equal-length, N >= 1");
    std::map<int, int> row_of, col_of;
    for (int p : pred) row_of.emplace(p, 0);
    for (int t : truth) col_of.emplace(t, 0);
    int r = 0;
    for (auto& [k, v] : row_of) v = r++;
    int c = 0;
    for (auto& [k, v] : col_of) v = c++;

    ContingencyTable tab;
    tab.counts.assign(row_of.size(), std::vector<long>(col_of.size(), 0));
    tab.row_sums.assign(row_of.size(), 0);
    tab.col_sums.assign(col_of.size(), 0);
    tab.total = static_cast<long>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int ri = row_of[pred[i]], ci = col_of[truth[i]];
      ++tab.counts[ri][ci];
      ++tab.row_sums[ri];
      ++tab.col_sums[ci];
    }
    return tab;
  }

  double row_entropy() const { return entropy(row_sums); }
  double col_entropy() const { return entropy(col_sums); }

  double mutual_information() const {
    const double n = static_cast<double>(total);
    double mi = 0.0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
      for (std::size_t c = 0; c < counts[r].size(); ++c) {
        const long v = counts[r][c];
        if (v == 0) continue;
        const double p = v / n;
        mi += p * std::log(p * n * n / (static_cast<double>(row_sums[r]) * col_sums[c]));
      }
    }
    return std::max(0.0, mi);
  }

 private:
  double entropy(const std::vector<long>& sums) const {
    const double n = static_cast<double>(total);
    double h = 0.0;
    for (long s : sums)
      if (s > 0) h -= (s / n) * std::log(s / n);
    return h;
  }
};

// Normalized mutual information 2 I(Y;C) / (H(Y) + H(C)), natural logs.
// Both partitions trivial (H(Y) = H(C) = 0) returns 1.0 by convention.
inline double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  const ContingencyTable tab = ContingencyTable::from(pred, truth);
  const double hy = tab.col_entropy(), hc = tab.row_entropy();
  if (hy + hc == 0.0) return 1.0;
  return 2.0 * tab.mutual_information() / (hy + hc);
}

// Weighted clustering purity: size-weighted dominant-class fraction,
// in [0, 1] (the CLI reports it x100).
inline double wcp(const std::vector<int>& pred, const std::vector<int>& truth) {
  const ContingencyTable tab = ContingencyTable::from(pred, truth);
  long dominant = 0;
  for (const auto& row : tab.counts) dominant += *std::max_element(row.begin(), row.end());
  return static_cast<double>(dominant) / static_cast<double>(tab.total);
}

inline double nmi(const ClusterAssignment& pred, const std::vector<int>& truth) {
  return nmi(pred.labels, truth);
}
inline double wcp(const ClusterAssignment& pred, const std::vector<int>& truth) {
  return wcp(pred.labels, truth);
}

struct SweepPoint {
  int k;
  double nmi;
  double wcp;
};

// NMI and WCP at every dendrogram cut K = 1..N (or every `stride`-th K,
// always keeping the endpoints).
inline std::vector<SweepPoint> sweep_curves(const Dendrogram& dg, const std::vector<int>& truth,
                                            int stride = 1) {
  if (truth.size() != dg.leaf_count)
    throw std::invalid_argument("sweep_curves: truth length must match dendrogram leaves");
  if (stride < 1) throw std::invalid_argument("sweep_curves: stride must be >= 1");
  const int n = static_cast<int>(dg.leaf_count);
  std::vector<SweepPoint> pts;
  for (int k = 1; k <= n; ++k) {
    if (stride > 1 && k != 1 && k != n && (k - 1) % stride != 0) continue;
    const ClusterAssignment cut = cut_k(dg, k);
    pts.push_back({k, nmi(cut.labels, truth), wcp(cut.labels, truth)});
  }
  return pts;
}

// CSV export: "k,nmi,wcp,marker" rows plus one operating-point row for the
// cut selected by tau.
inline void write_sweep_csv(const std::vector<SweepPoint>& curve, const Dendrogram& dg,
                            const std::vector<int>& truth, double tau, std::ostream& os) {
  os << "k,nmi,wcp,marker\n";
  os.precision(10);
  for (const SweepPoint& p : curve) os << p.k << ',' << p.nmi << ',' << p.wcp << ",\n";
  const ClusterAssignment op = cut_threshold(dg, tau);
  os << op.num_clusters << ',' << nmi(op.labels, truth) << ',' << wcp(op.labels, truth)
     << ",operating_point\n";
}

}  // namespace bcl
