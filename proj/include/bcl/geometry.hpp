#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bcl/numeric.hpp"

namespace bcl {

enum class SpaceKind : std::uint8_t { Euclidean = 0, Hypersphere = 1 };

// The space embeddings live in: R^D, or the unit hypersphere S^{D-1}.
// Governs how centroids are formed and whether outputs get normalized.
struct EmbeddingSpace {
  SpaceKind kind{SpaceKind::Euclidean};
  int dim{0};

  EmbeddingSpace() = default;
  EmbeddingSpace(SpaceKind k, int d) : kind(k), dim(d) {
    if (d < 1) throw std::invalid_argument("EmbeddingSpace: dim must be >= 1");
  }
};

struct Centroid {
  Vec values;
  std::size_t member_count{0};
};

// Raised when a hypersphere centroid is requested for members whose sum is
// (numerically) the zero vector. Carries the offending sum so callers can
// decide what to skip; `cluster_label` is filled in by loss code when known.
class DegenerateCentroidError : public std::runtime_error {
 public:
  explicit DegenerateCentroidError(Vec sum, int cluster_label = -1)
      : std::runtime_error("degenerate hypersphere centroid: member sum has near-zero norm"),
        sum_(std::move(sum)),
        cluster_label_(cluster_label) {}

  const Vec& sum() const { return sum_; }
  int cluster_label() const { return cluster_label_; }
  void set_cluster_label(int label) { cluster_label_ = label; }

 private:
  Vec sum_;
  int cluster_label_;
};

class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Squared Euclidean distance. All internal distance work stays on the
// squared scale; square roots appear only where a radius is reported.
inline double sq_dist(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("sq_dist: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

namespace detail {

inline Centroid centroid_from_sum(Vec sum, std::size_t count, const EmbeddingSpace& space) {
  Centroid c;
  c.member_count = count;
  if (space.kind == SpaceKind::Euclidean) {
    for (double& v : sum) v /= static_cast<double>(count);
    c.values = std::move(sum);
  } else {
    const double nu = norm2(sum);
    if (nu < 1e-8) throw DegenerateCentroidError(std::move(sum));
    for (double& v : sum) v /= nu;
    c.values = std::move(sum);
  }
  return c;
}

}  // namespace detail

// Centroid per the squared-distance minimizer: arithmetic mean in R^D,
// sum renormalized onto the sphere for S^{D-1}.
inline Centroid centroid(const std::vector<Vec>& members, const EmbeddingSpace& space) {
  if (members.empty()) throw std::invalid_argument("centroid: empty member list");
  Vec sum(space.dim, 0.0);
  for (const Vec& m : members) {
    if (static_cast<int>(m.size()) != space.dim)
      throw std::invalid_argument("centroid: member dim mismatch");
    axpy(1.0, m, sum);
  }
  return detail::centroid_from_sum(std::move(sum), members.size(), space);
}

// Same, over an index subset of a point set.
inline Centroid centroid_of(const std::vector<Vec>& points,
                            const std::vector<std::size_t>& members,
                            const EmbeddingSpace& space) {
  if (members.empty()) throw std::invalid_argument("centroid_of: empty member list");
  Vec sum(space.dim, 0.0);
  for (std::size_t i : members) {
    if (static_cast<int>(points[i].size()) != space.dim)
      throw std::invalid_argument("centroid_of: member dim mismatch");
    axpy(1.0, points[i], sum);
  }
  return detail::centroid_from_sum(std::move(sum), members.size(), space);
}

// Map a raw vector into the space: identity for R^D, l2 normalization for
// the hypersphere.
inline Vec project(Vec raw, const EmbeddingSpace& space) {
  if (static_cast<int>(raw.size()) != space.dim)
    throw std::invalid_argument("project: dimension mismatch");
  if (space.kind == SpaceKind::Euclidean) return raw;
  const double n = norm2(raw);
  if (n <= 1e-12)
    throw DegenerateInputError("project: near-zero norm under hypersphere");
  for (double& v : raw) v /= n;
  return raw;
}

}  // namespace bcl
