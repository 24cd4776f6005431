#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bcl/geometry.hpp"
#include "bcl/numeric.hpp"

namespace bcl {

// Trainable ball parameters. The squared radius b is kept positive through
// softplus of the raw parameter; gamma = 9b + epsilon is the squared
// sample-to-foreign-centroid separation.
struct BallParams {
  double raw_radius{0.0};
  double epsilon_margin{0.01};
  double alpha{4.0};

  double radius_sq() const { return softplus(raw_radius); }  // b
  double gamma() const { return 9.0 * radius_sq() + epsilon_margin; }

  static BallParams with_radius_sq(double b, double eps = 0.01, double alpha = 4.0) {
    BallParams p;
    p.raw_radius = softplus_inverse(b);
    p.epsilon_margin = eps;
    p.alpha = alpha;
    return p;
  }
};

// A mini-batch of embeddings with dense labels in [0, K).
struct LabeledBatch {
  std::vector<Vec> embeddings;
  std::vector<int> labels;
  int num_labels{0};                                    // K
  std::vector<std::vector<std::size_t>> cluster_index;  // members per label

  std::size_t size() const { return embeddings.size(); }

  static LabeledBatch from(std::vector<Vec> embeddings, std::vector<int> labels) {
    if (embeddings.empty() || embeddings.size() != labels.size())
      throw std::invalid_argument("LabeledBatch: need N >= 1 embeddings with matching labels");
    LabeledBatch b;
    b.embeddings = std::move(embeddings);
    b.labels = std::move(labels);
    int k = 0;
    for (int y : b.labels) {
      if (y < 0) throw std::invalid_argument("LabeledBatch: negative label");
      k = std::max(k, y + 1);
    }
    b.num_labels = k;
    b.cluster_index.resize(k);
    for (std::size_t i = 0; i < b.labels.size(); ++i)
      b.cluster_index[b.labels[i]].push_back(i);
    for (const auto& members : b.cluster_index)
      if (members.empty())
        throw std::invalid_argument("LabeledBatch: labels must be dense in [0, K)");
    return b;
  }
};

// Loss value plus exact analytic gradients. grad_raw_radius carries the
// derivative w.r.t. whichever trainable scalar the loss owns (raw b for BCL,
// raw margin for contrastive, raw bias for LDML); zero elsewhere. grad_aux
// is used only by the cross-entropy baseline (classifier weights row-major,
// then biases).
struct LossOutput {
  double value{0.0};
  std::vector<Vec> grad_embeddings;
  double grad_raw_radius{0.0};
  std::vector<double> grad_aux;
};

namespace detail {

struct ClusterGeometry {
  std::vector<Vec> mu;        // centroid per label
  std::vector<double> nu;     // member count (Euclidean) or sum norm (sphere)
  std::vector<Vec> grad_mu;   // accumulated downstream gradients
};

inline ClusterGeometry compute_centroids(const LabeledBatch& batch, const EmbeddingSpace& space) {
  ClusterGeometry g;
  g.mu.resize(batch.num_labels);
  g.nu.resize(batch.num_labels);
  g.grad_mu.assign(batch.num_labels, Vec(space.dim, 0.0));
  for (int k = 0; k < batch.num_labels; ++k) {
    try {
      Centroid c = centroid_of(batch.embeddings, batch.cluster_index[k], space);
      if (space.kind == SpaceKind::Euclidean) {
        g.nu[k] = static_cast<double>(c.member_count);
      } else {
        Vec sum(space.dim, 0.0);
        for (std::size_t i : batch.cluster_index[k]) axpy(1.0, batch.embeddings[i], sum);
        g.nu[k] = norm2(sum);
      }
      g.mu[k] = std::move(c.values);
    } catch (DegenerateCentroidError& e) {
      e.set_cluster_label(k);
      throw;
    }
  }
  return g;
}

// Push accumulated centroid gradients back onto member embeddings.
// Euclidean: d mu / d f_j = I / n. Sphere: mu = S/|S|, so
// d mu / d f_j = (I - mu mu^T) / |S| for every member j.
inline void backprop_centroids(const LabeledBatch& batch, const EmbeddingSpace& space,
                               const ClusterGeometry& g, std::vector<Vec>& grad_embeddings) {
  for (int k = 0; k < batch.num_labels; ++k) {
    const Vec& gm = g.grad_mu[k];
    if (space.kind == SpaceKind::Euclidean) {
      const double inv_n = 1.0 / g.nu[k];
      for (std::size_t i : batch.cluster_index[k]) axpy(inv_n, gm, grad_embeddings[i]);
    } else {
      const double proj = dot(g.mu[k], gm);
      Vec tangent = gm;
      axpy(-proj, g.mu[k], tangent);
      const double inv_nu = 1.0 / g.nu[k];
      for (std::size_t i : batch.cluster_index[k]) axpy(inv_nu, tangent, grad_embeddings[i]);
    }
  }
}

inline std::vector<Vec> zero_grads(const LabeledBatch& batch, int dim) {
  return std::vector<Vec>(batch.size(), Vec(dim, 0.0));
}

}  // namespace detail

// Ball cluster loss: alpha * L_sim + L_dis over the batch, where L_sim
// hinges each sample's squared distance to its own centroid at b, and L_dis
// pushes each sample at least gamma = 9b + eps away from the most offending
// foreign centroid. Gradients flow through the centroids and, on the
// sphere, through the sum normalization. K = 1 batches have L_dis = 0.
inline LossOutput bcl_loss(const LabeledBatch& batch, const BallParams& params,
                           const EmbeddingSpace& space) {
  const double b = params.radius_sq();
  const double gamma = params.gamma();
  const double n = static_cast<double>(batch.size());

  detail::ClusterGeometry geo = detail::compute_centroids(batch, space);

  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);

  double sim_sum = 0.0, dis_sum = 0.0;
  double grad_b = 0.0;  // d value / d b before the softplus chain

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int k = batch.labels[i];
    const Vec& f = batch.embeddings[i];

    const double d_own = sq_dist(f, geo.mu[k]);
    if (d_own - b > 0.0) {
      sim_sum += d_own - b;
      const double w = params.alpha / n;
      for (int j = 0; j < space.dim; ++j) {
        const double diff = f[j] - geo.mu[k][j];
        out.grad_embeddings[i][j] += w * 2.0 * diff;
        geo.grad_mu[k][j] -= w * 2.0 * diff;
      }
      grad_b -= params.alpha / n;
    }

    // Most offending foreign centroid; ties resolve to the lowest index.
    int best_v = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < batch.num_labels; ++v) {
      if (v == k) continue;
      const double t = gamma - sq_dist(f, geo.mu[v]);
      if (t > best) {
        best = t;
        best_v = v;
      }
    }
    if (best_v >= 0 && best > 0.0) {
      dis_sum += best;
      const double w = 1.0 / n;
      for (int j = 0; j < space.dim; ++j) {
        const double diff = f[j] - geo.mu[best_v][j];
        out.grad_embeddings[i][j] -= w * 2.0 * diff;
        geo.grad_mu[best_v][j] += w * 2.0 * diff;
      }
      grad_b += 9.0 / n;
    }
  }

  detail::backprop_centroids(batch, space, geo, out.grad_embeddings);
  out.value = params.alpha * sim_sum / n + dis_sum / n;
  out.grad_raw_radius = grad_b * sigmoid(params.raw_radius);
  return out;
}

// Contrastive loss averaged over all unordered pairs. The margin m applies
// to the plain (unsquared) distance of dissimilar pairs and is trained
// through softplus of raw_margin, like b in BCL.
inline LossOutput contrastive_loss(const LabeledBatch& batch, double raw_margin,
                                   const EmbeddingSpace& space) {
  const std::size_t n = batch.size();
  const double m = softplus(raw_margin);

  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);
  if (n < 2) return out;

  const double num_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double w = 1.0 / num_pairs;
  double total = 0.0, grad_m = 0.0;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = sq_dist(batch.embeddings[i], batch.embeddings[j]);
      if (batch.labels[i] == batch.labels[j]) {
        total += 0.5 * d2;
        for (int c = 0; c < space.dim; ++c) {
          const double diff = batch.embeddings[i][c] - batch.embeddings[j][c];
          out.grad_embeddings[i][c] += w * diff;
          out.grad_embeddings[j][c] -= w * diff;
        }
      } else {
        const double d = std::sqrt(d2);
        const double h = m - d;
        if (h > 0.0) {
          total += 0.5 * h * h;
          grad_m += h;
          if (d > 0.0) {
            const double coef = -h / d;  // d(term)/d(d) = -h, d(d)/d f = diff/d
            for (int c = 0; c < space.dim; ++c) {
              const double diff = batch.embeddings[i][c] - batch.embeddings[j][c];
              out.grad_embeddings[i][c] += w * coef * diff;
              out.grad_embeddings[j][c] -= w * coef * diff;
            }
          }
        }
      }
    }
  }

  out.value = total * w;
  out.grad_raw_radius = grad_m * w * sigmoid(raw_margin);
  return out;
}

// Triplet loss averaged over all valid triplets: each unordered same-label
// pair (i < j), anchored at i, against every sample with a different label.
// The margin is a fixed hyperparameter (no trainable threshold).
inline LossOutput triplet_loss(const LabeledBatch& batch, double margin,
                               const EmbeddingSpace& space) {
  const std::size_t n = batch.size();
  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);

  // Pairwise squared distances once; triplet scan only touches scalars, and
  // per-pair gradient coefficients are flushed in a single vector pass.
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d2[i * n + j] = d2[j * n + i] = sq_dist(batch.embeddings[i], batch.embeddings[j]);

  std::vector<double> pair_coef(n * n, 0.0);
  double total = 0.0;
  long long num_triplets = 0, active = 0;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (batch.labels[i] != batch.labels[j]) continue;
      for (std::size_t u = 0; u < n; ++u) {
        if (batch.labels[u] == batch.labels[i]) continue;
        ++num_triplets;
        const double arg = d2[i * n + j] - d2[i * n + u] + margin;
        if (arg > 0.0) {
          ++active;
          total += arg;
          pair_coef[i * n + j] += 1.0;
          pair_coef[i * n + u] -= 1.0;
        }
      }
    }
  }

  if (num_triplets == 0) return out;
  const double w = 1.0 / static_cast<double>(num_triplets);
  if (active > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double c = pair_coef[i * n + j];
        if (c == 0.0) continue;
        for (int d = 0; d < space.dim; ++d) {
          const double diff = batch.embeddings[i][d] - batch.embeddings[j][d];
          out.grad_embeddings[i][d] += w * c * 2.0 * diff;
          out.grad_embeddings[j][d] -= w * c * 2.0 * diff;
        }
      }
    }
  }
  out.value = total * w;
  return out;
}

// LDML: binary cross-entropy over all unordered pairs with
// p_ij = sigmoid(beta - d^2), beta trained through softplus of raw_bias.
inline LossOutput ldml_loss(const LabeledBatch& batch, double raw_bias,
                            const EmbeddingSpace& space) {
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("ldml_loss: need at least 2 samples");
  const double beta = softplus(raw_bias);

  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);

  const double num_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double w = 1.0 / num_pairs;
  double total = 0.0, grad_beta = 0.0;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double z = beta - sq_dist(batch.embeddings[i], batch.embeddings[j]);
      double dz;  // d(term)/dz
      if (batch.labels[i] == batch.labels[j]) {
        total += softplus(-z);  // -log sigmoid(z)
        dz = sigmoid(z) - 1.0;
      } else {
        total += softplus(z);  // -log(1 - sigmoid(z))
        dz = sigmoid(z);
      }
      grad_beta += dz;
      for (int c = 0; c < space.dim; ++c) {
        const double diff = batch.embeddings[i][c] - batch.embeddings[j][c];
        out.grad_embeddings[i][c] += w * dz * (-2.0) * diff;
        out.grad_embeddings[j][c] += w * dz * 2.0 * diff;
      }
    }
  }

  out.value = total * w;
  out.grad_raw_radius = grad_beta * w * sigmoid(raw_bias);
  return out;
}

// Prototypical loss with the BCL-style posterior: softmax over
// -d^2(f, mu_k) + b for the own class versus -d^2(f, mu_v) + gamma for the
// rest, weighted 1/|C_k| per sample. b = gamma = 0 recovers the vanilla
// prototypical network loss.
inline LossOutput prototypical_loss(const LabeledBatch& batch, double b, double gamma,
                                    const EmbeddingSpace& space) {
  const std::size_t n = batch.size();
  const int K = batch.num_labels;

  detail::ClusterGeometry geo = detail::compute_centroids(batch, space);

  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);

  double total = 0.0;
  Vec logits(K), probs(K);

  for (std::size_t i = 0; i < n; ++i) {
    const int k = batch.labels[i];
    const Vec& f = batch.embeddings[i];
    for (int v = 0; v < K; ++v)
      logits[v] = -sq_dist(f, geo.mu[v]) + (v == k ? b : gamma);
    const double lse = log_sum_exp(logits);
    for (int v = 0; v < K; ++v) probs[v] = std::exp(logits[v] - lse);

    const double inv_ck = 1.0 / static_cast<double>(batch.cluster_index[k].size());
    total += -(logits[k] - lse) * inv_ck;

    const double scale = inv_ck / static_cast<double>(n);
    for (int v = 0; v < K; ++v) {
      const double dz = scale * (probs[v] - (v == k ? 1.0 : 0.0));
      if (dz == 0.0) continue;
      for (int c = 0; c < space.dim; ++c) {
        const double diff = f[c] - geo.mu[v][c];
        out.grad_embeddings[i][c] += dz * (-2.0) * diff;
        geo.grad_mu[v][c] += dz * 2.0 * diff;
      }
    }
  }

  detail::backprop_centroids(batch, space, geo, out.grad_embeddings);
  out.value = total / static_cast<double>(n);
  return out;
}

// K x D linear classifier head for the cross-entropy baseline. Clustering
// embeddings are taken before this head.
struct LinearClassifier {
  std::vector<Vec> weight;  // [K][D]
  Vec bias;                 // [K]

  int num_classes() const { return static_cast<int>(weight.size()); }
};

// Softmax cross-entropy over training identities, mean over the batch.
// grad_aux holds d value / d classifier: weights row-major, then biases.
inline LossOutput cross_entropy_loss(const LabeledBatch& batch, const LinearClassifier& clf,
                                     const EmbeddingSpace& space) {
  const std::size_t n = batch.size();
  const int K = clf.num_classes();
  if (K < 1 || static_cast<int>(clf.bias.size()) != K)
    throw std::invalid_argument("cross_entropy_loss: bad classifier shape");
  for (const Vec& row : clf.weight)
    if (static_cast<int>(row.size()) != space.dim)
      throw std::invalid_argument("cross_entropy_loss: classifier dim mismatch");
  for (int y : batch.labels)
    if (y >= K) throw std::invalid_argument("cross_entropy_loss: label out of classifier range");

  LossOutput out;
  out.grad_embeddings = detail::zero_grads(batch, space.dim);
  out.grad_aux.assign(static_cast<std::size_t>(K) * space.dim + K, 0.0);

  double total = 0.0;
  Vec logits(K), probs(K);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const Vec& f = batch.embeddings[i];
    for (int v = 0; v < K; ++v) logits[v] = dot(clf.weight[v], f) + clf.bias[v];
    const double lse = log_sum_exp(logits);
    for (int v = 0; v < K; ++v) probs[v] = std::exp(logits[v] - lse);
    total += -(logits[batch.labels[i]] - lse);

    for (int v = 0; v < K; ++v) {
      const double dz = inv_n * (probs[v] - (v == batch.labels[i] ? 1.0 : 0.0));
      if (dz == 0.0) continue;
      axpy(dz, clf.weight[v], out.grad_embeddings[i]);
      double* gw = out.grad_aux.data() + static_cast<std::size_t>(v) * space.dim;
      for (int c = 0; c < space.dim; ++c) gw[c] += dz * f[c];
      out.grad_aux[static_cast<std::size_t>(K) * space.dim + v] += dz;
    }
  }

  out.value = total * inv_n;
  return out;
}

// One mined pair realized as concrete embeddings for a fine-tuning step.
// For positives, orig_sq_dist is the pair's squared distance before
// fine-tuning started.
struct FinetunePair {
  Vec a;
  Vec b;
  bool is_positive{true};
  double orig_sq_dist{0.0};
};

// Pairwise fine-tuning loss with b frozen: positives hinge at
// min(orig_sq_dist, tau), negatives at tau + epsilon. Mean over pairs.
// grad_embeddings rows are laid out [a0, b0, a1, b1, ...].
inline LossOutput finetune_pair_loss(const std::vector<FinetunePair>& pairs, double tau,
                                     double epsilon_margin) {
  if (!(tau > 0.0)) throw std::invalid_argument("finetune_pair_loss: tau must be > 0");
  if (pairs.empty()) throw std::invalid_argument("finetune_pair_loss: empty pair list");

  LossOutput out;
  out.grad_embeddings.reserve(2 * pairs.size());
  const double w = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;

  for (const FinetunePair& p : pairs) {
    const int dim = static_cast<int>(p.a.size());
    Vec ga(dim, 0.0), gb(dim, 0.0);
    const double d2 = sq_dist(p.a, p.b);
    double coef = 0.0;  // d(term)/d(d2)
    if (p.is_positive) {
      const double h = d2 - std::min(p.orig_sq_dist, tau);
      if (h > 0.0) {
        total += h;
        coef = 1.0;
      }
    } else {
      const double h = tau + epsilon_margin - d2;
      if (h > 0.0) {
        total += h;
        coef = -1.0;
      }
    }
    if (coef != 0.0) {
      for (int c = 0; c < dim; ++c) {
        const double diff = p.a[c] - p.b[c];
        ga[c] = w * coef * 2.0 * diff;
        gb[c] = -w * coef * 2.0 * diff;
      }
    }
    out.grad_embeddings.push_back(std::move(ga));
    out.grad_embeddings.push_back(std::move(gb));
  }

  out.value = total * w;
  return out;
}

}  // namespace bcl
