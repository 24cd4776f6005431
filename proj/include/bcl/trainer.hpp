#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcl/dataset.hpp"
#include "bcl/hac.hpp"
#include "bcl/losses.hpp"
#include "bcl/metrics.hpp"
#include "bcl/mlp.hpp"

namespace bcl {

enum class LossKind { Bcl, Contrastive, Triplet, Ldml, Prototypical, CrossEntropy };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::Bcl: return "bcl";
    case LossKind::Contrastive: return "contrastive";
    case LossKind::Triplet: return "triplet";
    case LossKind::Ldml: return "ldml";
    case LossKind::Prototypical: return "proto";
    case LossKind::CrossEntropy: return "ce";
  }
  return "?";
}

struct TrainConfig {
  double learning_rate{0.003};
  double momentum{0.9};
  double lr_decay{0.9};       // applied every lr_decay_every epochs
  int lr_decay_every{10};
  double radius_lr_scale{0.1};
  int radius_freeze_epochs{5};
  int batch_size{2000};
  int epochs{0};
  double alpha{4.0};
  double epsilon_margin{0.01};
  double triplet_margin{0.2};
  std::uint64_t seed{0};
  LossKind loss{LossKind::Bcl};

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  }
};

struct EpochStats {
  int epoch{0};
  double loss{0.0};
  double radius_sq{0.0};  // current b
  bool has_validation{false};
  int val_clusters{0};
  double val_nmi{0.0};
  double val_wcp{0.0};
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_checkpoint_epoch{-1};  // maximizes validation NMI; -1 without a val set
};

// Raised when the loss goes non-finite; carries where and how.
class TrainAbortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampledBatch {
  std::vector<Vec> inputs;
  std::vector<int> labels;                 // dense in [0, K)
  std::vector<std::size_t> track_indices;
};

// Uniformly draw `size` tracks without replacement and one frame per track,
// relabeling to a dense [0, K) for the batch.
inline SampledBatch sample_batch(const TrackDataset& ds, std::size_t size, std::mt19937_64& rng) {
  if (size > ds.tracks.size())
    throw std::invalid_argument("sample_batch: size exceeds track count");
  std::vector<std::size_t> order(ds.tracks.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, order.size() - 1);
    std::swap(order[i], order[u(rng)]);
  }
  order.resize(size);

  SampledBatch batch;
  batch.track_indices = order;
  batch.inputs.reserve(size);
  batch.labels.reserve(size);
  std::vector<int> dense_label(ds.identity_count, -1);
  int next = 0;
  for (std::size_t t : order) {
    const Track& track = ds.tracks[t];
    std::uniform_int_distribution<std::size_t> pick(0, track.frames.size() - 1);
    const auto& frame = track.frames[pick(rng)];
    batch.inputs.emplace_back(frame.begin(), frame.end());
    if (dense_label[track.label] < 0) dense_label[track.label] = next++;
    batch.labels.push_back(dense_label[track.label]);
  }
  return batch;
}

namespace detail {

// SGD with momentum: v <- momentum*v + g; p <- p - lr*v.
struct SgdState {
  MlpGradients velocity;
  std::vector<double> aux_velocity;

  static SgdState zero_like(const MlpModel& model) {
    SgdState s;
    s.velocity = MlpGradients::zero_like(model);
    return s;
  }
};

inline void sgd_step(MlpModel& model, SgdState& state, const MlpGradients& grads,
                     double raw_radius_grad, double lr, double radius_lr, double momentum) {
  for (int l = 0; l < 4; ++l) {
    DenseLayer& v = state.velocity.layers[l];
    const DenseLayer& g = grads.layers[l];
    DenseLayer& p = model.layers[l];
    for (std::size_t o = 0; o < p.w.size(); ++o) {
      for (std::size_t i = 0; i < p.w[o].size(); ++i) {
        v.w[o][i] = momentum * v.w[o][i] + g.w[o][i];
        p.w[o][i] -= lr * v.w[o][i];
      }
      v.b[o] = momentum * v.b[o] + g.b[o];
      p.b[o] -= lr * v.b[o];
    }
  }
  state.velocity.raw_radius = momentum * state.velocity.raw_radius + raw_radius_grad;
  model.raw_radius -= radius_lr * state.velocity.raw_radius;
}

struct BatchLoss {
  LossOutput out;
  LabeledBatch batch;
};

inline LossOutput dispatch_loss(const LabeledBatch& batch, const MlpModel& model,
                                const TrainConfig& cfg, const LinearClassifier* clf) {
  BallParams params;
  params.raw_radius = model.raw_radius;
  params.epsilon_margin = cfg.epsilon_margin;
  params.alpha = cfg.alpha;
  switch (cfg.loss) {
    case LossKind::Bcl: return bcl_loss(batch, params, model.space);
    case LossKind::Contrastive: return contrastive_loss(batch, model.raw_radius, model.space);
    case LossKind::Triplet: return triplet_loss(batch, cfg.triplet_margin, model.space);
    case LossKind::Ldml: return ldml_loss(batch, model.raw_radius, model.space);
    case LossKind::Prototypical: return prototypical_loss(batch, 0.0, 0.0, model.space);
    case LossKind::CrossEntropy:
      if (!clf) throw std::logic_error("cross-entropy training requires a classifier");
      return cross_entropy_loss(batch, *clf, model.space);
  }
  throw std::logic_error("unknown loss kind");
}

// Drop selected samples; labels are re-densified unless they address fixed
// classifier rows.
inline bool drop_samples(SampledBatch& b, const std::vector<bool>& drop, bool redensify = true) {
  SampledBatch kept;
  std::vector<int> remap(*std::max_element(b.labels.begin(), b.labels.end()) + 1, -1);
  int next = 0;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (drop[i]) continue;
    if (remap[b.labels[i]] < 0) remap[b.labels[i]] = next++;
    kept.inputs.push_back(std::move(b.inputs[i]));
    kept.labels.push_back(redensify ? remap[b.labels[i]] : b.labels[i]);
    kept.track_indices.push_back(b.track_indices[i]);
  }
  b = std::move(kept);
  return !b.labels.empty();
}

// Drop every sample of the given batch label and re-densify.
inline bool drop_label(SampledBatch& b, int label) {
  std::vector<bool> drop(b.labels.size(), false);
  for (std::size_t i = 0; i < b.labels.size(); ++i) drop[i] = (b.labels[i] == label);
  return drop_samples(b, drop);
}

inline double param_norm(const MlpModel& model) {
  double s = 0.0;
  for (const DenseLayer& l : model.layers) {
    for (const Vec& row : l.w) s += dot(row, row);
    s += dot(l.b, l.b);
  }
  return std::sqrt(s);
}

}  // namespace detail

struct ValidationPoint {
  int clusters{0};
  double nmi_value{0.0};
  double wcp_value{0.0};
};

// Embed val tracks (frame-averaged), cluster at tau = 4b, score.
inline ValidationPoint validate_model(const MlpModel& model, const TrackDataset& val) {
  const std::vector<Vec> emb = embed_tracks(model, val);
  const Dendrogram dg = hac_complete(emb);
  const double tau = 4.0 * softplus(model.raw_radius);
  const ClusterAssignment pred = cut_threshold(dg, tau);
  const std::vector<int> truth = val.labels();
  return {pred.num_clusters, nmi(pred.labels, truth), wcp(pred.labels, truth)};
}

struct TrainResult {
  MlpModel model;
  TrainReport report;
  LinearClassifier classifier;  // populated only for cross-entropy training
};

// SGD-with-momentum training. Learning rate decays by lr_decay every
// lr_decay_every epochs; the radius parameter is frozen for the first
// radius_freeze_epochs epochs and then moves at radius_lr_scale times the
// decayed rate. With a validation set, the returned model is the
// best-validation-NMI checkpoint.
inline TrainResult train(const TrackDataset& train_set, const TrackDataset* val_set,
                         MlpModel model, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.tracks.empty()) throw std::invalid_argument("train: empty dataset");
  if (train_set.input_dim != model.input_dim())
    throw std::invalid_argument("train: dataset dim does not match model");

  std::mt19937_64 rng(cfg.seed);
  detail::SgdState sgd = detail::SgdState::zero_like(model);

  LinearClassifier clf;
  std::vector<double> clf_velocity;
  if (cfg.loss == LossKind::CrossEntropy) {
    const int k = train_set.identity_count, d = model.output_dim();
    const double bound = std::sqrt(6.0 / static_cast<double>(k + d));
    std::uniform_real_distribution<double> u(-bound, bound);
    clf.weight.assign(k, Vec(d, 0.0));
    clf.bias.assign(k, 0.0);
    for (auto& row : clf.weight)
      for (double& v : row) v = u(rng);
    clf_velocity.assign(static_cast<std::size_t>(k) * d + k, 0.0);
  }

  const std::size_t batch_size =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train_set.tracks.size());
  const std::size_t batches_per_epoch =
      (train_set.tracks.size() + batch_size - 1) / batch_size;

  TrainResult result;
  result.report.best_checkpoint_epoch = -1;
  MlpModel best_model = model;
  double best_nmi = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double decay_steps = static_cast<double>((epoch - 1) / cfg.lr_decay_every);
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, decay_steps);
    const bool radius_frozen = epoch <= cfg.radius_freeze_epochs;
    const double radius_lr = radius_frozen ? 0.0 : lr * cfg.radius_lr_scale;

    double epoch_loss = 0.0;
    for (std::size_t bi = 0; bi < batches_per_epoch; ++bi) {
      SampledBatch sb = sample_batch(train_set, batch_size, rng);

      // CE training: batch labels must address the global classifier rows.
      if (cfg.loss == LossKind::CrossEntropy)
        for (std::size_t i = 0; i < sb.labels.size(); ++i)
          sb.labels[i] = train_set.tracks[sb.track_indices[i]].label;

      LossOutput out;
      ForwardCache cache;
      for (;;) {
        std::vector<std::size_t> dead;
        std::vector<Vec> embeddings = forward_batch(model, sb.inputs, &cache, &dead);
        if (!dead.empty()) {
          // Samples with every ReLU dead have no direction on the sphere;
          // train on the rest of the batch.
          std::vector<bool> drop(sb.labels.size(), false);
          for (std::size_t d : dead) drop[d] = true;
          if (!detail::drop_samples(sb, drop, cfg.loss != LossKind::CrossEntropy)) break;
          continue;
        }
        LabeledBatch lb;
        if (cfg.loss == LossKind::CrossEntropy) {
          // CE labels address global classifier rows, so the batch is not
          // dense in [0, K); build the carrier directly.
          lb.embeddings = std::move(embeddings);
          lb.labels = sb.labels;
          lb.num_labels = train_set.identity_count;
          lb.cluster_index.resize(lb.num_labels);
          for (std::size_t i = 0; i < lb.labels.size(); ++i)
            lb.cluster_index[lb.labels[i]].push_back(i);
        } else {
          lb = LabeledBatch::from(std::move(embeddings), sb.labels);
        }
        try {
          out = detail::dispatch_loss(lb, model, cfg, &clf);
          break;
        } catch (const DegenerateCentroidError& e) {
          // Skip the offending cluster's samples for this batch.
          if (!detail::drop_label(sb, e.cluster_label())) break;
        }
      }
      if (sb.labels.empty()) continue;

      if (!std::isfinite(out.value))
        throw TrainAbortError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(bi) + " (|params| = " +
                              std::to_string(detail::param_norm(model)) +
                              ", b = " + std::to_string(softplus(model.raw_radius)) + ")");
      epoch_loss += out.value;

      MlpGradients grads = backward_batch(model, cache, out.grad_embeddings);
      const double radius_grad = radius_frozen ? 0.0 : out.grad_raw_radius;
      detail::sgd_step(model, sgd, grads, radius_grad, lr, radius_lr, cfg.momentum);

      if (cfg.loss == LossKind::CrossEntropy) {
        for (std::size_t p = 0; p < out.grad_aux.size(); ++p)
          clf_velocity[p] = cfg.momentum * clf_velocity[p] + out.grad_aux[p];
        const int d = model.output_dim();
        for (int v = 0; v < clf.num_classes(); ++v) {
          for (int c = 0; c < d; ++c)
            clf.weight[v][c] -= lr * clf_velocity[static_cast<std::size_t>(v) * d + c];
          clf.bias[v] -= lr * clf_velocity[static_cast<std::size_t>(clf.num_classes()) * d + v];
        }
      }

      const double b_now = softplus(model.raw_radius);
      if (!(b_now > 0.0))
        throw TrainAbortError("squared radius underflowed to zero at epoch " +
                              std::to_string(epoch));
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(batches_per_epoch);
    stats.radius_sq = softplus(model.raw_radius);
    if (val_set) {
      const ValidationPoint vp = validate_model(model, *val_set);
      stats.has_validation = true;
      stats.val_clusters = vp.clusters;
      stats.val_nmi = vp.nmi_value;
      stats.val_wcp = vp.wcp_value;
      if (vp.nmi_value > best_nmi) {
        best_nmi = vp.nmi_value;
        best_model = model;
        result.report.best_checkpoint_epoch = epoch;
      }
    }
    result.report.epochs.push_back(stats);
  }

  result.model = (val_set && result.report.best_checkpoint_epoch > 0) ? best_model : model;
  result.classifier = std::move(clf);
  return result;
}

struct FinetuneConfig {
  int iterations{2000};
  double learning_rate{0.0003};
  double momentum{0.9};
  double epsilon_margin{0.01};
  std::uint64_t seed{0};
};

// Fine-tune on mined pairs with b frozen at tau = 4b. Each iteration
// realizes every pair (fresh half-views for positives, one random frame per
// track for negatives), evaluates the pairwise loss, and takes one SGD step.
inline MlpModel finetune(MlpModel model, const TrackDataset& ds, const PairSet& pairs,
                         const FinetuneConfig& cfg) {
  if (pairs.positives.empty() && pairs.negatives.empty())
    throw std::invalid_argument("finetune: empty pair set");

  const double tau = 4.0 * softplus(model.raw_radius);
  std::mt19937_64 rng(cfg.seed);
  detail::SgdState sgd = detail::SgdState::zero_like(model);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Vec> inputs;
    inputs.reserve(2 * (pairs.positives.size() + pairs.negatives.size()));
    for (const auto& p : pairs.positives) {
      auto [va, vb] = track_half_views(ds.tracks[p.track_a], rng);
      inputs.push_back(std::move(va));
      inputs.push_back(std::move(vb));
    }
    for (const auto& p : pairs.negatives) {
      const Track& ta = ds.tracks[p.track_a];
      const Track& tb = ds.tracks[p.track_b];
      std::uniform_int_distribution<std::size_t> ua(0, ta.frames.size() - 1);
      std::uniform_int_distribution<std::size_t> ub(0, tb.frames.size() - 1);
      const auto& fa = ta.frames[ua(rng)];
      const auto& fb = tb.frames[ub(rng)];
      inputs.emplace_back(fa.begin(), fa.end());
      inputs.emplace_back(fb.begin(), fb.end());
    }

    ForwardCache cache;
    const std::vector<Vec> emb = forward_batch(model, inputs, &cache);

    std::vector<FinetunePair> fps;
    fps.reserve(pairs.positives.size() + pairs.negatives.size());
    std::size_t row = 0;
    for (const auto& p : pairs.positives) {
      fps.push_back({emb[row], emb[row + 1], true, p.orig_sq_dist});
      row += 2;
    }
    for (std::size_t i = 0; i < pairs.negatives.size(); ++i) {
      fps.push_back({emb[row], emb[row + 1], false, 0.0});
      row += 2;
    }

    const LossOutput out = finetune_pair_loss(fps, tau, cfg.epsilon_margin);
    if (!std::isfinite(out.value))
      throw TrainAbortError("non-finite fine-tune loss at iteration " + std::to_string(it));

    MlpGradients grads = backward_batch(model, cache, out.grad_embeddings);
    detail::sgd_step(model, sgd, grads, 0.0, cfg.learning_rate, 0.0, cfg.momentum);
  }
  return model;
}

}  // namespace bcl
