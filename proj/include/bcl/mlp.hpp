#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcl/geometry.hpp"
#include "bcl/numeric.hpp"

namespace bcl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and feature formats are little-endian");

struct DenseLayer {
  std::vector<Vec> w;  // [out][in]
  Vec b;               // [out]

  int out_dim() const { return static_cast<int>(w.size()); }
  int in_dim() const { return w.empty() ? 0 : static_cast<int>(w[0].size()); }
};

// The 4-layer embedding network: linear layers with ReLU after the first
// three, then projection into the embedding space. raw_radius rides along
// as the model's trainable scalar (b-hat for BCL; margin/bias for the
// baselines that train one).
struct MlpModel {
  std::array<DenseLayer, 4> layers;
  double raw_radius{0.0};
  EmbeddingSpace space;

  int input_dim() const { return layers[0].in_dim(); }
  int output_dim() const { return layers[3].out_dim(); }

  std::array<int, 5> dims() const {
    return {layers[0].in_dim(), layers[0].out_dim(), layers[1].out_dim(),
            layers[2].out_dim(), layers[3].out_dim()};
  }
};

// Hidden sizes used when none are given: 256 -> 256,128,64 and
// 2048 -> 512,256,128, halving but never below the embedding dim.
inline std::array<int, 3> default_hidden_dims(int input_dim, int output_dim) {
  const int h1 = std::min(512, std::max(output_dim, input_dim));
  const int h2 = std::max(output_dim, h1 / 2);
  const int h3 = std::max(output_dim, h2 / 2);
  return {h1, h2, h3};
}

// Glorot-uniform weights, zero biases, initial squared radius 0.25.
inline MlpModel init_mlp(int input_dim, std::array<int, 3> hidden, int output_dim,
                         SpaceKind kind, std::mt19937_64& rng,
                         double initial_radius_sq = 0.25) {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("init_mlp: dims must be >= 1");
  MlpModel m;
  m.space = EmbeddingSpace(kind, output_dim);
  m.raw_radius = softplus_inverse(initial_radius_sq);
  const std::array<int, 5> dims = {input_dim, hidden[0], hidden[1], hidden[2], output_dim};
  for (int l = 0; l < 4; ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer& layer = m.layers[l];
    layer.w.assign(fan_out, Vec(fan_in, 0.0));
    layer.b.assign(fan_out, 0.0);
    for (int o = 0; o < fan_out; ++o)
      for (int i = 0; i < fan_in; ++i) layer.w[o][i] = u(rng);
  }
  return m;
}

// Activations cached by forward_batch for the matching backward_batch call.
struct ForwardCache {
  std::vector<Vec> inputs;
  std::array<std::vector<Vec>, 4> pre;   // pre-activation per layer
  std::vector<Vec> raw_out;              // layer-4 output before projection
  std::vector<double> out_norm;          // |raw_out| (1.0 under Euclidean)
  std::size_t size() const { return inputs.size(); }
};

namespace detail {

inline Vec affine(const DenseLayer& layer, const Vec& x) {
  Vec z(layer.out_dim());
  for (int o = 0; o < layer.out_dim(); ++o) z[o] = dot(layer.w[o], x) + layer.b[o];
  return z;
}

}  // namespace detail

// Forward pass over a batch. A sample whose raw output has (near-)zero norm
// cannot be projected onto the sphere: with `dead_samples` supplied its
// index is recorded and a zero embedding emitted, otherwise it throws.
inline std::vector<Vec> forward_batch(const MlpModel& model, const std::vector<Vec>& inputs,
                                      ForwardCache* cache = nullptr,
                                      std::vector<std::size_t>* dead_samples = nullptr) {
  std::vector<Vec> out;
  out.reserve(inputs.size());
  if (cache) {
    cache->inputs = inputs;
    for (auto& p : cache->pre) {
      p.clear();
      p.reserve(inputs.size());
    }
    cache->raw_out.clear();
    cache->out_norm.clear();
  }
  if (dead_samples) dead_samples->clear();
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const Vec& x = inputs[s];
    if (static_cast<int>(x.size()) != model.input_dim())
      throw std::invalid_argument("forward: input dim mismatch");
    Vec a = x;
    for (int l = 0; l < 4; ++l) {
      Vec z = detail::affine(model.layers[l], a);
      if (cache) cache->pre[l].push_back(z);
      if (l < 3)
        for (double& v : z) v = std::max(0.0, v);
      a = std::move(z);
    }
    if (cache) cache->raw_out.push_back(a);
    double norm = 1.0;
    if (model.space.kind == SpaceKind::Hypersphere) {
      norm = norm2(a);
      if (norm <= 1e-12) {
        if (!dead_samples) throw DegenerateInputError("forward: zero-norm output under hypersphere");
        dead_samples->push_back(s);
        norm = 1.0;  // placeholder row; callers drop it
      } else {
        for (double& v : a) v /= norm;
      }
    }
    if (cache) cache->out_norm.push_back(norm);
    out.push_back(std::move(a));
  }
  return out;
}

inline Vec forward(const MlpModel& model, const Vec& input) {
  return forward_batch(model, {input}).front();
}

struct MlpGradients {
  std::array<DenseLayer, 4> layers;
  double raw_radius{0.0};

  static MlpGradients zero_like(const MlpModel& model) {
    MlpGradients g;
    for (int l = 0; l < 4; ++l) {
      g.layers[l].w.assign(model.layers[l].out_dim(), Vec(model.layers[l].in_dim(), 0.0));
      g.layers[l].b.assign(model.layers[l].out_dim(), 0.0);
    }
    return g;
  }
};

// Reverse-mode gradients of a scalar loss w.r.t. every weight and bias,
// given d loss / d embedding per sample. Accumulation runs in sample index
// order so results are reproducible.
inline MlpGradients backward_batch(const MlpModel& model, const ForwardCache& cache,
                                   const std::vector<Vec>& grad_embeddings) {
  if (cache.size() != grad_embeddings.size() || cache.raw_out.size() != cache.size())
    throw std::logic_error("backward_batch: cache does not match this batch");

  MlpGradients grads = MlpGradients::zero_like(model);

  for (std::size_t s = 0; s < cache.size(); ++s) {
    Vec g = grad_embeddings[s];
    if (model.space.kind == SpaceKind::Hypersphere) {
      // f = z/|z|  =>  dL/dz = (g - f (f.g)) / |z|
      const Vec& raw = cache.raw_out[s];
      const double norm = cache.out_norm[s];
      Vec f = raw;
      for (double& v : f) v /= norm;
      const double fg = dot(f, g);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = (g[j] - f[j] * fg) / norm;
    }

    for (int l = 3; l >= 0; --l) {
      // activation feeding layer l
      const Vec* act;
      Vec relu_act;
      if (l == 0) {
        act = &cache.inputs[s];
      } else {
        relu_act = cache.pre[l - 1][s];
        for (double& v : relu_act) v = std::max(0.0, v);
        act = &relu_act;
      }

      const DenseLayer& layer = model.layers[l];
      DenseLayer& glayer = grads.layers[l];
      Vec g_prev(layer.in_dim(), 0.0);
      for (int o = 0; o < layer.out_dim(); ++o) {
        const double go = g[o];
        if (go != 0.0) {
          glayer.b[o] += go;
          axpy(go, *act, glayer.w[o]);
          axpy(go, layer.w[o], g_prev);
        }
      }
      if (l > 0) {
        const Vec& z_prev = cache.pre[l - 1][s];
        for (std::size_t j = 0; j < g_prev.size(); ++j)
          if (z_prev[j] <= 0.0) g_prev[j] = 0.0;
      }
      g = std::move(g_prev);
    }
  }
  return grads;
}

// --- checkpoint format (BCLM) -----------------------------------------------
//
//   magic "BCLM" | u32 version=1 | u8 space kind | u32 layer_count=4
//   u32 dims[5] (input, h1, h2, h3, out) | f64 raw_radius
//   per layer: f64 weights row-major [out][in], f64 biases [out]
//
// All integers and floats little-endian.

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw CheckpointError(std::string("checkpoint truncated reading ") + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const MlpModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
  os.write("BCLM", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(model.space.kind));
  detail::write_pod<std::uint32_t>(os, 4);
  for (int d : model.dims()) detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  detail::write_pod<double>(os, model.raw_radius);
  for (const DenseLayer& layer : model.layers) {
    for (const Vec& row : layer.w)
      for (double v : row) detail::write_pod<double>(os, v);
    for (double v : layer.b) detail::write_pod<double>(os, v);
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

inline MlpModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BCLM", 4) != 0)
    throw CheckpointError("bad checkpoint magic (want BCLM): " + path);
  const auto version = detail::read_pod<std::uint32_t>(is, "version");
  if (version != 1) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto kind = detail::read_pod<std::uint8_t>(is, "space kind");
  if (kind > 1) throw CheckpointError("bad space kind in checkpoint");
  const auto layer_count = detail::read_pod<std::uint32_t>(is, "layer count");
  if (layer_count != 4) throw CheckpointError("unsupported layer count");
  std::array<int, 5> dims{};
  for (int& d : dims) {
    d = static_cast<int>(detail::read_pod<std::uint32_t>(is, "dims"));
    if (d < 1) throw CheckpointError("bad layer dim in checkpoint");
  }

  MlpModel m;
  m.space = EmbeddingSpace(static_cast<SpaceKind>(kind), dims[4]);
  m.raw_radius = detail::read_pod<double>(is, "raw radius");
  for (int l = 0; l < 4; ++l) {
    DenseLayer& layer = m.layers[l];
    layer.w.assign(dims[l + 1], Vec(dims[l], 0.0));
    layer.b.assign(dims[l + 1], 0.0);
    for (Vec& row : layer.w)
      for (double& v : row) v = detail::read_pod<double>(is, "weights");
    for (double& v : layer.b) v = detail::read_pod<double>(is, "biases");
  }
  return m;
}

}  // namespace bcl
