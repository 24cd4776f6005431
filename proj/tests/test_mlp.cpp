#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <random>

#include "bcl/mlp.hpp"
#include "support/oracles.hpp"

using bcl::DenseLayer;
using bcl::EmbeddingSpace;
using bcl::MlpModel;
using bcl::SpaceKind;
using bcl::Vec;

namespace {

MlpModel square_identity_model(int d, SpaceKind kind) {
  MlpModel m;
  m.space = EmbeddingSpace(kind, d);
  m.raw_radius = bcl::softplus_inverse(0.25);
  for (auto& layer : m.layers) {
    layer.w.assign(d, Vec(d, 0.0));
    layer.b.assign(d, 0.0);
    for (int i = 0; i < d; ++i) layer.w[i][i] = 1.0;
  }
  return m;
}

// Independent re-evaluation: no shared code with forward_batch.
Vec reevaluate(const MlpModel& m, const Vec& x) {
  Vec a = x;
  for (int l = 0; l < 4; ++l) {
    Vec z(m.layers[l].w.size(), 0.0);
    for (std::size_t o = 0; o < z.size(); ++o) {
      double s = m.layers[l].b[o];
      for (std::size_t i = 0; i < a.size(); ++i) s += m.layers[l].w[o][i] * a[i];
      z[o] = (l < 3) ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  if (m.space.kind == SpaceKind::Hypersphere) {
    double n = 0.0;
    for (double v : a) n += v * v;
    n = std::sqrt(n);
    for (double& v : a) v /= n;
  }
  return a;
}

}  // namespace

TEST_CASE("default hidden dims follow the published configurations") {
  CHECK(bcl::default_hidden_dims(256, 64) == std::array<int, 3>{256, 128, 64});
  CHECK(bcl::default_hidden_dims(2048, 64) == std::array<int, 3>{512, 256, 128});
}

TEST_CASE("forward: zero model maps everything to zero") {
  std::mt19937_64 rng(3);
  MlpModel m = bcl::init_mlp(6, {5, 4, 3}, 2, SpaceKind::Euclidean, rng);
  for (auto& layer : m.layers) {
    for (auto& row : layer.w) std::fill(row.begin(), row.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  const Vec out = bcl::forward(m, {1.0, -2.0, 3.0, 0.5, 0.0, 9.0});
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward: identity blocks pass positive inputs through") {
  const MlpModel m = square_identity_model(3, SpaceKind::Euclidean);
  const Vec x = {0.5, 1.25, 2.0};
  CHECK(bcl::forward(m, x) == x);
}

TEST_CASE("forward matches independent re-evaluation") {
  std::mt19937_64 rng(17);
  for (SpaceKind kind : {SpaceKind::Euclidean, SpaceKind::Hypersphere}) {
    const MlpModel m = bcl::init_mlp(7, {6, 5, 4}, 3, kind, rng);
    for (int rep = 0; rep < 20; ++rep) {
      const Vec x = oracle::random_points(1, 7, rng)[0];
      const Vec got = bcl::forward(m, x);
      const Vec want = reevaluate(m, x);
      for (int j = 0; j < 3; ++j) REQUIRE(got[j] == Catch::Approx(want[j]).margin(1e-12));
    }
  }
  CHECK_THROWS_AS(bcl::forward(square_identity_model(3, SpaceKind::Euclidean), {1.0}),
                  std::invalid_argument);
}

TEST_CASE("backward: zero upstream gradient yields zero parameter gradients") {
  std::mt19937_64 rng(5);
  const MlpModel m = bcl::init_mlp(4, {4, 4, 4}, 2, SpaceKind::Euclidean, rng);
  bcl::ForwardCache cache;
  const auto inputs = oracle::random_points(3, 4, rng);
  bcl::forward_batch(m, inputs, &cache);
  const auto grads = bcl::backward_batch(m, cache, std::vector<Vec>(3, Vec(2, 0.0)));
  for (const DenseLayer& l : grads.layers) {
    for (const Vec& row : l.w)
      for (double v : row) REQUIRE(v == 0.0);
    for (double v : l.b) REQUIRE(v == 0.0);
  }
}

TEST_CASE("backward: single effective layer with squared-norm loss") {
  // Layers 2-4 are identity blocks, so L = |W1 x + b1|^2 (inputs chosen to
  // keep every ReLU active): dL/dW[o][i] = 2 f_o x_i.
  std::mt19937_64 rng(29);
  MlpModel m = square_identity_model(3, SpaceKind::Euclidean);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (auto& row : m.layers[0].w)
    for (double& v : row) v = u(rng);
  const Vec x = {0.7, 0.3, 0.9};

  bcl::ForwardCache cache;
  const Vec f = bcl::forward_batch(m, {x}, &cache)[0];
  Vec dl(3);
  for (int j = 0; j < 3; ++j) dl[j] = 2.0 * f[j];
  const auto grads = bcl::backward_batch(m, cache, {dl});
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      REQUIRE(grads.layers[0].w[o][i] == Catch::Approx(2.0 * f[o] * x[i]).margin(1e-10));
}

TEST_CASE("backward matches finite differences over all parameters") {
  std::mt19937_64 rng(31);
  for (SpaceKind kind : {SpaceKind::Euclidean, SpaceKind::Hypersphere}) {
    MlpModel m = bcl::init_mlp(5, {4, 4, 3}, 2, kind, rng);
    // Slightly positive biases keep ReLUs and the sphere projection away
    // from their kinks under the finite-difference perturbations.
    for (auto& layer : m.layers)
      for (double& b : layer.b) b = 0.05;
    const auto inputs = oracle::random_points(4, 5, rng);

    // Loss: sum of squares of all embedding coordinates.
    auto loss_of = [&](const MlpModel& model) {
      const auto emb = bcl::forward_batch(model, inputs);
      double s = 0.0;
      for (const Vec& f : emb) s += bcl::dot(f, f);
      return s;
    };

    bcl::ForwardCache cache;
    const auto emb = bcl::forward_batch(m, inputs, &cache);
    std::vector<Vec> dl(emb.size());
    for (std::size_t i = 0; i < emb.size(); ++i) {
      dl[i] = emb[i];
      for (double& v : dl[i]) v *= 2.0;
    }
    const auto grads = bcl::backward_batch(m, cache, dl);

    const double h = 1e-5;
    auto check_param = [&](double* p, double analytic, const char* what) {
      const double keep = *p;
      *p = keep + h;
      const double up = loss_of(m);
      *p = keep - h;
      const double down = loss_of(m);
      *p = keep;
      const double numeric = (up - down) / (2.0 * h);
      INFO(what << " analytic " << analytic << " numeric " << numeric);
      REQUIRE(oracle::grad_close(analytic, numeric, 1e-4, 1e-7));
    };

    for (int l = 0; l < 4; ++l) {
      for (std::size_t o = 0; o < m.layers[l].w.size(); ++o) {
        for (std::size_t i = 0; i < m.layers[l].w[o].size(); ++i)
          check_param(&m.layers[l].w[o][i], grads.layers[l].w[o][i], "weight");
        check_param(&m.layers[l].b[o], grads.layers[l].b[o], "bias");
      }
    }
  }
}

TEST_CASE("backward rejects a cache from a different batch") {
  std::mt19937_64 rng(41);
  const MlpModel m = bcl::init_mlp(3, {3, 3, 3}, 2, SpaceKind::Euclidean, rng);
  bcl::ForwardCache cache;
  bcl::forward_batch(m, oracle::random_points(3, 3, rng), &cache);
  CHECK_THROWS_AS(bcl::backward_batch(m, cache, std::vector<Vec>(5, Vec(2, 0.0))),
                  std::logic_error);
}

TEST_CASE("checkpoint round trip is exact") {
  std::mt19937_64 rng(53);
  const MlpModel m = bcl::init_mlp(6, {5, 4, 3}, 2, SpaceKind::Hypersphere, rng);
  const auto path = std::filesystem::temp_directory_path() / "bcl_ckpt_test.bclm";
  bcl::save_checkpoint(m, path.string());
  const MlpModel back = bcl::load_checkpoint(path.string());

  CHECK(back.space.kind == m.space.kind);
  CHECK(back.raw_radius == m.raw_radius);
  for (int l = 0; l < 4; ++l) {
    REQUIRE(back.layers[l].w == m.layers[l].w);
    REQUIRE(back.layers[l].b == m.layers[l].b);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects garbage") {
  const auto path = std::filesystem::temp_directory_path() / "bcl_ckpt_bad.bclm";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE this is not a checkpoint";
  }
  CHECK_THROWS_AS(bcl::load_checkpoint(path.string()), bcl::CheckpointError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(bcl::load_checkpoint((path.parent_path() / "missing.bclm").string()),
                  bcl::CheckpointError);
}
