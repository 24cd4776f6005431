#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "bcl/losses.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using bcl::BallParams;
using bcl::EmbeddingSpace;
using bcl::LabeledBatch;
using bcl::LossOutput;
using bcl::SpaceKind;
using bcl::Vec;

namespace {

const EmbeddingSpace kLine(SpaceKind::Euclidean, 1);

LabeledBatch line_batch(std::vector<double> xs, std::vector<int> labels) {
  std::vector<Vec> emb;
  for (double x : xs) emb.push_back({x});
  return LabeledBatch::from(std::move(emb), std::move(labels));
}

}  // namespace

TEST_CASE("bcl loss is zero with inactive hinges and has zero gradients") {
  // Coincident members per cluster, clusters far beyond gamma.
  const EmbeddingSpace space(SpaceKind::Euclidean, 2);
  std::vector<Vec> emb = {{0.0, 0.0}, {0.0, 0.0}, {10.0, 0.0}, {10.0, 0.0}};
  const auto batch = LabeledBatch::from(emb, {0, 0, 1, 1});
  const auto out = bcl::bcl_loss(batch, BallParams::with_radius_sq(0.25, 0.01, 4.0), space);
  CHECK(out.value == 0.0);
  CHECK(out.grad_raw_radius == 0.0);
  for (const Vec& g : out.grad_embeddings)
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("bcl loss hand value: two singletons on a line") {
  // f1 = 0, f2 = 0.2, b = 0.01, eps = 0, alpha = 4:
  // L_sim = 0, L_dis = (0.05 + 0.05) / 2 = 0.05.
  const auto batch = line_batch({0.0, 0.2}, {0, 1});
  const auto out = bcl::bcl_loss(batch, BallParams::with_radius_sq(0.01, 0.0, 4.0), kLine);
  CHECK(out.value == Catch::Approx(0.05).margin(1e-9));
}

TEST_CASE("bcl loss with K=1 equals alpha * L_sim") {
  std::mt19937_64 rng(7);
  const EmbeddingSpace space(SpaceKind::Euclidean, 3);
  const auto emb = oracle::random_points(6, 3, rng);
  const auto batch = LabeledBatch::from(emb, {0, 0, 0, 0, 0, 0});
  const double b = 0.05;
  const auto out = bcl::bcl_loss(batch, BallParams::with_radius_sq(b, 0.01, 4.0), space);

  const Vec mu = oracle::loop_mean(emb);
  double sim = 0.0;
  for (const Vec& f : emb) sim += std::max(0.0, oracle::loop_sq_dist(f, mu) - b);
  sim /= static_cast<double>(emb.size());
  CHECK(out.value == Catch::Approx(4.0 * sim).epsilon(1e-12));
}

TEST_CASE("bcl: singleton-only batches get no similar-term contribution") {
  std::mt19937_64 rng(8);
  const EmbeddingSpace space(SpaceKind::Euclidean, 4);
  const auto emb = oracle::random_points(5, 4, rng);
  const auto batch = LabeledBatch::from(emb, {0, 1, 2, 3, 4});
  // With L_sim identically zero the value cannot depend on alpha.
  const auto a0 = bcl::bcl_loss(batch, BallParams::with_radius_sq(1e-4, 0.01, 0.0), space);
  const auto a4 = bcl::bcl_loss(batch, BallParams::with_radius_sq(1e-4, 0.01, 4.0), space);
  CHECK(a0.value == a4.value);
}

TEST_CASE("bcl propagates degenerate centroid with the cluster label") {
  const EmbeddingSpace sphere(SpaceKind::Hypersphere, 2);
  std::vector<Vec> emb = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}};
  const auto batch = LabeledBatch::from(emb, {0, 0, 1});
  try {
    bcl::bcl_loss(batch, BallParams::with_radius_sq(0.1, 0.01, 4.0), sphere);
    FAIL("expected DegenerateCentroidError");
  } catch (const bcl::DegenerateCentroidError& e) {
    CHECK(e.cluster_label() == 0);
  }
}

TEST_CASE("contrastive loss hand values") {
  // Identical embeddings, same label: zero.
  {
    const auto batch = line_batch({1.0, 1.0}, {0, 0});
    const auto out =
        bcl::contrastive_loss(batch, bcl::softplus_inverse(5.0), kLine);
    CHECK(out.value == 0.0);
  }
  // f1 = 0, f2 = 3, different labels, m = 5: (5-3)^2/2 = 2.
  {
    const auto batch = line_batch({0.0, 3.0}, {0, 1});
    const auto out = bcl::contrastive_loss(batch, bcl::softplus_inverse(5.0), kLine);
    CHECK(out.value == Catch::Approx(2.0).margin(1e-9));
  }
}

TEST_CASE("triplet loss hand values") {
  // Anchor 0, positive 1, negative at 4: [1 - 16 + 1]+ = 0.
  {
    const auto batch = line_batch({0.0, 1.0, 4.0}, {0, 0, 1});
    CHECK(bcl::triplet_loss(batch, 1.0, kLine).value == Catch::Approx(0.0).margin(1e-9));
  }
  // Negative at 1: [1 - 1 + 1]+ = 1.
  {
    const auto batch = line_batch({0.0, 1.0, 1.0}, {0, 0, 1});
    CHECK(bcl::triplet_loss(batch, 1.0, kLine).value == Catch::Approx(1.0).margin(1e-9));
  }
  // All same label: no valid triplets.
  {
    const auto batch = line_batch({0.0, 1.0, 2.0}, {0, 0, 0});
    const auto out = bcl::triplet_loss(batch, 0.2, kLine);
    CHECK(out.value == 0.0);
    for (const Vec& g : out.grad_embeddings)
      for (double v : g) CHECK(v == 0.0);
  }
}

TEST_CASE("ldml loss hand values") {
  // d^2 equal to beta: p = 0.5, loss = ln 2 regardless of the label.
  {
    const double raw = bcl::softplus_inverse(1.0);
    const auto same = line_batch({0.0, 1.0}, {0, 0});
    const auto diff = line_batch({0.0, 1.0}, {0, 1});
    CHECK(bcl::ldml_loss(same, raw, kLine).value ==
          Catch::Approx(std::log(2.0)).margin(1e-9));
    CHECK(bcl::ldml_loss(diff, raw, kLine).value ==
          Catch::Approx(std::log(2.0)).margin(1e-9));
  }
  // Similar pair with beta - d^2 = 10: loss = ln(1 + e^-10).
  {
    const double raw = bcl::softplus_inverse(10.0);
    const auto batch = line_batch({0.0, 0.0}, {0, 0});
    CHECK(bcl::ldml_loss(batch, raw, kLine).value ==
          Catch::Approx(std::log1p(std::exp(-10.0))).margin(1e-9));
  }
}

TEST_CASE("prototypical loss hand values") {
  // K = 1: posterior 1, value 0.
  {
    const auto batch = line_batch({0.3, 0.9}, {0, 0});
    CHECK(bcl::prototypical_loss(batch, 0.0, 0.0, kLine).value == Catch::Approx(0.0).margin(1e-12));
  }
  // Two singletons at 0 and 1, b = gamma = 0: per-sample loss ln(1 + e^-1).
  {
    const auto batch = line_batch({0.0, 1.0}, {0, 1});
    const auto out = bcl::prototypical_loss(batch, 0.0, 0.0, kLine);
    CHECK(out.value == Catch::Approx(std::log1p(std::exp(-1.0))).margin(1e-9));
    CHECK(out.value == Catch::Approx(0.3133).margin(5e-5));
  }
}

TEST_CASE("cross-entropy loss hand values") {
  const EmbeddingSpace space(SpaceKind::Euclidean, 2);
  const int k = 3;
  bcl::LinearClassifier clf;
  clf.weight.assign(k, Vec(2, 0.0));
  clf.bias.assign(k, 0.0);
  const auto batch = LabeledBatch::from({{0.5, -0.25}, {1.0, 2.0}, {0.0, 0.0}}, {0, 1, 2});

  // All logits equal: per-sample loss ln K.
  CHECK(bcl::cross_entropy_loss(batch, clf, space).value ==
        Catch::Approx(std::log(3.0)).margin(1e-9));

  // +10 logit margin on the true class: loss = ln(1 + (K-1) e^-10).
  const auto b2 = LabeledBatch::from({{1.0}, {1.0}}, {0, 0});
  bcl::LinearClassifier c2;
  c2.weight.assign(k, Vec(1, 0.0));
  c2.bias.assign(k, 0.0);
  c2.weight[0][0] = 10.0;
  const auto out = bcl::cross_entropy_loss(b2, c2, kLine);
  CHECK(out.value == Catch::Approx(std::log1p(2.0 * std::exp(-10.0))).margin(1e-12));
}

TEST_CASE("finetune pair loss hand values") {
  using bcl::FinetunePair;
  // Positive already inside: zero contribution.
  {
    const FinetunePair p{{0.0}, {std::sqrt(0.1)}, true, 0.1};
    const auto out = bcl::finetune_pair_loss({p}, 0.4, 0.01);
    CHECK(out.value == Catch::Approx(0.0).margin(1e-12));
  }
  // Negative at d^2 = 0.3 with tau = 0.4, eps = 0.01: 0.11.
  {
    const FinetunePair p{{0.0}, {std::sqrt(0.3)}, false, 0.0};
    const auto out = bcl::finetune_pair_loss({p}, 0.4, 0.01);
    CHECK(out.value == Catch::Approx(0.11).margin(1e-9));
  }
  CHECK_THROWS_AS(bcl::finetune_pair_loss({bcl::FinetunePair{{0.0}, {1.0}, true, 0.0}}, 0.0, 0.01),
                  std::invalid_argument);
}

TEST_CASE("losses are non-negative and translation invariant in euclidean space") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 8, k = 3, d = 4;
    const EmbeddingSpace space(SpaceKind::Euclidean, d);
    auto [emb, labels] = gradcheck::random_batch(n, k, d, rng);
    const auto batch = LabeledBatch::from(emb, labels);

    std::vector<Vec> shifted = emb;
    const Vec offset = oracle::random_points(1, d, rng, 2.0)[0];
    for (Vec& f : shifted)
      for (int j = 0; j < d; ++j) f[j] += offset[j];
    const auto batch2 = LabeledBatch::from(shifted, labels);

    const BallParams params = BallParams::with_radius_sq(0.3, 0.01, 4.0);
    const double raw = bcl::softplus_inverse(0.7);
    struct Case {
      const char* name;
      double a, b;
    };
    const Case cases[] = {
        {"bcl", bcl::bcl_loss(batch, params, space).value,
         bcl::bcl_loss(batch2, params, space).value},
        {"contrastive", bcl::contrastive_loss(batch, raw, space).value,
         bcl::contrastive_loss(batch2, raw, space).value},
        {"triplet", bcl::triplet_loss(batch, 0.2, space).value,
         bcl::triplet_loss(batch2, 0.2, space).value},
        {"ldml", bcl::ldml_loss(batch, raw, space).value,
         bcl::ldml_loss(batch2, raw, space).value},
        {"proto", bcl::prototypical_loss(batch, 0.0, 0.0, space).value,
         bcl::prototypical_loss(batch2, 0.0, 0.0, space).value},
    };
    for (const Case& c : cases) {
      INFO(c.name);
      CHECK(c.a >= 0.0);
      CHECK(c.a == Catch::Approx(c.b).margin(1e-9));
    }
  }
}

TEST_CASE("bcl loss is zero iff batch satisfies both constraint families") {
  std::mt19937_64 rng(1234);
  const int d = 3;
  const EmbeddingSpace space(SpaceKind::Euclidean, d);
  const double b = 0.04, eps = 0.01;
  const double r = std::sqrt(b);
  const BallParams params = BallParams::with_radius_sq(b, eps, 4.0);

  // Constraint-satisfying construction: centers far apart, members close.
  std::vector<Vec> emb;
  std::vector<int> labels;
  std::normal_distribution<double> g(0.0, r * 0.1);
  for (int k = 0; k < 3; ++k) {
    Vec center(d, 0.0);
    center[0] = 10.0 * r * k;
    for (int m = 0; m < 4; ++m) {
      Vec f = center;
      for (double& v : f) v += g(rng);
      emb.push_back(f);
      labels.push_back(k);
    }
  }
  const auto batch = LabeledBatch::from(emb, labels);
  const auto out = bcl::bcl_loss(batch, params, space);
  CHECK(out.value == 0.0);

  // Violate one similar constraint: strictly positive loss.
  auto emb2 = emb;
  emb2[0][1] += 3.0 * r;
  const auto out2 = bcl::bcl_loss(LabeledBatch::from(emb2, labels), params, space);
  CHECK(out2.value > 0.0);
}

namespace {

// Wraps every loss into the shared finite-difference harness.
std::vector<std::pair<std::string, gradcheck::LossUnderTest>> all_losses(
    const EmbeddingSpace& space, double eps, int classifier_k) {
  using gradcheck::LossUnderTest;
  std::vector<std::pair<std::string, LossUnderTest>> out;

  LossUnderTest bclt;
  bclt.has_scalar = true;
  bclt.eval = [space, eps](const LabeledBatch& b, double scalar, const std::vector<double>&) {
    BallParams p;
    p.raw_radius = scalar;
    p.epsilon_margin = eps;
    p.alpha = 4.0;
    return bcl::bcl_loss(b, p, space);
  };
  out.emplace_back("bcl", bclt);

  LossUnderTest con;
  con.has_scalar = true;
  con.eval = [space](const LabeledBatch& b, double scalar, const std::vector<double>&) {
    return bcl::contrastive_loss(b, scalar, space);
  };
  out.emplace_back("contrastive", con);

  LossUnderTest tri;
  tri.eval = [space](const LabeledBatch& b, double, const std::vector<double>&) {
    return bcl::triplet_loss(b, 0.2, space);
  };
  out.emplace_back("triplet", tri);

  LossUnderTest ldml;
  ldml.has_scalar = true;
  ldml.eval = [space](const LabeledBatch& b, double scalar, const std::vector<double>&) {
    return bcl::ldml_loss(b, scalar, space);
  };
  out.emplace_back("ldml", ldml);

  LossUnderTest proto;
  proto.eval = [space](const LabeledBatch& b, double, const std::vector<double>&) {
    return bcl::prototypical_loss(b, 0.0, 0.0, space);
  };
  out.emplace_back("proto", proto);

  LossUnderTest ce;
  ce.aux_count = static_cast<std::size_t>(classifier_k) * space.dim + classifier_k;
  ce.eval = [space, classifier_k](const LabeledBatch& b, double,
                                  const std::vector<double>& aux) {
    bcl::LinearClassifier clf;
    clf.weight.assign(classifier_k, Vec(space.dim, 0.0));
    clf.bias.assign(classifier_k, 0.0);
    for (int v = 0; v < classifier_k; ++v) {
      for (int c = 0; c < space.dim; ++c)
        clf.weight[v][c] = aux[static_cast<std::size_t>(v) * space.dim + c];
      clf.bias[v] = aux[static_cast<std::size_t>(classifier_k) * space.dim + v];
    }
    return bcl::cross_entropy_loss(b, clf, space);
  };
  out.emplace_back("ce", ce);

  return out;
}

}  // namespace

TEST_CASE("loss gradients match finite differences on random batches") {
  std::mt19937_64 rng(2024);
  for (SpaceKind kind : {SpaceKind::Euclidean, SpaceKind::Hypersphere}) {
    for (int rep = 0; rep < 3; ++rep) {
      const int n = 9, k = 3, d = 4;
      const EmbeddingSpace space(kind, d);
      auto [emb, labels] = gradcheck::random_batch(n, k, d, rng);
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      const double scalar = u(rng);
      std::vector<double> aux(static_cast<std::size_t>(k) * d + k);
      for (double& v : aux) v = u(rng);

      for (auto& [name, lut] : all_losses(space, 0.01, k)) {
        const auto m = gradcheck::check(lut, emb, labels, scalar, aux);
        INFO(name << " rep " << rep << " kind " << static_cast<int>(kind) << " at " << m.where
                  << " analytic " << m.analytic << " numeric " << m.numeric);
        REQUIRE(m.ok);
      }
    }
  }
}

TEST_CASE("finetune pair loss gradient matches finite differences") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tau = 0.4, eps = 0.01;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<bcl::FinetunePair> pairs;
    for (int p = 0; p < 4; ++p) {
      bcl::FinetunePair fp;
      fp.a = oracle::random_points(1, 3, rng, 0.5)[0];
      fp.b = oracle::random_points(1, 3, rng, 0.5)[0];
      fp.is_positive = (p % 2 == 0);
      fp.orig_sq_dist = u(rng);
      pairs.push_back(fp);
    }
    const auto out = bcl::finetune_pair_loss(pairs, tau, eps);
    const double h = 1e-5;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      for (int side = 0; side < 2; ++side) {
        for (int j = 0; j < 3; ++j) {
          auto plus = pairs, minus = pairs;
          Vec& vp = side == 0 ? plus[p].a : plus[p].b;
          Vec& vm = side == 0 ? minus[p].a : minus[p].b;
          vp[j] += h;
          vm[j] -= h;
          const double numeric = (bcl::finetune_pair_loss(plus, tau, eps).value -
                                  bcl::finetune_pair_loss(minus, tau, eps).value) /
                                 (2.0 * h);
          const double analytic = out.grad_embeddings[2 * p + side][j];
          INFO("pair " << p << " side " << side << " coord " << j);
          REQUIRE(oracle::grad_close(analytic, numeric));
        }
      }
    }
    CHECK(out.grad_raw_radius == 0.0);  // b frozen during fine-tuning
  }
}
