#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

#include "bcl/hac.hpp"
#include "support/oracles.hpp"

using bcl::ClusterAssignment;
using bcl::Dendrogram;
using bcl::Vec;

namespace {

std::vector<Vec> line_points(std::initializer_list<double> xs) {
  std::vector<Vec> out;
  for (double x : xs) out.push_back({x});
  return out;
}

const std::vector<Vec> kHandSet = line_points({0.0, 0.1, 10.0, 10.1});

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("hac: single leaf has no merges") {
  const Dendrogram dg = bcl::hac_complete({{1.0, 2.0}});
  CHECK(dg.leaf_count == 1);
  CHECK(dg.merges.empty());
  CHECK_THROWS_AS(bcl::hac_complete({}), std::invalid_argument);
}

TEST_CASE("hac: hand trace on {0, 0.1, 10, 10.1}") {
  // The two tight pairs merge first, each at linkage 0.01 (their floating
  // point squared gaps differ in the last ulps, which fixes the order), the
  // far pair last at 102.01 = 10.1^2.
  const Dendrogram dg = bcl::hac_complete(kHandSet);
  REQUIRE(dg.merges.size() == 3);
  std::set<std::pair<int, int>> first_two = {{dg.merges[0].id_a, dg.merges[0].id_b},
                                             {dg.merges[1].id_a, dg.merges[1].id_b}};
  CHECK(first_two == std::set<std::pair<int, int>>{{0, 1}, {2, 3}});
  CHECK(dg.merges[0].linkage == Catch::Approx(0.01).margin(1e-12));
  CHECK(dg.merges[1].linkage == Catch::Approx(0.01).margin(1e-12));
  CHECK(dg.merges[2].linkage == Catch::Approx(102.01).margin(1e-9));
  CHECK(dg.merges[2].new_id == 6);
}

TEST_CASE("hac: exact linkage ties break on the smallest id pair") {
  // 0.5 and 8.5 are exactly representable, so both gaps square to exactly
  // 0.25 and the tie-break decides: {0,1} must merge before {2,3}.
  const Dendrogram dg = bcl::hac_complete(line_points({0.0, 0.5, 8.0, 8.5}));
  REQUIRE(dg.merges.size() == 3);
  CHECK(dg.merges[0].id_a == 0);
  CHECK(dg.merges[0].id_b == 1);
  CHECK(dg.merges[1].id_a == 2);
  CHECK(dg.merges[1].id_b == 3);
  CHECK(dg.merges[0].linkage == 0.25);
  CHECK(dg.merges[1].linkage == 0.25);
}

TEST_CASE("hac equals the O(N^3) re-scan oracle on random instances") {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 25; ++rep) {
    std::uniform_int_distribution<int> nu(2, 40);
    const int n = nu(rng);
    const auto pts = oracle::random_points(n, 3, rng);
    const Dendrogram got = bcl::hac_complete(pts);
    const Dendrogram want = oracle::brute_force_hac(pts);
    REQUIRE(got.merges.size() == want.merges.size());
    for (std::size_t s = 0; s < got.merges.size(); ++s) {
      REQUIRE(got.merges[s].id_a == want.merges[s].id_a);
      REQUIRE(got.merges[s].id_b == want.merges[s].id_b);
      REQUIRE(got.merges[s].linkage == Catch::Approx(want.merges[s].linkage).epsilon(1e-12));
    }
  }
}

TEST_CASE("hac linkage is non-decreasing") {
  std::mt19937_64 rng(67);
  const auto pts = oracle::random_points(50, 4, rng);
  const Dendrogram dg = bcl::hac_complete(pts);
  for (std::size_t s = 1; s < dg.merges.size(); ++s)
    REQUIRE(dg.merges[s].linkage >= dg.merges[s - 1].linkage);
}

TEST_CASE("cut_threshold endpoints and hand cut") {
  const Dendrogram dg = bcl::hac_complete(kHandSet);
  const auto singletons = bcl::cut_threshold(dg, 0.001);
  CHECK(singletons.num_clusters == 4);
  const auto one = bcl::cut_threshold(dg, 103.0);
  CHECK(one.num_clusters == 1);
  const auto two = bcl::cut_threshold(dg, 1.0);
  CHECK(two.num_clusters == 2);
  CHECK(same_partition(two.labels, {0, 0, 1, 1}));
  CHECK_THROWS_AS(bcl::cut_threshold(dg, -1.0), std::invalid_argument);
}

TEST_CASE("cut_threshold soundness: intra-cluster distances never exceed tau") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> tau_u(0.0, 30.0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto pts = oracle::random_points(40, 3, rng);
    const Dendrogram dg = bcl::hac_complete(pts);
    for (int t = 0; t < 20; ++t) {
      const double tau = tau_u(rng);
      const ClusterAssignment cut = bcl::cut_threshold(dg, tau);
      for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
          if (cut.labels[i] == cut.labels[j])
            REQUIRE(oracle::loop_sq_dist(pts[i], pts[j]) <= tau);
    }
  }
}

TEST_CASE("cut_threshold monotonicity: smaller tau refines larger tau") {
  std::mt19937_64 rng(73);
  const auto pts = oracle::random_points(45, 3, rng);
  const Dendrogram dg = bcl::hac_complete(pts);
  std::uniform_real_distribution<double> tau_u(0.0, 25.0);
  for (int rep = 0; rep < 25; ++rep) {
    double t1 = tau_u(rng), t2 = tau_u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto fine = bcl::cut_threshold(dg, t1);
    const auto coarse = bcl::cut_threshold(dg, t2);
    // Every fine cluster must sit inside one coarse cluster.
    std::map<int, int> owner;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      auto [it, fresh] = owner.emplace(fine.labels[i], coarse.labels[i]);
      REQUIRE(it->second == coarse.labels[i]);
    }
  }
}

TEST_CASE("cut_k endpoints and hand cut") {
  const Dendrogram dg = bcl::hac_complete(kHandSet);
  const auto identity = bcl::cut_k(dg, 4);
  CHECK(identity.num_clusters == 4);
  CHECK(identity.labels == std::vector<int>{0, 1, 2, 3});
  CHECK(bcl::cut_k(dg, 1).num_clusters == 1);
  const auto two = bcl::cut_k(dg, 2);
  CHECK(same_partition(two.labels, {0, 0, 1, 1}));
  CHECK_THROWS_AS(bcl::cut_k(dg, 0), std::invalid_argument);
  CHECK_THROWS_AS(bcl::cut_k(dg, 5), std::invalid_argument);
}

TEST_CASE("select_threshold_on_validation brackets the requested K") {
  CHECK(bcl::select_threshold_on_validation(kHandSet, 2) == Catch::Approx(51.01).margin(1e-9));

  const double below = bcl::select_threshold_on_validation(kHandSet, 4);
  CHECK(below < 0.01);
  CHECK(bcl::cut_threshold(bcl::hac_complete(kHandSet), below).num_clusters == 4);

  const double above = bcl::select_threshold_on_validation(kHandSet, 1);
  CHECK(above > 102.01);
  CHECK(bcl::cut_threshold(bcl::hac_complete(kHandSet), above).num_clusters == 1);

  // Returned tau reproduces K on random instances.
  std::mt19937_64 rng(79);
  for (int rep = 0; rep < 10; ++rep) {
    const auto pts = oracle::random_points(30, 3, rng);
    std::uniform_int_distribution<int> ku(1, 30);
    const int k = ku(rng);
    const double tau = bcl::select_threshold_on_validation(pts, k);
    CHECK(bcl::cut_threshold(bcl::hac_complete(pts), tau).num_clusters == k);
  }
}

TEST_CASE("dendrogram text export") {
  const Dendrogram dg = bcl::hac_complete(line_points({0.0, 3.0}));
  std::ostringstream os;
  bcl::write_dendrogram(dg, os);
  CHECK(os.str() == "0 1 9 2\n");
}

TEST_CASE("BCL_THREADS does not change the dendrogram") {
  std::mt19937_64 rng(83);
  const auto pts = oracle::random_points(60, 4, rng);
  const Dendrogram serial = bcl::hac_complete(pts);
  setenv("BCL_THREADS", "4", 1);
  const Dendrogram threaded = bcl::hac_complete(pts);
  unsetenv("BCL_THREADS");
  REQUIRE(serial.merges.size() == threaded.merges.size());
  for (std::size_t s = 0; s < serial.merges.size(); ++s) {
    CHECK(serial.merges[s].id_a == threaded.merges[s].id_a);
    CHECK(serial.merges[s].id_b == threaded.merges[s].id_b);
    CHECK(serial.merges[s].linkage == threaded.merges[s].linkage);
  }
}
