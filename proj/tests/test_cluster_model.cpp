#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "mlsched/cluster_model.hpp"
#include "mlsched/errors.hpp"
#include "mlsched/feature.hpp"
#include "mlsched/rng.hpp"

using namespace mlsched;

namespace {

AbortVector av(std::string_view s) {
  AbortVector v;
  static_cast<SparseBits&>(v) = FeatureVector::from_bitstring(s);
  return v;
}

AbortVector random_av(Rng& rng, std::uint32_t k, double density) {
  AbortVector v;
  v.size = k;
  for (std::uint32_t i = 0; i < k; ++i) {
    if (rng.bernoulli(density)) v.ones.push_back(i);
  }
  return v;
}

CentroidSet manual(std::vector<std::vector<double>> c) {
  CentroidSet cs;
  cs.k_bits = static_cast<std::uint32_t>(c.front().size());
  cs.centroids = std::move(c);
  cs.counts.assign(cs.centroids.size(), 1);
  cs.refresh_norms();
  return cs;
}

double sq_dense(const std::vector<std::uint8_t>& v, const std::vector<double>& c) {
  double s = 0;
  for (std::size_t i = 0; i < c.size(); ++i) s += (v[i] - c[i]) * (v[i] - c[i]);
  return s;
}

// Exhaustive minimum WCSS over all labelings into at most k groups.
double brute_force_wcss(const std::vector<AbortVector>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  const std::uint32_t d = pts.front().size;
  std::vector<std::vector<std::uint8_t>> dense;
  for (const auto& p : pts) dense.push_back(p.dense());
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> mean(d, 0.0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != c) continue;
        ++cnt;
        for (std::uint32_t j = 0; j < d; ++j) mean[j] += dense[i][j];
      }
      if (cnt == 0) continue;
      for (auto& m : mean) m /= static_cast<double>(cnt);
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] == c) total += sq_dense(dense[i], mean);
      }
    }
    best = std::min(best, total);
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

}  // namespace

TEST_CASE("euclidean distance reference values") {
  const std::vector<double> v{1, 0}, c1{0.8, 0.2};
  CHECK(euclidean_distance(v, v) == 0.0);
  CHECK(euclidean_distance(c1, v) == doctest::Approx(std::sqrt(0.08)));
  CHECK(euclidean_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(euclidean_distance(std::vector<double>{0, 0}, std::vector<double>{1}), InvariantError);
}

TEST_CASE("nearest centroid: two-cluster example and tie rule") {
  const auto cs = manual({{0.8, 0.2}, {0.2, 0.8}});
  CHECK(nearest_centroid(av("10"), cs) == 0);
  CHECK(nearest_centroid(av("01"), cs) == 1);
  CHECK(nearest_centroid(std::vector<double>{0.5, 0.5}, cs) == 0);
  const auto same = manual({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  CHECK(nearest_centroid(av("11"), same) == 0);
}

TEST_CASE("sparse squared distance equals the dense one") {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t k = 20;
    std::vector<std::vector<double>> cents(3, std::vector<double>(k));
    for (auto& c : cents) {
      for (auto& x : c) x = rng.uniform();
    }
    const auto cs = manual(cents);
    const auto v = random_av(rng, k, 0.4);
    for (std::size_t c = 0; c < 3; ++c) {
      REQUIRE(sq_distance(v, cs, c) == doctest::Approx(sq_dense(v.dense(), cents[c])).epsilon(1e-12));
    }
  }
}

TEST_CASE("k = 1 gives the componentwise mean") {
  Rng rng(2);
  const std::vector<AbortVector> pts = {av("1100"), av("1010"), av("1001"), av("0000")};
  const auto cs = kmeans_fit(pts, 1, rng);
  REQUIRE(cs.size() == 1);
  const std::vector<double> expect{0.75, 0.25, 0.25, 0.25};
  for (std::size_t i = 0; i < 4; ++i) CHECK(cs.centroids[0][i] == doctest::Approx(expect[i]));
  CHECK(cs.counts[0] == 4);
}

TEST_CASE("two separated groups recover one-hot centroids") {
  Rng rng(3);
  std::vector<AbortVector> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(av("1000"));
  for (int i = 0; i < 7; ++i) pts.push_back(av("0100"));
  const auto cs = kmeans_fit(pts, 2, rng);
  REQUIRE(cs.size() == 2);
  const std::size_t a = nearest_centroid(av("1000"), cs);
  const std::size_t b = nearest_centroid(av("0100"), cs);
  CHECK(a != b);
  CHECK(cs.centroids[a] == std::vector<double>{1, 0, 0, 0});
  CHECK(cs.centroids[b] == std::vector<double>{0, 1, 0, 0});
  CHECK(cs.wcss == doctest::Approx(0.0));
}

TEST_CASE("more clusters than distinct points keeps one centroid per queue") {
  Rng rng(4);
  const std::vector<AbortVector> pts = {av("10"), av("10"), av("01")};
  const auto cs = kmeans_fit(pts, 5, rng);
  CHECK(cs.size() == 5);
  for (const auto& c : cs.centroids) {
    for (auto x : c) CHECK((x >= 0.0 && x <= 1.0));
  }
  CHECK(cs.wcss == doctest::Approx(0.0));
}

TEST_CASE("empty input is a data error") {
  Rng rng(5);
  CHECK_THROWS_AS(kmeans_fit({}, 3, rng), DataError);
}

TEST_CASE("WCSS is monotone over 100 seeded fits") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    std::vector<AbortVector> pts;
    const auto n = rng.between(5, 120);
    for (std::int64_t i = 0; i < n; ++i) pts.push_back(random_av(rng, 32, 0.2));
    KMeansTrace trace;
    const auto cs = kmeans_fit(pts, static_cast<std::size_t>(rng.between(1, 8)), rng, {}, &trace);
    REQUIRE(!trace.wcss.empty());
    for (const auto& run : trace.wcss) {
      for (std::size_t i = 1; i < run.size(); ++i) REQUIRE(run[i] <= run[i - 1] + 1e-9);
    }
    // Converged centroids are a fixpoint of the assignment step.
    std::vector<std::size_t> assign;
    for (const auto& p : pts) assign.push_back(nearest_centroid(p, cs));
    REQUIRE(wcss(pts, cs, assign) == doctest::Approx(cs.wcss).epsilon(1e-9));
    for (const auto& c : cs.centroids) {
      for (auto x : c) REQUIRE((x >= 0.0 && x <= 1.0));
    }
  }
}

TEST_CASE("12 points, 3 clusters: WCSS equals the exhaustive optimum") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(1000 + seed);
    std::vector<AbortVector> pts;
    for (int i = 0; i < 12; ++i) pts.push_back(random_av(rng, 6, 0.4));
    const auto cs = kmeans_fit(pts, 3, rng);
    CAPTURE(seed);
    REQUIRE(cs.wcss == doctest::Approx(brute_force_wcss(pts, 3)).epsilon(1e-9));
  }
}

TEST_CASE("fit is deterministic for a seed; input order only relabels") {
  Rng data(77);
  std::vector<AbortVector> pts;
  for (int i = 0; i < 60; ++i) pts.push_back(random_av(data, 16, 0.25));
  Rng r1(9), r2(9);
  const auto a = kmeans_fit(pts, 4, r1);
  const auto b = kmeans_fit(pts, 4, r2);
  CHECK(a.centroids == b.centroids);
  auto rev = pts;
  std::reverse(rev.begin(), rev.end());
  Rng r3(9);
  const auto c = kmeans_fit(rev, 4, r3);
  CHECK(c.wcss == doctest::Approx(a.wcss).epsilon(1e-9));
  auto sorted_centroids = [](std::vector<std::vector<double>> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted_centroids(c.centroids) == sorted_centroids(a.centroids));
}

TEST_CASE("row-level conflicts on different rows land in different clusters") {
  // UPDATE inventory ... WHERE i_id = 100 AND w_id = 1  vs  i_id = 200 AND w_id = 2
  const std::uint32_t k = 1024;
  const auto t1 = hash_features({"I_ID=100", "W_ID=1"}, k);
  const auto t2 = hash_features({"I_ID=200", "W_ID=2"}, k);
  CHECK(abort_vector(t1, t2).popcount() == 0);
  std::vector<AbortVector> pts;
  for (int i = 0; i < 20; ++i) {
    pts.push_back(abort_vector(t1, t1));
    pts.push_back(abort_vector(t2, t2));
  }
  Rng rng(6);
  const auto cs = kmeans_fit(pts, 2, rng);
  CHECK(nearest_centroid(t1, cs) != nearest_centroid(t2, cs));
}

TEST_CASE("centroid serialization round trip") {
  Rng rng(8);
  std::vector<AbortVector> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(random_av(rng, 12, 0.3));
  const auto cs = kmeans_fit(pts, 3, rng);
  std::stringstream ss;
  save_centroids(ss, cs);
  const auto back = load_centroids(ss);
  CHECK(back.k_bits == cs.k_bits);
  CHECK(back.counts == cs.counts);
  REQUIRE(back.size() == cs.size());
  for (std::size_t c = 0; c < cs.size(); ++c) {
    for (std::size_t i = 0; i < cs.k_bits; ++i) CHECK(back.centroids[c][i] == cs.centroids[c][i]);
    CHECK(back.sq_norms[c] == doctest::Approx(cs.sq_norms[c]));
  }
  std::istringstream bad("mlsched-centroids v0\n");
  CHECK_THROWS_AS(load_centroids(bad), FormatError);
}
