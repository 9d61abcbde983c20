#include "doctest.h"

#include <cmath>
#include <map>
#include <set>

#include "mlsched/errors.hpp"
#include "mlsched/scheduler.hpp"

using namespace mlsched;

namespace {

Transaction txn(TxnId id, std::string_view bits) {
  Transaction t;
  t.id = id;
  t.features = FeatureVector::from_bitstring(bits);
  return t;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Zero weights except the listed V3 entries.
std::shared_ptr<AbortModel> v3_model(std::uint32_t k, double bias,
                                     std::map<std::uint32_t, double> v3) {
  auto m = std::make_shared<AbortModel>(k);
  m->set_bias(bias);
  for (auto [bit, w] : v3) m->weights()[2 * k + bit] = w;
  return m;
}

std::shared_ptr<CentroidSet> centroids(std::vector<std::vector<double>> c) {
  auto cs = std::make_shared<CentroidSet>();
  cs->k_bits = static_cast<std::uint32_t>(c.front().size());
  cs->centroids = std::move(c);
  cs->counts.assign(cs->centroids.size(), 1);
  cs->refresh_norms();
  return cs;
}

}  // namespace

TEST_CASE("policy names parse and unknown names are rejected") {
  for (auto k : {PolicyKind::random, PolicyKind::search, PolicyKind::bfs,
                 PolicyKind::balanced_vector, PolicyKind::balanced_kmeans,
                 PolicyKind::unbalanced_kmeans}) {
    CHECK(parse_policy(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_policy("dfs"), ConfigError);
  CHECK_THROWS_AS(make_policy(PolicyKind::bfs, {}), DataError);
  CHECK_THROWS_AS(make_policy(PolicyKind::balanced_kmeans, {}), DataError);
  CHECK(make_policy(PolicyKind::random, {})->kind() == PolicyKind::random);
}

TEST_CASE("response window keeps the most recent samples") {
  ResponseWindow w(3);
  CHECK(w.size() == 0);
  CHECK(w.mean() == 0.0);
  for (Micros x : {1, 2, 3, 4}) w.push(x);
  CHECK(w.size() == 3);
  CHECK(static_cast<long long>(w.sum()) == 9);
  CHECK(w.mean() == doctest::Approx(3.0));
  CHECK(w.stddev() == doctest::Approx(std::sqrt(2.0 / 3.0)));
  w.clear();
  CHECK(w.size() == 0);
  CHECK(static_cast<long long>(w.sum()) == 0);
}

TEST_CASE("random: single queue and uniform spread over 19 queues") {
  Rng rng(5);
  RandomPolicy p;
  QueueSet one(1);
  for (int i = 0; i < 50; ++i) CHECK(p.assign(txn(1, "1"), one, rng).queue_index == 0);

  QueueSet qs(19);
  std::vector<int> hits(19, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++hits[p.assign(txn(1, "1"), qs, rng).queue_index];
  for (int h : hits) CHECK(std::abs(h / double(n) - 1.0 / 19) < 0.005);

  Rng a(9), b(9);
  RandomPolicy pa, pb;
  for (int i = 0; i < 100; ++i) {
    REQUIRE(pa.assign(txn(1, "1"), qs, a).queue_index == pb.assign(txn(1, "1"), qs, b).queue_index);
  }
}

TEST_CASE("search: empty queues fall back to random, otherwise argmax") {
  const auto m = v3_model(2, 0.0, {{0, logit(0.3)}, {1, logit(0.7)}});
  SearchPolicy p(m);
  Rng rng(1);
  QueueSet qs(3);
  CHECK(p.assign(txn(5, "11"), qs, rng).reason == Reason::random_fallback);
  CHECK(p.counters().fallbacks == 1);

  qs.enqueue(0, txn(1, "10"));
  qs.enqueue(1, txn(2, "01"));
  const auto d = p.assign(txn(5, "11"), qs, rng);
  CHECK(d.queue_index == 1);
  CHECK(d.reason == Reason::model_match);
  CHECK(d.score == doctest::Approx(0.7));
  CHECK(p.counters().model_evals == 2);
}

TEST_CASE("bfs: empty queues return the random start") {
  const auto m = v3_model(4, -5.0, {{0, 5.0 + logit(0.8)}});
  BfsPolicy p(m, 0.5);
  QueueSet qs(5);
  Rng rng(3), mirror(3);
  const auto d = p.assign(txn(10, "1000"), qs, rng);
  CHECK(d.queue_index == mirror.below(5));
  CHECK(d.reason == Reason::random_fallback);
  CHECK(p.counters().model_evals == 0);
}

TEST_CASE("bfs: conflicting head above theta is chosen") {
  const auto m = v3_model(4, -5.0, {{0, 5.0 + logit(0.8)}});
  BfsPolicy p(m, 0.5);
  QueueSet qs(5);
  for (std::size_t i = 0; i < 5; ++i) qs.enqueue(i, txn(i + 1, i == 3 ? "1000" : "0100"));
  Rng rng(3);
  const auto d = p.assign(txn(10, "1100"), qs, rng);
  CHECK(d.queue_index == 3);
  CHECK(d.reason == Reason::threshold_hit);
  CHECK(d.score == doctest::Approx(0.8));
  CHECK(p.counters().model_evals <= 5);
}

TEST_CASE("bfs: heads newer than the arrival are never evaluated") {
  const auto m = v3_model(4, -5.0, {{0, 20.0}});
  BfsPolicy p(m, 0.5);
  QueueSet qs(4);
  for (std::size_t i = 0; i < 4; ++i) qs.enqueue(i, txn(100 + i, "1000"));
  Rng rng(8), mirror(8);
  const auto d = p.assign(txn(10, "1000"), qs, rng);
  CHECK(d.queue_index == mirror.below(4));
  CHECK(d.reason == Reason::random_fallback);
  CHECK(p.counters().model_evals == 0);

  // Mixed: only the older head counts.
  QueueSet mixed(4);
  mixed.enqueue(0, txn(100, "1000"));
  mixed.enqueue(2, txn(3, "1000"));
  BfsPolicy q(m, 0.5);
  const auto e = q.assign(txn(10, "1000"), mixed, rng);
  CHECK(e.queue_index == 2);
  CHECK(q.counters().model_evals == 1);
}

TEST_CASE("bfs: no head above theta inspects every head once") {
  const auto m = v3_model(4, -5.0, {});
  BfsPolicy p(m, 0.5);
  QueueSet qs(6);
  for (std::size_t i = 0; i < 6; ++i) qs.enqueue(i, txn(i + 1, "1111"));
  Rng rng(2);
  const auto d = p.assign(txn(50, "1111"), qs, rng);
  CHECK(d.reason == Reason::random_fallback);
  CHECK(p.counters().model_evals == 6);
}

TEST_CASE("balanced vector: cold start picks the last queue") {
  const auto m = v3_model(4, 0.0, {{1, 2.0}});
  BalancedVectorPolicy<BlockingMode::reroute> p(m);
  QueueSet qs(4);
  Rng rng(1);
  const auto d = p.assign(txn(1, "0110"), qs, rng);
  CHECK(d.queue_index == 3);
  CHECK(qs[3].count == 1);
  CHECK(qs[3].r_sum == std::vector<std::uint32_t>{0, 1, 1, 0});
  CHECK(p.counters().model_evals == 4);
}

TEST_CASE("balanced vector: shared bit pulls the transaction to its queue") {
  const auto m = v3_model(4, -1.0, {{3, 4.0}});
  BalancedVectorPolicy<BlockingMode::reroute> p(m);
  QueueSet qs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    qs[i].r_sum.assign(4, 0);
    qs[i].count = 2;
  }
  qs[1].r_sum[3] = 2;
  qs[0].r_sum[0] = 2;
  Rng rng(1);
  const auto d = p.assign(txn(7, "0001"), qs, rng);
  CHECK(d.queue_index == 1);
  CHECK(d.score == doctest::Approx(sigmoid(3.0)));
}

TEST_CASE("balanced vector: R is the exact sum over enqueued vectors") {
  Rng data(17);
  const std::uint32_t k = 16;
  auto m = std::make_shared<AbortModel>(k);
  for (auto& w : m->weights()) w = data.uniform() * 2 - 1;
  BalancedVectorPolicy<BlockingMode::reroute> p(m);
  const std::size_t n = 5;
  QueueSet qs(n);
  std::vector<std::vector<std::uint32_t>> expect(n, std::vector<std::uint32_t>(k, 0));
  std::vector<std::uint64_t> counts(n, 0);
  Rng rng(1);
  for (TxnId id = 1; id <= 2000; ++id) {
    std::string bits(k, '0');
    for (auto& c : bits) c = data.bernoulli(0.2) ? '1' : '0';
    auto t = txn(id, bits);
    const auto d = p.assign(t, qs, rng);
    for (std::uint32_t j = 0; j < k; ++j) expect[d.queue_index][j] += bits[j] == '1';
    ++counts[d.queue_index];
    if (id % 97 == 0) qs[d.queue_index].rt.push(static_cast<Micros>(data.between(10, 5000)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(qs[i].r_sum == expect[i]);
    CHECK(qs[i].count == counts[i]);
  }
  CHECK(p.counters().model_evals == 2000 * n);
}

TEST_CASE("balanced vector scores agree with predict_centroid") {
  Rng data(23);
  const std::uint32_t k = 12;
  auto m = std::make_shared<AbortModel>(k);
  for (auto& w : m->weights()) w = data.uniform() * 2 - 1;
  m->set_bias(0.3);
  BalancedVectorPolicy<BlockingMode::reroute> p(m);
  QueueSet qs(4);
  Rng rng(1);
  for (TxnId id = 1; id <= 300; ++id) {
    std::string bits(k, '0');
    for (auto& c : bits) c = data.bernoulli(0.3) ? '1' : '0';
    const auto t = txn(id, bits);
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const auto r = qs[i].count ? qs[i].r_avg() : std::vector<double>(k, 0.0);
      const double v = m->predict_centroid(t.features, r);
      if (v >= best) best = v, arg = i;
    }
    const auto d = p.assign(t, qs, rng);
    REQUIRE(d.score == doctest::Approx(best).epsilon(1e-9));
    if (d.reason == Reason::model_match) REQUIRE(d.queue_index == arg);
  }
}

TEST_CASE("k-means: nearest centroid, tie to the lowest index, n distance evals") {
  KMeansPolicy<BlockingMode::reroute> p(centroids({{0.8, 0.2}, {0.2, 0.8}}), false);
  QueueSet qs(2);
  Rng rng(1);
  auto d = p.assign(txn(1, "10"), qs, rng);
  CHECK(d.queue_index == 0);
  CHECK(d.score == doctest::Approx(0.08));
  CHECK(p.assign(txn(2, "01"), qs, rng).queue_index == 1);
  CHECK(p.counters().distance_evals == 4);

  KMeansPolicy<BlockingMode::reroute> tie(centroids({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}), false);
  QueueSet three(3);
  CHECK(tie.assign(txn(3, "11"), three, rng).queue_index == 0);

  QueueSet wrong(3);
  CHECK_THROWS_AS(p.assign(txn(4, "10"), wrong, rng), InvariantError);
}

TEST_CASE("balanced k-means: slow queue is overridden to the fastest") {
  KMeansPolicy<BlockingMode::reroute> p(
      centroids({{1, 0}, {0, 1}, {0, 1}, {0, 1}, {0, 1}}), true);
  QueueSet qs(5);
  qs[0].rt.push(1000);
  for (std::size_t i = 1; i < 4; ++i) qs[i].rt.push(100);
  qs[4].rt.push(50);
  qs.enqueue(0, txn(9, "10"));
  Rng rng(1);
  const auto d = p.assign(txn(1, "10"), qs, rng);
  CHECK(d.queue_index == 4);
  CHECK(d.reason == Reason::balance_override);
  CHECK(p.counters().overrides == 1);
  CHECK(p.counters().distance_evals == 5);

  KMeansPolicy<BlockingMode::reroute> plain(
      centroids({{1, 0}, {0, 1}, {0, 1}, {0, 1}, {0, 1}}), false);
  CHECK(plain.assign(txn(1, "10"), qs, rng).queue_index == 0);
}

TEST_CASE("response-time override") {
  QueueSet same(3);
  for (std::size_t i = 0; i < 3; ++i) same[i].rt.push(500);
  for (std::size_t i = 0; i < 3; ++i) CHECK(response_time_override(i, response_stats(same)) == i);

  QueueSet qs(3);
  qs[0].rt.push(2000);
  qs[1].rt.push(500);
  qs[2].rt.push(300);
  for (std::size_t i = 0; i < 3; ++i) qs.enqueue(i, txn(10 + i, "1"));
  const auto s = response_stats(qs);
  CHECK(s.global_mean == doctest::Approx(2800.0 / 3));
  CHECK(s.global_std == doctest::Approx(std::sqrt(1726666.6667 / 3)).epsilon(1e-6));
  CHECK(response_time_override(0, s) == 2);
  CHECK(response_time_override(1, s) == 1);
  CHECK(response_time_override(2, s) == 2);

  // A drained queue is never over the limit, whatever its history.
  qs.pop(0);
  CHECK(response_stats(qs).queued == std::vector<std::size_t>{0, 1, 1});
  CHECK(response_time_override(0, response_stats(qs)) == 0);

  QueueSet one(1);
  one[0].rt.push(10);
  CHECK(response_time_override(0, response_stats(one)) == 0);

  // Queues without history take the global mean and are never over the limit.
  QueueSet cold(3);
  cold[1].rt.push(100);
  const auto c = response_stats(cold);
  CHECK(c.mean[0] == doctest::Approx(100.0));
  CHECK(response_time_override(0, c) == 0);
  CHECK_THROWS_AS(response_time_override(3, c), InvariantError);
}

TEST_CASE("strict blocking holds a slow queue until it drains") {
  KMeansPolicy<BlockingMode::strict> p(centroids({{1, 0}, {0, 1}, {0, 1}}), true);
  QueueSet qs(3);
  qs[0].rt.push(5000);
  qs[1].rt.push(100);
  qs[2].rt.push(200);
  qs.enqueue(0, txn(1, "10"));
  Rng rng(1);
  CHECK(p.assign(txn(2, "10"), qs, rng).queue_index == 1);
  CHECK(qs[0].blocked);
  // Response history recovers but the queue stays blocked while non-empty.
  qs[0].rt.clear();
  qs[0].rt.push(100);
  const auto d = p.assign(txn(3, "10"), qs, rng);
  CHECK(d.queue_index != 0);
  CHECK(d.reason == Reason::balance_override);
  qs.pop(0);
  CHECK_FALSE(qs[0].blocked);
  CHECK(p.assign(txn(4, "10"), qs, rng).queue_index == 0);
}

TEST_CASE("k-means recovers disjoint conflict groups") {
  const std::uint32_t k = 256;
  const std::size_t groups = 4;
  Rng rng(31);
  auto make = [&](std::size_t g, TxnId id) {
    std::vector<FeatureString> f{"W_ID=" + std::to_string(g)};
    f.push_back("I_ID=" + std::to_string(g * 1000 + rng.below(5)));
    Transaction t;
    t.id = id;
    t.features = hash_features(f, k);
    return t;
  };
  std::vector<AbortVector> pts;
  TxnId id = 0;
  for (int i = 0; i < 400; ++i) {
    const std::size_t g = rng.below(groups);
    const auto a = make(g, ++id);
    const auto b = make(g, ++id);
    pts.push_back(abort_vector(a.features, b.features));
  }
  auto cs = std::make_shared<CentroidSet>(kmeans_fit(pts, groups, rng));
  KMeansPolicy<BlockingMode::reroute> p(cs, false);
  QueueSet qs(groups);
  std::vector<std::map<std::size_t, int>> routed(groups);
  for (int i = 0; i < 4000; ++i) {
    const std::size_t g = rng.below(groups);
    ++routed[g][p.assign(make(g, ++id), qs, rng).queue_index];
  }
  std::set<std::size_t> homes;
  for (const auto& r : routed) {
    int total = 0, top = 0;
    std::size_t home = 0;
    for (auto [q, c] : r) {
      total += c;
      if (c > top) top = c, home = q;
    }
    CHECK(top >= 0.95 * total);
    homes.insert(home);
  }
  CHECK(homes.size() == groups);
}
