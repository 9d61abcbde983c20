#include "doctest.h"

#include <cmath>
#include <map>
#include <set>

#include "mlsched/errors.hpp"
#include "mlsched/workload.hpp"

using namespace mlsched;

namespace {

WorkloadConfig config(WorkloadKind kind, double rate = 10000.0, std::uint64_t seed = 1) {
  WorkloadConfig c;
  c.kind = kind;
  c.arrival_rate_tps = rate;
  c.rng_seed = seed;
  return resolve(c, 8);
}

std::int64_t feature_value(const FeatureString& f) {
  const auto eq = f.find('=');
  return std::stoll(f.substr(eq + 1));
}

}  // namespace

TEST_CASE("zipf: degenerate and extreme exponents") {
  Rng rng(1);
  const ZipfSampler one(1.2, 1);
  for (int i = 0; i < 100; ++i) CHECK(one(rng) == 1);
  const ZipfSampler steep(50.0, 10);
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += steep(rng) == 1;
  CHECK(ones > 99900);
  CHECK_THROWS(ZipfSampler(1.2, 0));
}

TEST_CASE("zipf: rank-1 frequency matches 1/H at s = 1.2, n = 1000") {
  double h = 0.0;
  for (int r = 1; r <= 1000; ++r) h += std::pow(r, -1.2);
  const ZipfSampler z(1.2, 1000);
  CHECK(z.probability(1) == doctest::Approx(1.0 / h).epsilon(1e-12));
  Rng rng(2024);
  const int n = 1000000;
  std::vector<int> counts(11, 0);
  for (int i = 0; i < n; ++i) {
    const auto r = z(rng);
    REQUIRE(r >= 1);
    REQUIRE(r <= 1000);
    if (r <= 10) ++counts[static_cast<std::size_t>(r)];
  }
  CHECK(std::abs(counts[1] / static_cast<double>(n) - 1.0 / h) < 0.01);
  // Chi-square over the ten head ranks plus the tail bucket (10 dof).
  double chi = 0.0, tail_expected = n;
  int tail = n;
  for (int r = 1; r <= 10; ++r) {
    const double e = n * z.probability(r);
    chi += (counts[static_cast<std::size_t>(r)] - e) * (counts[static_cast<std::size_t>(r)] - e) / e;
    tail_expected -= e;
    tail -= counts[static_cast<std::size_t>(r)];
  }
  chi += (tail - tail_expected) * (tail - tail_expected) / tail_expected;
  CHECK(chi < 29.6);  // 0.999 quantile of chi-square(10)
}

TEST_CASE("service time defaults and overrides") {
  CHECK(service_time(TxnType::get_subscriber_data) == 100);
  CHECK(service_time(TxnType::new_order) == 100);
  CHECK(service_time(TxnType::update_user_name) == 100);
  CHECK(service_time(TxnType::get_item_average_rating) == 1000);
  CHECK(service_time("GetReviewsByUser") == 1000);
  ServiceTimes t;
  t.set("NewOrder", 250);
  CHECK(service_time(TxnType::new_order, t) == 250);
  CHECK_THROWS_AS(service_time("Nope"), ConfigError);
  CHECK_THROWS_AS(t.set("NewOrder", 0), ConfigError);
}

TEST_CASE("configuration validation") {
  WorkloadConfig c;
  c.arrival_rate_tps = 0;
  CHECK_THROWS_AS(resolve(c, 8), ConfigError);
  c.arrival_rate_tps = 100;
  c.kind = WorkloadKind::tatp;
  c.zipf_s = 1.0;
  CHECK_THROWS_AS(resolve(c, 8), ConfigError);
  WorkloadConfig d;
  d.mix = {{TxnType::get_subscriber_data, 1.0}};
  CHECK_THROWS_AS(resolve(d, 8), ConfigError);  // TATP type in a TPC-C mix
  const auto t = config(WorkloadKind::tpcc);
  CHECK(t.scale == 8);  // warehouses default to the queue count
  CHECK(config(WorkloadKind::tatp).scale == kTatpDefaultSubscribers);
}

TEST_CASE("same seed, same stream; ids and arrival times increase") {
  for (auto kind : {WorkloadKind::tpcc, WorkloadKind::tatp, WorkloadKind::epinions}) {
    WorkloadGenerator a(config(kind, 5000, 7)), b(config(kind, 5000, 7)), c(config(kind, 5000, 8));
    bool differs = false;
    Micros last_time = -1;
    TxnId last_id = 0;
    for (int i = 0; i < 2000; ++i) {
      const auto x = a.next_arrival();
      const auto y = b.next_arrival();
      const auto z = c.next_arrival();
      REQUIRE(x.id == y.id);
      REQUIRE(x.type == y.type);
      REQUIRE(x.arrival_time == y.arrival_time);
      REQUIRE(x.read_set == y.read_set);
      REQUIRE(x.write_set == y.write_set);
      REQUIRE(extract_features(x, canon_map(kind)) == extract_features(y, canon_map(kind)));
      differs |= x.read_set != z.read_set;
      REQUIRE(x.id > last_id);
      REQUIRE(x.arrival_time >= last_time);
      last_id = x.id;
      last_time = x.arrival_time;
    }
    CHECK(differs);
  }
}

TEST_CASE("exponential inter-arrival gaps with mean 1/rate") {
  WorkloadGenerator g(config(WorkloadKind::tatp, 20000, 3));
  const int n = 200000;
  Micros last = 0;
  double sum = 0, sumsq = 0;
  Transaction t;
  for (int i = 0; i < n; ++i) {
    t = g.next_arrival();
    const double gap = static_cast<double>(t.arrival_time - last);
    sum += gap;
    sumsq += gap * gap;
    last = t.arrival_time;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  CHECK(mean == doctest::Approx(50.0).epsilon(0.02));
  CHECK(sd == doctest::Approx(50.0).epsilon(0.05));  // exponential: sd == mean
}

TEST_CASE("deterministic arrivals are evenly spaced") {
  auto c = config(WorkloadKind::tpcc, 1000);
  c.deterministic_arrivals = true;
  WorkloadGenerator g(c);
  for (int i = 1; i <= 50; ++i) CHECK(g.next_arrival().arrival_time == 1000 * i);
}

TEST_CASE("generated transactions are well formed") {
  for (auto kind : {WorkloadKind::tpcc, WorkloadKind::tatp, WorkloadKind::epinions}) {
    WorkloadGenerator g(config(kind, 10000, 11));
    const auto& canon = canon_map(kind);
    for (int i = 0; i < 20000; ++i) {
      const auto t = g.next_arrival();
      REQUIRE(workload_of(t.type) == kind);
      REQUIRE(!t.read_set.empty());
      REQUIRE(t.write_set.empty() == is_read_only(t.type));
      REQUIRE(std::is_sorted(t.read_set.begin(), t.read_set.end()));
      REQUIRE(std::adjacent_find(t.write_set.begin(), t.write_set.end()) == t.write_set.end());
      REQUIRE(t.service_time == service_time(t.type));
      const auto keys = touched_keys(t);
      for (const auto& w : t.write_set) REQUIRE(std::binary_search(keys.begin(), keys.end(), w));
      // Every feature value names a component of some touched row.
      std::set<std::int64_t> parts;
      for (const auto& k : keys) parts.insert(k.parts.begin(), k.parts.end());
      for (const auto& f : extract_features(t, canon)) {
        CAPTURE(f);
        REQUIRE(f.find('=') != std::string::npos);
        REQUIRE(parts.count(feature_value(f)) == 1);
      }
    }
  }
}

TEST_CASE("TPC-C mix and remote-warehouse rates") {
  WorkloadGenerator g(config(WorkloadKind::tpcc, 10000, 5));
  const int n = 100000;
  int new_orders = 0;
  for (int i = 0; i < n; ++i) {
    const auto t = g.next_arrival();
    new_orders += t.type == TxnType::new_order;
    if (t.type == TxnType::new_order) {
      std::size_t items = 0;
      for (const auto& k : t.write_set) items += k.table == Table::stock;
      REQUIRE(items >= 5);
      REQUIRE(items <= 15);
    }
  }
  CHECK(new_orders / double(n) == doctest::Approx(0.5).epsilon(0.02));
  const auto& s = g.stats();
  CHECK(std::abs(double(s.new_order_remote_items) / double(s.new_order_items) - 0.01) < 0.003);
  CHECK(std::abs(double(s.payment_remote) / double(s.payments) - 0.15) < 0.01);
}

TEST_CASE("alias attributes share the warehouse feature") {
  WorkloadGenerator g(config(WorkloadKind::tpcc, 10000, 5));
  for (int i = 0; i < 200; ++i) {
    const auto t = g.next_arrival();
    const auto f = extract_features(t, canon_map(WorkloadKind::tpcc));
    const std::string home = "W_ID=" + std::to_string(t.partition_key);
    REQUIRE(std::count(f.begin(), f.end(), home) == 1);
  }
}

TEST_CASE("Epinions type mix within one percentage point") {
  WorkloadGenerator g(config(WorkloadKind::epinions, 10000, 9));
  const int n = 200000;
  std::map<TxnType, int> counts;
  for (int i = 0; i < n; ++i) ++counts[g.next_arrival().type];
  for (const auto& [type, p] : type_mix(WorkloadKind::epinions)) {
    CAPTURE(to_string(type));
    CHECK(std::abs(counts[type] / double(n) - p) < 0.01);
    CHECK(p == doctest::Approx(is_read_only(type) ? 0.04 : 0.20));
  }
}

TEST_CASE("TATP subscriber skew follows the sampler") {
  const auto c = config(WorkloadKind::tatp, 10000, 13);
  WorkloadGenerator g(c);
  const ZipfSampler z(c.zipf_s, c.scale);
  const int n = 100000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += g.next_arrival().partition_key == 1;
  CHECK(std::abs(first / double(n) - z.probability(1)) < 0.01);
}

TEST_CASE("mix override is honored") {
  WorkloadConfig c;
  c.kind = WorkloadKind::tatp;
  c.mix = {{TxnType::update_location, 3.0}, {TxnType::get_access_data, 1.0}};
  WorkloadGenerator g(resolve(c, 8));
  int upd = 0;
  for (int i = 0; i < 40000; ++i) {
    const auto t = g.next_arrival();
    REQUIRE((t.type == TxnType::update_location || t.type == TxnType::get_access_data));
    upd += t.type == TxnType::update_location;
  }
  CHECK(upd / 40000.0 == doctest::Approx(0.75).epsilon(0.02));
}
