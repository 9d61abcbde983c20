#include "doctest.h"

#include <algorithm>
#include <random>

#include "mlsched/errors.hpp"
#include "mlsched/feature.hpp"
#include "mlsched/rng.hpp"

using namespace mlsched;

namespace {

CanonMap tpcc_like() {
  CanonMap m;
  m.add_alias("D_W_ID", "W_ID");
  m.add_alias("C_W_ID", "W_ID");
  m.add_canonical("D_ID");
  m.add_canonical("I_ID");
  m.add_canonical("NAME");
  return m;
}

std::vector<Reference> refs_of(const std::vector<std::string_view>& sql) {
  std::vector<Reference> out;
  for (auto s : sql) {
    auto p = parse_statement(s);
    out.insert(out.end(), p.refs.begin(), p.refs.end());
  }
  return out;
}

FeatureVector random_vector(Rng& rng, std::uint32_t k, double density) {
  std::vector<std::uint32_t> ones;
  for (std::uint32_t i = 0; i < k; ++i) {
    if (rng.bernoulli(density)) ones.push_back(i);
  }
  return FeatureVector::from_ones(k, ones);
}

}  // namespace

TEST_CASE("fnv1a64 published vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("alias attributes collapse to one feature") {
  const auto canon = tpcc_like();
  const auto refs = refs_of({"SELECT * FROM warehouse WHERE W_ID = 10",
                             "SELECT * FROM district WHERE D_W_ID = 10 AND D_ID = 4"});
  CHECK(extract_features(refs, canon) == std::vector<FeatureString>{"D_ID=4", "W_ID=10"});
}

TEST_CASE("read and write of the same reference yield one string") {
  const auto canon = tpcc_like();
  const auto refs = refs_of({"SELECT x FROM warehouse WHERE W_ID = 10",
                             "UPDATE warehouse SET x = x + 1 WHERE W_ID = 10"});
  CHECK(extract_features(refs, canon) == std::vector<FeatureString>{"W_ID=10"});
}

TEST_CASE("empty reference list has no features") {
  CHECK(extract_features({}, tpcc_like()).empty());
  CHECK(hash_features({}, 16).ones.empty());
  CHECK(hash_features({}, 16).size == 16);
}

TEST_CASE("unknown attribute is a configuration error naming it") {
  const auto refs = refs_of({"SELECT * FROM t WHERE ZZ_TOP = 1"});
  try {
    (void)extract_features(refs, tpcc_like());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ZZ_TOP") != std::string::npos);
  }
}

TEST_CASE("parser flattens conjunctions and disjunctions, skips ranges") {
  auto p = parse_statement(
      "SELECT * FROM stock WHERE (s.I_ID = 7 OR I_ID = 8) AND D_ID = 3 AND QTY > 10 AND 5 <= QTY");
  CHECK(p.refs.size() == 3);
  CHECK(p.ignored_ranges == 2);
  const auto f = extract_features(p.refs, [] {
    auto m = tpcc_like();
    m.add_canonical("QTY");
    return m;
  }());
  CHECK(f == std::vector<FeatureString>{"D_ID=3", "I_ID=7", "I_ID=8"});
}

TEST_CASE("insert values contribute features; literal normalization") {
  auto p = parse_statement("INSERT INTO orders (D_W_ID, D_ID, NAME) VALUES (010, 4.0, 'bob')");
  const auto f = extract_features(p.refs, tpcc_like());
  CHECK(f == std::vector<FeatureString>{"D_ID=4", "NAME='bob'", "W_ID=10"});
}

TEST_CASE("fixture line format") {
  const auto t = parse_fixture_line("42; NewOrder; D_W_ID=3, D_ID=1 ,NAME='x'");
  CHECK(t.id == 42);
  CHECK(t.type == "NewOrder");
  CHECK(extract_features(t.refs, tpcc_like()) ==
        std::vector<FeatureString>{"D_ID=1", "NAME='x'", "W_ID=3"});
  CHECK_THROWS_AS(parse_fixture_line("no separators"), ConfigError);
  CHECK_THROWS_AS(parse_fixture_line("x; T; A=1"), ConfigError);
}

TEST_CASE("hash_features is deterministic and order independent") {
  std::vector<FeatureString> f = {"W_ID=1", "I_ID=123", "U_ID=10", "D_ID=4"};
  const auto a = hash_features(f, 1024);
  std::reverse(f.begin(), f.end());
  CHECK(hash_features(f, 1024) == a);
  // Index is exactly hash mod k.
  for (const auto& s : f) CHECK(a.test(static_cast<std::uint32_t>(fnv1a64(s) % 1024)));
  CHECK(a.popcount() <= f.size());
}

TEST_CASE("illustrative three-feature vector of length 8") {
  const auto v = hash_features({"WAREHOUSE_ID=1", "ITEM_ID=123", "USER_ID=10"}, 8);
  CHECK(v.size == 8);
  CHECK(v.popcount() >= 1);
  CHECK(v.popcount() <= 3);
}

TEST_CASE("k_bits = 1 forces a collision") {
  const auto v = hash_features({"A=1", "B=2"}, 1);
  CHECK(v.to_bitstring() == "1");
  CHECK(fnv1a64("A=1") % 1 == 0);
  CHECK(fnv1a64("B=2") % 1 == 0);
}

TEST_CASE("worked example: pair and abort vectors bit for bit") {
  const auto v1 = FeatureVector::from_bitstring("00100101");
  const auto v2 = FeatureVector::from_bitstring("10100010");
  CHECK(abort_vector(v1, v2).to_bitstring() == "00100000");
  CHECK(pair_vector(v1, v2).to_bitstring() == "00100101" "10100010" "00100000");
}

TEST_CASE("trivial pair and abort identities") {
  const auto z = FeatureVector::from_bitstring("0000");
  const auto v = FeatureVector::from_bitstring("1011");
  CHECK(pair_vector(z, z).to_bitstring() == "000000000000");
  CHECK(pair_vector(v, v).to_bitstring() == "101110111011");
  CHECK(abort_vector(v, z).to_bitstring() == "0000");
  CHECK(abort_vector(v, v).to_bitstring() == "1011");
}

TEST_CASE("length mismatch is an invariant error") {
  const auto a = FeatureVector::from_bitstring("0101");
  const auto b = FeatureVector::from_bitstring("01");
  CHECK_THROWS_AS(pair_vector(a, b), InvariantError);
  CHECK_THROWS_AS(abort_vector(a, b), InvariantError);
  CHECK_THROWS_AS(FeatureVector::from_bitstring("012"), InvariantError);
  CHECK_THROWS_AS(FeatureVector::from_ones(4, {4}), InvariantError);
}

TEST_CASE("pair-vector properties over 10^4 random pairs") {
  Rng rng(20240601);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto k = static_cast<std::uint32_t>(rng.between(1, 96));
    const double density = rng.uniform();
    const auto a = random_vector(rng, k, density);
    const auto b = random_vector(rng, k, rng.uniform());
    const auto p = pair_vector(a, b);
    const auto q = pair_vector(b, a);
    const auto ab = abort_vector(a, b);
    const auto da = a.dense(), db = b.dense(), dp = p.dense(), dq = q.dense();
    REQUIRE(p.size == 3 * k);
    bool ok = true;
    for (std::uint32_t i = 0; i < k; ++i) {
      ok &= dp[i] == da[i];
      ok &= dp[k + i] == db[i];
      ok &= dp[2 * k + i] == (da[i] & db[i]);
      ok &= dq[2 * k + i] == dp[2 * k + i];
      ok &= ab.test(i) == static_cast<bool>(da[i] & db[i]);
    }
    REQUIRE(ok);
    REQUIRE(std::is_sorted(p.ones.begin(), p.ones.end()));
    REQUIRE(std::adjacent_find(p.ones.begin(), p.ones.end()) == p.ones.end());
    REQUIRE(p.popcount() == a.popcount() + b.popcount() + ab.popcount());
    REQUIRE(ab.popcount() <= std::min(a.popcount(), b.popcount()));
  }
}
