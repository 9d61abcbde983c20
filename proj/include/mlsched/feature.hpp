#pragma once

// Transaction featurization: canonical ATTR=VALUE strings, feature hashing
// into fixed-length binary vectors, and the pairwise vectors consumed by the
// abort predictor and the abort clustering.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

namespace mlsched {

inline constexpr std::uint32_t kDefaultKBits = 1024;

using FeatureString = std::string;

// One equality reference `attr = value` taken from a WHERE clause or an
// INSERT value list. `attr` must outlive the reference: workload generators
// point it at string literals, the fixture parser at interned storage.
struct Reference {
  std::string_view attr;
  std::variant<std::int64_t, std::string_view> value;
};

// Maps alias attributes to their canonical attribute (D_W_ID -> W_ID).
// Canonical names map to themselves implicitly once registered.
class CanonMap {
 public:
  CanonMap() = default;

  void add_canonical(std::string_view name);
  void add_alias(std::string_view alias, std::string_view canonical);

  // Throws ConfigError naming the attribute when it is neither canonical
  // nor a registered alias.
  std::string_view canonical(std::string_view attr) const;

  bool contains(std::string_view attr) const;

 private:
  std::unordered_map<std::string, std::string> aliases_;
  std::unordered_set<std::string> canonical_;
};

// Sorted, duplicate-free set bits of a binary vector of length `size`.
struct SparseBits {
  std::uint32_t size = 0;
  std::vector<std::uint32_t> ones;

  bool test(std::uint32_t i) const;
  std::size_t popcount() const { return ones.size(); }
  std::vector<std::uint8_t> dense() const;

  // '0'/'1' string, index 0 leftmost.
  std::string to_bitstring() const;

  friend bool operator==(const SparseBits&, const SparseBits&) = default;
};

struct FeatureVector : SparseBits {
  static FeatureVector from_bitstring(std::string_view bits);
  static FeatureVector from_ones(std::uint32_t size, std::vector<std::uint32_t> ones);
};

// V1 | V2 | (V1 & V2), length 3k.
struct PairVector : SparseBits {
  std::uint32_t k_bits() const { return size / 3; }
};

// V1 & V2 of an abort pair, length k.
struct AbortVector : SparseBits {};

std::uint64_t fnv1a64(std::string_view text);

// Canonical, deduplicated, sorted feature strings of a reference list.
std::vector<FeatureString> extract_features(const std::vector<Reference>& refs,
                                            const CanonMap& canon);

std::string render_feature(std::string_view canonical_attr,
                           const std::variant<std::int64_t, std::string_view>& value);

FeatureVector hash_features(const std::vector<FeatureString>& features,
                            std::uint32_t k_bits = kDefaultKBits);

PairVector pair_vector(const SparseBits& v1, const SparseBits& v2);
AbortVector abort_vector(const SparseBits& v1, const SparseBits& v2);

// Fixture support ----------------------------------------------------------

// Equality atoms of a SQL-like statement. WHERE conjunctions and disjunctions
// are flattened; INSERT column/value lists contribute every pair. Range
// predicates are skipped and counted in `ignored_ranges`.
struct ParsedStatement {
  std::vector<Reference> refs;
  std::size_t ignored_ranges = 0;
};
ParsedStatement parse_statement(std::string_view sql);

// One fixture line: `txn_id; type; ATTR=VAL,ATTR=VAL,...`.
struct FixtureTxn {
  std::uint64_t id = 0;
  std::string type;
  std::vector<Reference> refs;
};
FixtureTxn parse_fixture_line(std::string_view line);

// Stable storage for attribute names and string literals read from text.
std::string_view intern(std::string_view text);

}  // namespace mlsched
