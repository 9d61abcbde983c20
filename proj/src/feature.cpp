#include "mlsched/feature.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <mutex>

#include "mlsched/errors.hpp"

namespace mlsched {

void CanonMap::add_canonical(std::string_view name) { canonical_.emplace(name); }

void CanonMap::add_alias(std::string_view alias, std::string_view canonical) {
  canonical_.emplace(canonical);
  aliases_[std::string(alias)] = std::string(canonical);
}

std::string_view CanonMap::canonical(std::string_view attr) const {
  std::string key(attr);
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  if (auto it = canonical_.find(key); it != canonical_.end()) return *it;
  throw ConfigError("unknown attribute '" + key + "' (not in canonical map)");
}

bool CanonMap::contains(std::string_view attr) const {
  std::string key(attr);
  return aliases_.count(key) != 0 || canonical_.count(key) != 0;
}

bool SparseBits::test(std::uint32_t i) const {
  return std::binary_search(ones.begin(), ones.end(), i);
}

std::vector<std::uint8_t> SparseBits::dense() const {
  std::vector<std::uint8_t> out(size, 0);
  for (auto i : ones) out[i] = 1;
  return out;
}

std::string SparseBits::to_bitstring() const {
  std::string s(size, '0');
  for (auto i : ones) s[i] = '1';
  return s;
}

FeatureVector FeatureVector::from_bitstring(std::string_view bits) {
  FeatureVector v;
  v.size = static_cast<std::uint32_t>(bits.size());
  for (std::uint32_t i = 0; i < v.size; ++i) {
    if (bits[i] == '1') {
      v.ones.push_back(i);
    } else if (bits[i] != '0') {
      throw InvariantError("bit string may only contain '0' and '1'");
    }
  }
  return v;
}

FeatureVector FeatureVector::from_ones(std::uint32_t size, std::vector<std::uint32_t> ones) {
  std::sort(ones.begin(), ones.end());
  ones.erase(std::unique(ones.begin(), ones.end()), ones.end());
  if (!ones.empty() && ones.back() >= size) {
    throw InvariantError("set bit index beyond vector length");
  }
  FeatureVector v;
  v.size = size;
  v.ones = std::move(ones);
  return v;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string render_feature(std::string_view canonical_attr,
                           const std::variant<std::int64_t, std::string_view>& value) {
  std::string out(canonical_attr);
  out.push_back('=');
  if (const auto* n = std::get_if<std::int64_t>(&value)) {
    out += std::to_string(*n);
  } else {
    out.push_back('\'');
    out += std::get<std::string_view>(value);
    out.push_back('\'');
  }
  return out;
}

std::vector<FeatureString> extract_features(const std::vector<Reference>& refs,
                                            const CanonMap& canon) {
  std::vector<FeatureString> out;
  out.reserve(refs.size());
  for (const auto& r : refs) {
    out.push_back(render_feature(canon.canonical(r.attr), r.value));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureVector hash_features(const std::vector<FeatureString>& features, std::uint32_t k_bits) {
  if (k_bits == 0) throw InvariantError("k_bits must be positive");
  std::vector<std::uint32_t> idx;
  idx.reserve(features.size());
  for (const auto& f : features) {
    idx.push_back(static_cast<std::uint32_t>(fnv1a64(f) % k_bits));
  }
  return FeatureVector::from_ones(k_bits, std::move(idx));
}

namespace {

void require_same_length(const SparseBits& a, const SparseBits& b) {
  if (a.size != b.size) {
    throw InvariantError("feature vector length mismatch: " + std::to_string(a.size) +
                         " vs " + std::to_string(b.size));
  }
}

std::vector<std::uint32_t> intersect(const std::vector<std::uint32_t>& a,
                                     const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

PairVector pair_vector(const SparseBits& v1, const SparseBits& v2) {
  require_same_length(v1, v2);
  const std::uint32_t k = v1.size;
  PairVector p;
  p.size = 3 * k;
  auto both = intersect(v1.ones, v2.ones);
  p.ones.reserve(v1.ones.size() + v2.ones.size() + both.size());
  p.ones.insert(p.ones.end(), v1.ones.begin(), v1.ones.end());
  for (auto i : v2.ones) p.ones.push_back(k + i);
  for (auto i : both) p.ones.push_back(2 * k + i);
  return p;
}

AbortVector abort_vector(const SparseBits& v1, const SparseBits& v2) {
  require_same_length(v1, v2);
  AbortVector a;
  a.size = v1.size;
  a.ones = intersect(v1.ones, v2.ones);
  return a;
}

// Fixture parsing ------------------------------------------------------------

std::string_view intern(std::string_view text) {
  static std::mutex mu;
  static std::deque<std::string> pool;
  static std::unordered_set<std::string_view> index;
  std::lock_guard lock(mu);
  if (auto it = index.find(text); it != index.end()) return *it;
  pool.emplace_back(text);
  std::string_view stored = pool.back();
  index.insert(stored);
  return stored;
}

namespace {

enum class TokKind { word, number, string, op, punct };

struct Token {
  TokKind kind;
  std::string text;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' ||
                              s[j] == '.')) {
        ++j;
      }
      out.push_back({TokKind::word, std::string(s.substr(i, j - i))});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      out.push_back({TokKind::number, std::string(s.substr(i, j - i))});
      i = j;
    } else if (c == '\'') {
      std::size_t j = s.find('\'', i + 1);
      if (j == std::string_view::npos) throw ConfigError("unterminated string literal");
      out.push_back({TokKind::string, std::string(s.substr(i + 1, j - i - 1))});
      i = j + 1;
    } else if (c == '<' || c == '>' || c == '=' || c == '!') {
      std::size_t j = i + 1;
      if (j < s.size() && (s[j] == '=' || s[j] == '>')) ++j;
      out.push_back({TokKind::op, std::string(s.substr(i, j - i))});
      i = j;
    } else {
      out.push_back({TokKind::punct, std::string(1, c)});
      ++i;
    }
  }
  return out;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Strips a `table.` qualifier from a column reference.
std::string column_name(const std::string& word) {
  auto dot = word.rfind('.');
  return upper(dot == std::string::npos ? word : word.substr(dot + 1));
}

std::variant<std::int64_t, std::string_view> literal(const Token& t) {
  if (t.kind == TokKind::string) return intern(t.text);
  // Integers are normalized to plain decimal; integral decimals (10.0) too.
  double d = std::stod(t.text);
  auto n = static_cast<std::int64_t>(d);
  if (static_cast<double>(n) == d) return n;
  return intern(t.text);
}

bool is_literal(const Token& t) { return t.kind == TokKind::number || t.kind == TokKind::string; }

}  // namespace

ParsedStatement parse_statement(std::string_view sql) {
  ParsedStatement out;
  auto toks = tokenize(sql);
  if (toks.empty()) return out;

  const std::string head = upper(toks[0].text);
  if (head == "INSERT") {
    // INSERT INTO t (c1, c2) VALUES (v1, v2)
    std::vector<std::string> cols;
    std::vector<Token> vals;
    std::size_t i = 0;
    while (i < toks.size() && toks[i].text != "(") ++i;
    for (++i; i < toks.size() && toks[i].text != ")"; ++i) {
      if (toks[i].kind == TokKind::word) cols.push_back(column_name(toks[i].text));
    }
    while (i < toks.size() && upper(toks[i].text) != "VALUES") ++i;
    while (i < toks.size() && toks[i].text != "(") ++i;
    for (++i; i < toks.size() && toks[i].text != ")"; ++i) {
      if (is_literal(toks[i])) vals.push_back(toks[i]);
    }
    if (cols.size() != vals.size()) throw ConfigError("INSERT column/value count mismatch");
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out.refs.push_back({intern(cols[c]), literal(vals[c])});
    }
    return out;
  }

  std::size_t i = 0;
  while (i < toks.size() && upper(toks[i].text) != "WHERE") ++i;
  for (++i; i + 2 < toks.size(); ++i) {
    const Token& a = toks[i];
    const Token& op = toks[i + 1];
    const Token& b = toks[i + 2];
    if (op.kind != TokKind::op) continue;
    const bool lhs_col = a.kind == TokKind::word;
    const bool rhs_col = b.kind == TokKind::word;
    if (op.text == "=") {
      if (lhs_col && is_literal(b)) {
        out.refs.push_back({intern(column_name(a.text)), literal(b)});
        i += 2;
      } else if (rhs_col && is_literal(a)) {
        out.refs.push_back({intern(column_name(b.text)), literal(a)});
        i += 2;
      }
      // column = column joins carry no literal and are not features
    } else if ((lhs_col && is_literal(b)) || (rhs_col && is_literal(a))) {
      ++out.ignored_ranges;
      i += 2;
    }
  }
  return out;
}

FixtureTxn parse_fixture_line(std::string_view line) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  auto p1 = line.find(';');
  auto p2 = p1 == std::string_view::npos ? p1 : line.find(';', p1 + 1);
  if (p2 == std::string_view::npos) {
    throw ConfigError("fixture line needs 'txn_id; type; refs': " + std::string(line));
  }
  FixtureTxn t;
  auto id_text = trim(line.substr(0, p1));
  auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), t.id);
  if (ec != std::errc() || ptr != id_text.data() + id_text.size()) {
    throw ConfigError("bad fixture txn id: " + std::string(id_text));
  }
  t.type = std::string(trim(line.substr(p1 + 1, p2 - p1 - 1)));
  auto rest = trim(line.substr(p2 + 1));
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("fixture reference must be ATTR=VALUE: " + std::string(item));
    }
    auto attr = trim(item.substr(0, eq));
    auto val = trim(item.substr(eq + 1));
    Reference r{intern(attr), std::int64_t{0}};
    if (val.size() >= 2 && val.front() == '\'' && val.back() == '\'') {
      r.value = intern(val.substr(1, val.size() - 2));
    } else {
      std::int64_t n = 0;
      auto [vp, vec] = std::from_chars(val.data(), val.data() + val.size(), n);
      if (vec != std::errc() || vp != val.data() + val.size()) {
        throw ConfigError("fixture value must be an integer or quoted literal: " + std::string(val));
      }
      r.value = n;
    }
    t.refs.push_back(r);
  }
  return t;
}

}  // namespace mlsched
