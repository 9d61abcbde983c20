#include "mlsched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>

#include "mlsched/errors.hpp"

namespace mlsched {

namespace {

struct TypeInfo {
  TxnType type;
  std::string_view name;
  WorkloadKind kind;
  bool read_only;
  Micros default_service;
};

constexpr std::array<TypeInfo, kTxnTypeCount> kTypes{{
    {TxnType::new_order, "NewOrder", WorkloadKind::tpcc, false, 100},
    {TxnType::payment, "Payment", WorkloadKind::tpcc, false, 100},
    {TxnType::get_subscriber_data, "GetSubscriberData", WorkloadKind::tatp, true, 100},
    {TxnType::get_new_destination, "GetNewDestination", WorkloadKind::tatp, true, 100},
    {TxnType::get_access_data, "GetAccessData", WorkloadKind::tatp, true, 100},
    {TxnType::update_subscriber_data, "UpdateSubscriberData", WorkloadKind::tatp, false, 100},
    {TxnType::update_location, "UpdateLocation", WorkloadKind::tatp, false, 100},
    {TxnType::insert_call_forwarding, "InsertCallForwarding", WorkloadKind::tatp, false, 100},
    {TxnType::delete_call_forwarding, "DeleteCallForwarding", WorkloadKind::tatp, false, 100},
    {TxnType::get_review_item_by_id, "GetReviewItemById", WorkloadKind::epinions, true, 1000},
    {TxnType::get_average_rating_by_trusted_user, "GetAverageRatingByTrustedUser",
     WorkloadKind::epinions, true, 1000},
    {TxnType::get_item_average_rating, "GetItemAverageRating", WorkloadKind::epinions, true, 1000},
    {TxnType::get_item_reviews_by_trusted_user, "GetItemReviewsByTrustedUser",
     WorkloadKind::epinions, true, 1000},
    {TxnType::get_reviews_by_user, "GetReviewsByUser", WorkloadKind::epinions, true, 1000},
    {TxnType::update_item_title, "UpdateItemTitle", WorkloadKind::epinions, false, 100},
    {TxnType::update_review_rating, "UpdateReviewRating", WorkloadKind::epinions, false, 100},
    {TxnType::update_trust_rating, "UpdateTrustRating", WorkloadKind::epinions, false, 100},
    {TxnType::update_user_name, "UpdateUserName", WorkloadKind::epinions, false, 100},
}};

const TypeInfo& info(TxnType t) { return kTypes[static_cast<std::size_t>(t)]; }

constexpr std::array<std::string_view, 16> kTableNames{
    "warehouse",      "district",       "customer",       "stock",
    "item",           "subscriber",     "access_info",    "special_facility",
    "call_forwarding", "useracct",      "epinions_item",  "review",
    "review_by_item", "review_by_user", "trust",          "trust_by_source"};

RowKey key(Table t, std::int64_t a, std::int64_t b = 0, std::int64_t c = 0) {
  return RowKey{t, {static_cast<std::int32_t>(a), static_cast<std::int32_t>(b),
                    static_cast<std::int32_t>(c)}};
}

void normalize(std::vector<RowKey>& keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
}

}  // namespace

std::string_view to_string(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::tpcc: return "tpcc";
    case WorkloadKind::tatp: return "tatp";
    case WorkloadKind::epinions: return "epinions";
  }
  return "?";
}

WorkloadKind parse_workload_kind(std::string_view text) {
  if (text == "tpcc") return WorkloadKind::tpcc;
  if (text == "tatp") return WorkloadKind::tatp;
  if (text == "epinions") return WorkloadKind::epinions;
  throw ConfigError("unknown workload kind '" + std::string(text) + "'");
}

std::string_view to_string(TxnType type) { return info(type).name; }

std::optional<TxnType> parse_txn_type(std::string_view name) {
  for (const auto& t : kTypes) {
    if (t.name == name) return t.type;
  }
  return std::nullopt;
}

WorkloadKind workload_of(TxnType type) { return info(type).kind; }
bool is_read_only(TxnType type) { return info(type).read_only; }

std::string_view to_string(Table table) { return kTableNames[static_cast<std::size_t>(table)]; }

std::string RowKey::str() const {
  std::string s(to_string(table));
  s += '(';
  s += std::to_string(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == 0 && (i + 1 == parts.size() || parts[i + 1] == 0)) break;
    s += ',';
    s += std::to_string(parts[i]);
  }
  s += ')';
  return s;
}

std::vector<RowKey> touched_keys(const Transaction& txn) {
  std::vector<RowKey> all;
  all.reserve(txn.read_set.size() + txn.write_set.size());
  std::set_union(txn.read_set.begin(), txn.read_set.end(), txn.write_set.begin(),
                 txn.write_set.end(), std::back_inserter(all));
  return all;
}

// Service times -------------------------------------------------------------

ServiceTimes::ServiceTimes() {
  for (const auto& t : kTypes) micros_[static_cast<std::size_t>(t.type)] = t.default_service;
}

void ServiceTimes::set(TxnType type, Micros value) {
  if (value <= 0) throw ConfigError("service time must be positive");
  micros_[static_cast<std::size_t>(type)] = value;
}

void ServiceTimes::set(std::string_view type_name, Micros value) {
  auto t = parse_txn_type(type_name);
  if (!t) throw ConfigError("unknown transaction type '" + std::string(type_name) + "'");
  set(*t, value);
}

Micros service_time(TxnType type, const ServiceTimes& table) { return table.get(type); }

Micros service_time(std::string_view type_name, const ServiceTimes& table) {
  auto t = parse_txn_type(type_name);
  if (!t) throw ConfigError("unknown transaction type '" + std::string(type_name) + "'");
  return table.get(*t);
}

WorkloadConfig resolve(WorkloadConfig config, std::size_t n_queues) {
  if (!(config.arrival_rate_tps > 0)) throw ConfigError("arrival_rate_tps must be positive");
  double mix_total = 0.0;
  for (auto [t, p] : config.mix) {
    if (workload_of(t) != config.kind) {
      throw ConfigError("mix entry " + std::string(to_string(t)) + " does not belong to workload " +
                        std::string(to_string(config.kind)));
    }
    if (!(p >= 0)) throw ConfigError("mix weights must be non-negative");
    mix_total += p;
  }
  if (!config.mix.empty() && !(mix_total > 0)) throw ConfigError("mix weights sum to zero");
  switch (config.kind) {
    case WorkloadKind::tpcc:
      if (config.scale <= 0) config.scale = static_cast<std::int64_t>(std::max<std::size_t>(1, n_queues));
      break;
    case WorkloadKind::tatp:
      if (config.scale <= 0) config.scale = kTatpDefaultSubscribers;
      if (config.zipf_s <= 1.0) throw ConfigError("tatp zipf_s must exceed 1");
      break;
    case WorkloadKind::epinions:
      if (config.scale <= 0) config.scale = 1;
      if ((config.user_dist == KeyDistribution::zipfian ||
           config.item_dist == KeyDistribution::zipfian) &&
          config.zipf_s <= 1.0) {
        throw ConfigError("epinions zipf_s must exceed 1");
      }
      break;
  }
  constexpr std::int64_t kMaxKeyPart = (1 << 20) - 1;
  const std::int64_t largest = config.kind == WorkloadKind::tpcc   ? config.scale
                               : config.kind == WorkloadKind::tatp ? config.scale
                                                                   : kEpinionsUsers * config.scale;
  if (largest > kMaxKeyPart) throw ConfigError("workload scale too large for the row-key encoding");
  return config;
}

// Zipf -----------------------------------------------------------------------

ZipfSampler::ZipfSampler(double s, std::int64_t n) {
  if (n <= 0) throw std::domain_error("zipf domain size must be at least 1");
  if (!(s > 1.0)) throw std::domain_error("zipf exponent must exceed 1");
  cdf_.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (std::int64_t r = 1; r <= n; ++r) {
    total += std::pow(static_cast<double>(r), -s);
    cdf_[static_cast<std::size_t>(r - 1)] = total;
  }
  for (auto& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

std::int64_t ZipfSampler::operator()(Rng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<std::int64_t>(it - cdf_.begin()) + 1;
}

double ZipfSampler::probability(std::int64_t rank) const {
  if (rank < 1 || rank > size()) return 0.0;
  const auto i = static_cast<std::size_t>(rank - 1);
  return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1];
}

std::int64_t zipf_sample(const ZipfSampler& sampler, Rng& rng) { return sampler(rng); }

// Canonical attributes ------------------------------------------------------

namespace {

CanonMap build_canon(WorkloadKind kind) {
  CanonMap m;
  switch (kind) {
    case WorkloadKind::tpcc:
      for (auto a : {"D_W_ID", "C_W_ID", "O_W_ID", "S_W_ID", "H_W_ID", "H_C_W_ID"}) m.add_alias(a, "W_ID");
      for (auto a : {"C_D_ID", "O_D_ID", "H_D_ID", "H_C_D_ID"}) m.add_alias(a, "D_ID");
      for (auto a : {"O_C_ID", "H_C_ID"}) m.add_alias(a, "C_ID");
      for (auto a : {"S_I_ID", "OL_I_ID"}) m.add_alias(a, "I_ID");
      break;
    case WorkloadKind::tatp:
      for (auto a : {"SUB_NBR", "SF_S_ID", "AI_S_ID", "CF_S_ID"}) m.add_alias(a, "S_ID");
      m.add_alias("CF_SF_TYPE", "SF_TYPE");
      m.add_canonical("AI_TYPE");
      m.add_canonical("START_TIME");
      break;
    case WorkloadKind::epinions:
      for (auto a : {"R_U_ID", "SOURCE_U_ID", "TARGET_U_ID"}) m.add_alias(a, "U_ID");
      m.add_alias("R_I_ID", "I_ID");
      break;
  }
  return m;
}

}  // namespace

const CanonMap& canon_map(WorkloadKind kind) {
  static const CanonMap tpcc = build_canon(WorkloadKind::tpcc);
  static const CanonMap tatp = build_canon(WorkloadKind::tatp);
  static const CanonMap epinions = build_canon(WorkloadKind::epinions);
  switch (kind) {
    case WorkloadKind::tpcc: return tpcc;
    case WorkloadKind::tatp: return tatp;
    case WorkloadKind::epinions: return epinions;
  }
  return tpcc;
}

std::vector<FeatureString> extract_features(const Transaction& txn, const CanonMap& canon) {
  return extract_features(txn.refs, canon);
}

std::vector<std::pair<TxnType, double>> type_mix(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::tpcc:
      return {{TxnType::new_order, 0.5}, {TxnType::payment, 0.5}};
    case WorkloadKind::tatp:
      return {{TxnType::get_subscriber_data, 0.35},   {TxnType::get_new_destination, 0.10},
              {TxnType::get_access_data, 0.35},       {TxnType::update_subscriber_data, 0.02},
              {TxnType::update_location, 0.14},       {TxnType::insert_call_forwarding, 0.02},
              {TxnType::delete_call_forwarding, 0.02}};
    case WorkloadKind::epinions:
      return {{TxnType::get_review_item_by_id, 0.04},
              {TxnType::get_average_rating_by_trusted_user, 0.04},
              {TxnType::get_item_average_rating, 0.04},
              {TxnType::get_item_reviews_by_trusted_user, 0.04},
              {TxnType::get_reviews_by_user, 0.04},
              {TxnType::update_item_title, 0.20},
              {TxnType::update_review_rating, 0.20},
              {TxnType::update_trust_rating, 0.20},
              {TxnType::update_user_name, 0.20}};
  }
  return {};
}

// Generator -------------------------------------------------------------------

WorkloadGenerator::WorkloadGenerator(WorkloadConfig config)
    : config_(resolve(std::move(config), 1)), rng_(config_.rng_seed) {
  const auto mix = config_.mix.empty() ? type_mix(config_.kind) : config_.mix;
  double total = 0.0;
  for (auto [t, p] : mix) total += p;
  double acc = 0.0;
  for (auto [t, p] : mix) {
    acc += p / total;
    mix_cdf_.push_back({t, acc});
  }
  mix_cdf_.back().second = 1.0;
  if (config_.kind == WorkloadKind::tatp) {
    subscriber_zipf_.emplace(config_.zipf_s, config_.scale);
  } else if (config_.kind == WorkloadKind::epinions) {
    if (config_.user_dist == KeyDistribution::zipfian) {
      user_zipf_.emplace(config_.zipf_s, kEpinionsUsers * config_.scale);
    }
    if (config_.item_dist == KeyDistribution::zipfian) {
      item_zipf_.emplace(config_.zipf_s, kEpinionsItems * config_.scale);
    }
  }
}

TxnType WorkloadGenerator::draw_type() {
  const double u = rng_.uniform();
  for (const auto& [t, c] : mix_cdf_) {
    if (u < c) return t;
  }
  return mix_cdf_.back().first;
}

std::int64_t WorkloadGenerator::draw_user() {
  return user_zipf_ ? (*user_zipf_)(rng_) : rng_.between(1, kEpinionsUsers * config_.scale);
}

std::int64_t WorkloadGenerator::draw_item() {
  return item_zipf_ ? (*item_zipf_)(rng_) : rng_.between(1, kEpinionsItems * config_.scale);
}

std::int64_t WorkloadGenerator::other_warehouse(std::int64_t home) {
  if (config_.scale <= 1) return home;
  std::int64_t w = rng_.between(1, config_.scale - 1);
  return w >= home ? w + 1 : w;
}

Transaction WorkloadGenerator::next_arrival() {
  const double rate_per_us = config_.arrival_rate_tps / 1e6;
  clock_ += config_.deterministic_arrivals ? 1.0 / rate_per_us : rng_.exponential(rate_per_us);
  return make(draw_type());
}

void WorkloadGenerator::skip_to(Micros now) {
  if (static_cast<double>(now) > clock_) clock_ = static_cast<double>(now);
}

Transaction WorkloadGenerator::make(TxnType type) {
  if (workload_of(type) != config_.kind) {
    throw ConfigError("transaction type " + std::string(to_string(type)) +
                      " does not belong to workload " + std::string(to_string(config_.kind)));
  }
  Transaction t;
  t.id = next_id_++;
  t.type = type;
  t.arrival_time = static_cast<Micros>(std::floor(clock_));
  t.service_time = config_.service.get(type);
  switch (config_.kind) {
    case WorkloadKind::tpcc: build_tpcc(t); break;
    case WorkloadKind::tatp: build_tatp(t); break;
    case WorkloadKind::epinions: build_epinions(t); break;
  }
  normalize(t.read_set);
  normalize(t.write_set);
  return t;
}

void WorkloadGenerator::build_tpcc(Transaction& t) {
  const std::int64_t w = rng_.between(1, config_.scale);
  const std::int64_t d = rng_.between(1, kTpccDistricts);
  const std::int64_t c = rng_.between(1, kTpccCustomers);
  t.partition_key = w;
  auto& r = t.refs;
  if (t.type == TxnType::new_order) {
    // SELECT ... FROM WAREHOUSE WHERE W_ID = w
    r.push_back({"W_ID", w});
    t.read_set.push_back(key(Table::warehouse, w));
    // SELECT/UPDATE DISTRICT ... WHERE D_W_ID = w AND D_ID = d
    r.push_back({"D_W_ID", w});
    r.push_back({"D_ID", d});
    t.read_set.push_back(key(Table::district, w, d));
    t.write_set.push_back(key(Table::district, w, d));
    // SELECT ... FROM CUSTOMER WHERE C_W_ID = w AND C_D_ID = d AND C_ID = c
    r.push_back({"C_W_ID", w});
    r.push_back({"C_D_ID", d});
    r.push_back({"C_ID", c});
    t.read_set.push_back(key(Table::customer, w, d, c));
    // INSERT INTO ORDERS (O_W_ID, O_D_ID, O_C_ID) VALUES (...)
    r.push_back({"O_W_ID", w});
    r.push_back({"O_D_ID", d});
    r.push_back({"O_C_ID", c});
    const auto n_items = rng_.between(5, 15);
    std::vector<std::int64_t> items;
    while (static_cast<std::int64_t>(items.size()) < n_items) {
      auto i = rng_.between(1, kTpccItems);
      if (std::find(items.begin(), items.end(), i) == items.end()) items.push_back(i);
    }
    for (auto i : items) {
      std::int64_t supply = w;
      ++stats_.new_order_items;
      if (config_.scale > 1 && rng_.bernoulli(0.01)) {
        supply = other_warehouse(w);
        ++stats_.new_order_remote_items;
      }
      // SELECT ... FROM ITEM WHERE I_ID = i
      r.push_back({"I_ID", i});
      t.read_set.push_back(key(Table::item, i));
      // SELECT/UPDATE STOCK ... WHERE S_I_ID = i AND S_W_ID = supply
      r.push_back({"S_I_ID", i});
      r.push_back({"S_W_ID", supply});
      t.read_set.push_back(key(Table::stock, supply, i));
      t.write_set.push_back(key(Table::stock, supply, i));
    }
  } else {
    std::int64_t cw = w;
    std::int64_t cd = d;
    ++stats_.payments;
    if (config_.scale > 1 && rng_.bernoulli(0.15)) {
      cw = other_warehouse(w);
      cd = rng_.between(1, kTpccDistricts);
      ++stats_.payment_remote;
    }
    // UPDATE WAREHOUSE SET W_YTD = ... WHERE W_ID = w
    r.push_back({"W_ID", w});
    t.read_set.push_back(key(Table::warehouse, w));
    t.write_set.push_back(key(Table::warehouse, w));
    // UPDATE DISTRICT SET D_YTD = ... WHERE D_W_ID = w AND D_ID = d
    r.push_back({"D_W_ID", w});
    r.push_back({"D_ID", d});
    t.read_set.push_back(key(Table::district, w, d));
    t.write_set.push_back(key(Table::district, w, d));
    // UPDATE CUSTOMER ... WHERE C_W_ID = cw AND C_D_ID = cd AND C_ID = c
    r.push_back({"C_W_ID", cw});
    r.push_back({"C_D_ID", cd});
    r.push_back({"C_ID", c});
    t.read_set.push_back(key(Table::customer, cw, cd, c));
    t.write_set.push_back(key(Table::customer, cw, cd, c));
    // INSERT INTO HISTORY (H_C_ID, H_C_D_ID, H_C_W_ID, H_D_ID, H_W_ID) VALUES (...)
    r.push_back({"H_C_ID", c});
    r.push_back({"H_C_D_ID", cd});
    r.push_back({"H_C_W_ID", cw});
    r.push_back({"H_D_ID", d});
    r.push_back({"H_W_ID", w});
  }
}

void WorkloadGenerator::build_tatp(Transaction& t) {
  const std::int64_t s = (*subscriber_zipf_)(rng_);
  t.partition_key = s;
  auto& r = t.refs;
  switch (t.type) {
    case TxnType::get_subscriber_data:
      // SELECT * FROM SUBSCRIBER WHERE S_ID = s
      r.push_back({"S_ID", s});
      t.read_set.push_back(key(Table::subscriber, s));
      break;
    case TxnType::get_new_destination: {
      // SELECT cf.numberx FROM SPECIAL_FACILITY sf, CALL_FORWARDING cf
      // WHERE sf.s_id = s AND sf.sf_type = ft AND cf.s_id = sf.s_id ...
      const auto ft = rng_.between(1, 4);
      r.push_back({"SF_S_ID", s});
      r.push_back({"SF_TYPE", ft});
      t.read_set.push_back(key(Table::special_facility, s, ft));
      for (std::int64_t st : {0, 8, 16}) t.read_set.push_back(key(Table::call_forwarding, s, ft, st));
      break;
    }
    case TxnType::get_access_data: {
      // SELECT ... FROM ACCESS_INFO WHERE AI_S_ID = s AND AI_TYPE = at
      const auto at = rng_.between(1, 4);
      r.push_back({"AI_S_ID", s});
      r.push_back({"AI_TYPE", at});
      t.read_set.push_back(key(Table::access_info, s, at));
      break;
    }
    case TxnType::update_subscriber_data: {
      // UPDATE SUBSCRIBER SET bit_1 = ? WHERE S_ID = s
      // UPDATE SPECIAL_FACILITY SET data_a = ? WHERE SF_S_ID = s AND SF_TYPE = ft
      const auto ft = rng_.between(1, 4);
      r.push_back({"S_ID", s});
      r.push_back({"SF_S_ID", s});
      r.push_back({"SF_TYPE", ft});
      t.read_set.push_back(key(Table::subscriber, s));
      t.write_set.push_back(key(Table::subscriber, s));
      t.read_set.push_back(key(Table::special_facility, s, ft));
      t.write_set.push_back(key(Table::special_facility, s, ft));
      break;
    }
    case TxnType::update_location:
      // UPDATE SUBSCRIBER SET vlr_location = ? WHERE SUB_NBR = s
      r.push_back({"SUB_NBR", s});
      t.read_set.push_back(key(Table::subscriber, s));
      t.write_set.push_back(key(Table::subscriber, s));
      break;
    case TxnType::insert_call_forwarding: {
      // SELECT s_id FROM SUBSCRIBER WHERE SUB_NBR = s
      // SELECT sf_type FROM SPECIAL_FACILITY WHERE SF_S_ID = s
      // INSERT INTO CALL_FORWARDING (CF_S_ID, CF_SF_TYPE, START_TIME) VALUES (...)
      const auto ft = rng_.between(1, 4);
      const std::int64_t st = 8 * rng_.between(0, 2);
      r.push_back({"SUB_NBR", s});
      r.push_back({"SF_S_ID", s});
      r.push_back({"CF_S_ID", s});
      r.push_back({"CF_SF_TYPE", ft});
      r.push_back({"START_TIME", st});
      t.read_set.push_back(key(Table::subscriber, s));
      for (std::int64_t f = 1; f <= 4; ++f) t.read_set.push_back(key(Table::special_facility, s, f));
      t.write_set.push_back(key(Table::call_forwarding, s, ft, st));
      break;
    }
    case TxnType::delete_call_forwarding: {
      // SELECT s_id FROM SUBSCRIBER WHERE SUB_NBR = s
      // DELETE FROM CALL_FORWARDING WHERE CF_S_ID = s AND CF_SF_TYPE = ft AND START_TIME = st
      const auto ft = rng_.between(1, 4);
      const std::int64_t st = 8 * rng_.between(0, 2);
      r.push_back({"SUB_NBR", s});
      r.push_back({"CF_S_ID", s});
      r.push_back({"CF_SF_TYPE", ft});
      r.push_back({"START_TIME", st});
      t.read_set.push_back(key(Table::subscriber, s));
      t.read_set.push_back(key(Table::call_forwarding, s, ft, st));
      t.write_set.push_back(key(Table::call_forwarding, s, ft, st));
      break;
    }
    default:
      throw InvariantError("not a TATP transaction type");
  }
}

void WorkloadGenerator::build_epinions(Transaction& t) {
  auto& r = t.refs;
  // Aggregates over a user's or item's reviews are tracked through the
  // review_by_user / review_by_item index rows, which every rating update
  // also writes; this is what makes an aggregate conflict with an update.
  switch (t.type) {
    case TxnType::get_review_item_by_id: {
      // SELECT * FROM REVIEW r, ITEM i WHERE i.i_id = r.i_id AND r.i_id = i
      const auto i = draw_item();
      r.push_back({"R_I_ID", i});
      t.read_set.push_back(key(Table::epinions_item, i));
      t.read_set.push_back(key(Table::review_by_item, i));
      break;
    }
    case TxnType::get_average_rating_by_trusted_user: {
      // SELECT avg(rating) FROM REVIEW r, TRUST t
      // WHERE r.u_id = t.target_u_id AND r.i_id = i AND t.source_u_id = u
      const auto i = draw_item();
      const auto u = draw_user();
      t.partition_key = u;
      r.push_back({"R_I_ID", i});
      r.push_back({"SOURCE_U_ID", u});
      t.read_set.push_back(key(Table::review_by_item, i));
      t.read_set.push_back(key(Table::trust_by_source, u));
      break;
    }
    case TxnType::get_item_average_rating: {
      // SELECT avg(rating) FROM REVIEW r WHERE r.i_id = i
      const auto i = draw_item();
      r.push_back({"R_I_ID", i});
      t.read_set.push_back(key(Table::review_by_item, i));
      break;
    }
    case TxnType::get_item_reviews_by_trusted_user: {
      // SELECT * FROM REVIEW r WHERE r.i_id = i
      // SELECT * FROM TRUST t WHERE t.source_u_id = u
      const auto i = draw_item();
      const auto u = draw_user();
      t.partition_key = u;
      r.push_back({"R_I_ID", i});
      r.push_back({"SOURCE_U_ID", u});
      t.read_set.push_back(key(Table::review_by_item, i));
      t.read_set.push_back(key(Table::trust_by_source, u));
      break;
    }
    case TxnType::get_reviews_by_user: {
      // SELECT * FROM REVIEW r, USERACCT u WHERE u.u_id = r.u_id AND r.u_id = u
      const auto u = draw_user();
      t.partition_key = u;
      r.push_back({"R_U_ID", u});
      t.read_set.push_back(key(Table::useracct, u));
      t.read_set.push_back(key(Table::review_by_user, u));
      break;
    }
    case TxnType::update_item_title: {
      // UPDATE ITEM SET title = ? WHERE I_ID = i
      const auto i = draw_item();
      r.push_back({"I_ID", i});
      t.read_set.push_back(key(Table::epinions_item, i));
      t.write_set.push_back(key(Table::epinions_item, i));
      break;
    }
    case TxnType::update_review_rating: {
      // UPDATE REVIEW SET rating = ? WHERE I_ID = i AND U_ID = u
      const auto i = draw_item();
      const auto u = draw_user();
      t.partition_key = u;
      r.push_back({"I_ID", i});
      r.push_back({"U_ID", u});
      t.read_set.push_back(key(Table::review, i, u));
      t.write_set.push_back(key(Table::review, i, u));
      t.write_set.push_back(key(Table::review_by_item, i));
      t.write_set.push_back(key(Table::review_by_user, u));
      break;
    }
    case TxnType::update_trust_rating: {
      // UPDATE TRUST SET trust = ? WHERE SOURCE_U_ID = u1 AND TARGET_U_ID = u2
      const auto u1 = draw_user();
      auto u2 = draw_user();
      if (u2 == u1) u2 = u1 % (kEpinionsUsers * config_.scale) + 1;
      t.partition_key = u1;
      r.push_back({"SOURCE_U_ID", u1});
      r.push_back({"TARGET_U_ID", u2});
      t.read_set.push_back(key(Table::trust, u1, u2));
      t.write_set.push_back(key(Table::trust, u1, u2));
      t.write_set.push_back(key(Table::trust_by_source, u1));
      break;
    }
    case TxnType::update_user_name: {
      // UPDATE USERACCT SET name = ? WHERE U_ID = u
      const auto u = draw_user();
      t.partition_key = u;
      r.push_back({"U_ID", u});
      t.read_set.push_back(key(Table::useracct, u));
      t.write_set.push_back(key(Table::useracct, u));
      break;
    }
    default:
      throw InvariantError("not an Epinions transaction type");
  }
}

}  // namespace mlsched
