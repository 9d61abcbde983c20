#pragma once

// Open-queue transaction streams for three benchmark-shaped workloads.
// Each transaction carries equality references (the raw material for
// features), a simulated read/write key set at row granularity, and a
// service-time cost.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlsched/feature.hpp"
#include "mlsched/rng.hpp"

namespace mlsched {

using TxnId = std::uint64_t;
using Micros = std::int64_t;

enum class WorkloadKind : std::uint8_t { tpcc, tatp, epinions };

std::string_view to_string(WorkloadKind kind);
WorkloadKind parse_workload_kind(std::string_view text);

enum class TxnType : std::uint8_t {
  // TPC-C
  new_order,
  payment,
  // TATP
  get_subscriber_data,
  get_new_destination,
  get_access_data,
  update_subscriber_data,
  update_location,
  insert_call_forwarding,
  delete_call_forwarding,
  // Epinions
  get_review_item_by_id,
  get_average_rating_by_trusted_user,
  get_item_average_rating,
  get_item_reviews_by_trusted_user,
  get_reviews_by_user,
  update_item_title,
  update_review_rating,
  update_trust_rating,
  update_user_name,
};

inline constexpr std::size_t kTxnTypeCount = 18;

std::string_view to_string(TxnType type);
// Accepts the benchmark's CamelCase name (NewOrder, GetItemAverageRating).
std::optional<TxnType> parse_txn_type(std::string_view name);
WorkloadKind workload_of(TxnType type);
bool is_read_only(TxnType type);

enum class Table : std::uint8_t {
  warehouse,
  district,
  customer,
  stock,
  item,
  subscriber,
  access_info,
  special_facility,
  call_forwarding,
  useracct,
  epinions_item,
  review,
  review_by_item,
  review_by_user,
  trust,
  trust_by_source,
};

std::string_view to_string(Table table);

// A simulated row. `parts` is the canonical primary-key tuple; unused
// trailing components are zero.
struct RowKey {
  Table table{};
  std::array<std::int32_t, 3> parts{};

  std::string str() const;  // e.g. "district(3,7)"

  // 4-bit table id and three 20-bit components; parts must lie in [0, 2^20).
  std::uint64_t packed() const {
    return (static_cast<std::uint64_t>(table) << 60) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(parts[0]) & 0xfffff) << 40) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(parts[1]) & 0xfffff) << 20) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(parts[2]) & 0xfffff));
  }

  friend bool operator==(const RowKey&, const RowKey&) = default;
  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

struct RowKeyHash {
  std::size_t operator()(const RowKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.table);
    for (auto p : k.parts) h = mix_seed(h ^ static_cast<std::uint32_t>(p));
    return static_cast<std::size_t>(h);
  }
};

struct Transaction {
  TxnId id = 0;
  TxnType type{};
  std::vector<Reference> refs;
  std::vector<RowKey> read_set;   // sorted, unique
  std::vector<RowKey> write_set;  // sorted, unique
  Micros service_time = 0;
  Micros arrival_time = 0;
  std::uint32_t attempts = 0;
  // Workload's partitioning attribute (warehouse / subscriber / user id),
  // 0 when the type does not reference one. Used for distribution reports.
  std::int64_t partition_key = 0;
  // Filled by the engine at arrival.
  FeatureVector features;
  bool measured = false;
};

// All keys a transaction touches, sorted and unique.
std::vector<RowKey> touched_keys(const Transaction& txn);

enum class KeyDistribution : std::uint8_t { uniform, zipfian };

// Per-type execution cost in microseconds.
class ServiceTimes {
 public:
  ServiceTimes();
  Micros get(TxnType type) const { return micros_[static_cast<std::size_t>(type)]; }
  void set(TxnType type, Micros value);
  // Name-based override; throws ConfigError for unknown names.
  void set(std::string_view type_name, Micros value);

 private:
  std::array<Micros, kTxnTypeCount> micros_{};
};

Micros service_time(TxnType type, const ServiceTimes& table = ServiceTimes{});
Micros service_time(std::string_view type_name, const ServiceTimes& table = ServiceTimes{});

struct WorkloadConfig {
  WorkloadKind kind = WorkloadKind::tpcc;
  // tpcc: warehouses (0 = one per queue); tatp: subscribers;
  // epinions: multiplier on 2000 users / 1000 items.
  std::int64_t scale = 0;
  // tatp subscriber skew; epinions skew when a Zipfian key is selected.
  double zipf_s = 1.2;
  double arrival_rate_tps = 10000.0;
  std::uint64_t rng_seed = 1;
  bool deterministic_arrivals = false;
  KeyDistribution user_dist = KeyDistribution::zipfian;
  KeyDistribution item_dist = KeyDistribution::uniform;
  ServiceTimes service;
  // Type-mix override; empty selects type_mix(kind). Weights are normalized.
  std::vector<std::pair<TxnType, double>> mix;
};

// Effective defaults applied to a config for a given queue count
// (warehouses = queues, 100000 TATP subscribers, epinions scale 1).
WorkloadConfig resolve(WorkloadConfig config, std::size_t n_queues);

// Sampler over ranks [1..n] with P(r) proportional to r^-s.
class ZipfSampler {
 public:
  ZipfSampler(double s, std::int64_t n);
  std::int64_t operator()(Rng& rng) const;
  std::int64_t size() const { return static_cast<std::int64_t>(cdf_.size()); }
  double probability(std::int64_t rank) const;

 private:
  std::vector<double> cdf_;
};

std::int64_t zipf_sample(const ZipfSampler& sampler, Rng& rng);

// Canonical-attribute table for a workload's references.
const CanonMap& canon_map(WorkloadKind kind);

std::vector<FeatureString> extract_features(const Transaction& txn, const CanonMap& canon);

// Workload-specific type mix (probabilities sum to 1).
std::vector<std::pair<TxnType, double>> type_mix(WorkloadKind kind);

// Stateful, single-owner generator. Identical (config, seed) produce
// identical streams.
class WorkloadGenerator {
 public:
  explicit WorkloadGenerator(WorkloadConfig config);

  const WorkloadConfig& config() const { return config_; }

  // Draws the next arrival: advances the virtual clock by one inter-arrival
  // gap and builds a transaction.
  Transaction next_arrival();

  // Builds a transaction of the given type at the current clock without
  // advancing it. Exposed for tests.
  Transaction make(TxnType type);

  // Moves the arrival clock forward (used after a drain).
  void skip_to(Micros now);

  Micros clock() const { return static_cast<Micros>(clock_); }

  // Sampling statistics for tests.
  struct Stats {
    std::uint64_t new_order_items = 0;
    std::uint64_t new_order_remote_items = 0;
    std::uint64_t payments = 0;
    std::uint64_t payment_remote = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  TxnType draw_type();
  std::int64_t draw_user();
  std::int64_t draw_item();
  std::int64_t other_warehouse(std::int64_t home);
  void build_tpcc(Transaction& t);
  void build_tatp(Transaction& t);
  void build_epinions(Transaction& t);

  WorkloadConfig config_;
  Rng rng_;
  double clock_ = 0.0;
  TxnId next_id_ = 1;
  std::vector<std::pair<TxnType, double>> mix_cdf_;
  std::optional<ZipfSampler> subscriber_zipf_;
  std::optional<ZipfSampler> user_zipf_;
  std::optional<ZipfSampler> item_zipf_;
  Stats stats_;
};

// Sizes fixed by the workload definitions.
inline constexpr std::int64_t kTpccDistricts = 10;
inline constexpr std::int64_t kTpccCustomers = 3000;
inline constexpr std::int64_t kTpccItems = 100000;
inline constexpr std::int64_t kTatpDefaultSubscribers = 100000;
inline constexpr std::int64_t kEpinionsUsers = 2000;
inline constexpr std::int64_t kEpinionsItems = 1000;

}  // namespace mlsched
