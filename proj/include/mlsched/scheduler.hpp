#pragma once

// Queue-assignment policies and the per-queue state they read and update.

#include <cstdint>
#include <deque>
#include <memory>
#include <string_view>
#include <vector>

#include "mlsched/abort_model.hpp"
#include "mlsched/cluster_model.hpp"
#include "mlsched/rng.hpp"
#include "mlsched/workload.hpp"

namespace mlsched {

enum class PolicyKind : std::uint8_t {
  random,
  search,
  bfs,
  balanced_vector,
  balanced_kmeans,
  unbalanced_kmeans,
};

std::string_view to_string(PolicyKind kind);
// Throws ConfigError("unknown policy '...'").
PolicyKind parse_policy(std::string_view text);
bool needs_abort_model(PolicyKind kind);
bool needs_centroids(PolicyKind kind);

enum class Reason : std::uint8_t { model_match, threshold_hit, balance_override, random_fallback };
std::string_view to_string(Reason reason);

struct SchedulerDecision {
  std::size_t queue_index = 0;
  Reason reason = Reason::random_fallback;
  double score = 0.0;  // probability, or squared distance for k-means
};

// Ring buffer of the most recent commit response times of one queue.
class ResponseWindow {
 public:
  explicit ResponseWindow(std::size_t capacity = 1000);
  void push(Micros rt);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return buf_.size(); }
  __int128 sum() const { return sum_; }
  __int128 sum_sq() const { return sum_sq_; }
  double mean() const;
  double stddev() const;
  void clear();

 private:
  std::vector<Micros> buf_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  __int128 sum_ = 0;
  __int128 sum_sq_ = 0;
};

struct QueueState {
  std::size_t index = 0;
  std::deque<Transaction> fifo;
  // Balanced Vector bookkeeping: R as integer bit counts, Count enqueues.
  std::vector<std::uint32_t> r_sum;
  std::uint64_t count = 0;
  ResponseWindow rt;
  // Strict-blocking mode: no new work until the fifo drains.
  bool blocked = false;
  std::uint64_t enqueued = 0;

  QueueState(std::size_t i, std::size_t rt_window) : index(i), rt(rt_window) {}

  // R_avg = R / Count (zero vector while Count is 0).
  std::vector<double> r_avg() const;
};

class QueueSet {
 public:
  QueueSet(std::size_t n, std::size_t rt_window = 1000);

  std::size_t size() const { return queues_.size(); }
  QueueState& operator[](std::size_t i) { return queues_[i]; }
  const QueueState& operator[](std::size_t i) const { return queues_[i]; }

  void enqueue(std::size_t i, Transaction txn);
  // Removes and returns the head; clears `blocked` once the queue empties.
  Transaction pop(std::size_t i);
  std::size_t total_queued() const { return total_; }

 private:
  std::vector<QueueState> queues_;
  std::size_t total_ = 0;
};

struct ResponseStats {
  std::vector<double> mean;  // per queue; global mean when history is empty
  std::vector<std::size_t> samples;
  std::vector<std::size_t> queued;  // fifo lengths; a queue with an empty fifo is never over the limit
  double global_mean = 0.0;
  double global_std = 0.0;
};

// Pooled over every queue's window.
ResponseStats response_stats(const QueueSet& queues);

// Returns `chosen`, or the queue with the lowest mean response time when
// chosen's mean exceeds the global mean by more than one global std and
// chosen still has queued work.
std::size_t response_time_override(std::size_t chosen, const ResponseStats& stats);

enum class BlockingMode : std::uint8_t { reroute, strict };

#ifdef MLSCHED_STRICT_BLOCKING
inline constexpr BlockingMode kBlockingMode = BlockingMode::strict;
#else
inline constexpr BlockingMode kBlockingMode = BlockingMode::reroute;
#endif

struct PolicyCounters {
  std::uint64_t decisions = 0;
  std::uint64_t model_evals = 0;
  std::uint64_t distance_evals = 0;
  std::uint64_t overrides = 0;
  std::uint64_t fallbacks = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyKind kind() const = 0;
  // Chooses a queue for `txn`. Does not enqueue; policies that keep
  // per-queue bookkeeping update it for the returned queue.
  virtual SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) = 0;
  const PolicyCounters& counters() const { return counters_; }

 protected:
  PolicyCounters counters_;
};

class RandomPolicy final : public Policy {
 public:
  PolicyKind kind() const override { return PolicyKind::random; }
  SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) override;
};

// Exhaustive argmax of M(T_new, T_i) over every queued transaction.
class SearchPolicy final : public Policy {
 public:
  explicit SearchPolicy(std::shared_ptr<const AbortModel> model) : model_(std::move(model)) {}
  PolicyKind kind() const override { return PolicyKind::search; }
  SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) override;

 private:
  std::shared_ptr<const AbortModel> model_;
};

// Round-robin head inspection from a random start, stopping at the first
// head whose abort probability exceeds theta.
class BfsPolicy final : public Policy {
 public:
  BfsPolicy(std::shared_ptr<const AbortModel> model, double theta = 0.5)
      : model_(std::move(model)), theta_(theta) {}
  PolicyKind kind() const override { return PolicyKind::bfs; }
  SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) override;

 private:
  std::shared_ptr<const AbortModel> model_;
  double theta_;
};

template <BlockingMode Mode>
std::size_t apply_balance(std::size_t chosen, QueueSet& queues, PolicyCounters& counters,
                          bool& overridden);

// Argmax of M'(V_new, R_avg[i]) with the response-time guard.
template <BlockingMode Mode = kBlockingMode>
class BalancedVectorPolicy final : public Policy {
 public:
  explicit BalancedVectorPolicy(std::shared_ptr<const AbortModel> model);
  PolicyKind kind() const override { return PolicyKind::balanced_vector; }
  SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) override;

 private:
  std::shared_ptr<const AbortModel> model_;
  std::vector<double> w2_dot_r_;  // per queue: sum_j w2[j] * R[j]
};

// Nearest centroid, optionally followed by the response-time guard.
template <BlockingMode Mode = kBlockingMode>
class KMeansPolicy final : public Policy {
 public:
  KMeansPolicy(std::shared_ptr<const CentroidSet> centroids, bool balanced);
  PolicyKind kind() const override {
    return balanced_ ? PolicyKind::balanced_kmeans : PolicyKind::unbalanced_kmeans;
  }
  SchedulerDecision assign(const Transaction& txn, QueueSet& queues, Rng& rng) override;

 private:
  std::shared_ptr<const CentroidSet> centroids_;
  bool balanced_;
};

extern template class BalancedVectorPolicy<BlockingMode::reroute>;
extern template class BalancedVectorPolicy<BlockingMode::strict>;
extern template class KMeansPolicy<BlockingMode::reroute>;
extern template class KMeansPolicy<BlockingMode::strict>;

struct PolicyInputs {
  std::shared_ptr<const AbortModel> model;
  std::shared_ptr<const CentroidSet> centroids;
  double theta = 0.5;
};

// Throws DataError when a required model is missing.
std::unique_ptr<Policy> make_policy(PolicyKind kind, const PolicyInputs& inputs);

}  // namespace mlsched
