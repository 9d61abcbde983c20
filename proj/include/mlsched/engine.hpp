#pragma once

// Deterministic discrete-event simulation of a multi-queue main-memory
// database: one worker per FIFO queue, optimistic validation at commit,
// immediate same-queue retry, and optional execution logging.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlsched/abort_model.hpp"
#include "mlsched/scheduler.hpp"
#include "mlsched/workload.hpp"

namespace mlsched {

struct EngineConfig {
  std::size_t n_queues = 8;
  std::uint32_t k_bits = kDefaultKBits;
  Micros idle_poll_us = 10;
  // Queued transactions beyond this mark the run saturated and stop arrivals.
  std::size_t backlog_cap = 200000;
  std::size_t rt_window = 1000;
  std::uint64_t seed = 1;
};

struct PhaseOptions {
  Micros duration = 1'000'000;
  bool measure = true;
  bool log = false;
};

struct PhaseMetrics {
  Micros start = 0;
  Micros arrivals_end = 0;  // when arrivals stopped (earlier if saturated)
  Micros end = 0;           // drain completion
  bool saturated = false;

  std::uint64_t arrivals = 0;
  std::uint64_t committed = 0;
  std::uint64_t attempts = 0;
  std::uint64_t aborts = 0;
  std::uint64_t commit_pairs_skipped = 0;

  std::vector<Micros> response_times;  // measured commits, commit order
  std::vector<Micros> idle_us;         // per queue over [start, end]
  std::vector<Micros> busy_us;         // per queue over [start, end]
  std::vector<std::uint64_t> assigned; // per queue
  // partition key -> per-queue count of measured assignments.
  std::map<std::int64_t, std::vector<std::uint64_t>> key_histogram;
  std::array<std::uint64_t, 4> reasons{};  // indexed by Reason

  double duration_s() const { return static_cast<double>(end - start) / 1e6; }
  double throughput_tps() const;
  double abort_rate() const;
  double mean_response_s() const;
  double std_response_s() const;
  double p95_response_s() const;
  double idle_std_s() const;
};

// Receives `time, event, txn_id, queue, detail` lines.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void event(Micros time, std::string_view event, TxnId id, std::size_t queue,
                     std::string_view detail) = 0;
};

using DecisionSink = std::function<void(const Transaction&, PolicyKind, const SchedulerDecision&)>;

struct ExecutionRecord {
  TxnId txn_id = 0;
  std::size_t queue = 0;
  Micros start_exec = 0;
  Micros end_exec = 0;
  bool committed = false;
  TxnId conflicting_txn = 0;
};

class Engine {
 public:
  Engine(EngineConfig config, WorkloadConfig workload);

  const EngineConfig& config() const { return config_; }
  Micros now() const { return now_; }
  const QueueSet& queues() const { return queues_; }
  WorkloadGenerator& generator() { return generator_; }

  // Generates arrivals for `duration`, then drains every queue.
  PhaseMetrics run_phase(Policy& policy, const PhaseOptions& options);

  // Runs pre-built transactions (arrival_time and id already set, ascending)
  // and drains. Transactions whose features are empty are hashed from refs.
  PhaseMetrics run_script(std::vector<Transaction> txns, Policy& policy, bool log = true);

  const std::vector<LogRecord>& log() const { return log_; }
  std::vector<LogRecord> take_log();
  std::uint64_t commit_pairs_skipped() const { return skipped_total_; }

  void set_trace(TraceSink* sink) { trace_ = sink; }
  void set_decision_sink(DecisionSink sink) { decisions_ = std::move(sink); }
  // Every finished attempt, for tests; off by default.
  void set_record_executions(bool on) { record_exec_ = on; }
  const std::vector<ExecutionRecord>& executions() const { return executions_; }

 private:
  enum class WorkerState : std::uint8_t { idle, waking, busy };
  struct Worker {
    WorkerState state = WorkerState::idle;
    Micros idle_since = 0;
    Micros start_exec = 0;
    std::uint64_t start_seq = 0;
    std::optional<Transaction> running;
  };
  struct Event {
    Micros time;
    std::uint8_t priority;  // 0 completion, 1 worker start
    std::uint64_t seq;
    std::size_t worker;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (priority != o.priority) return priority > o.priority;
      return seq > o.seq;
    }
  };
  struct LastCommit {
    std::uint64_t seq;
    TxnId id;
  };
  struct RecentCommit {
    std::uint64_t seq;
    TxnId id;
    Micros time;
    FeatureVector features;
  };

  template <typename NextArrival>
  PhaseMetrics run_loop(Policy& policy, const PhaseOptions& options, Micros arrivals_end,
                        NextArrival next);
  void prepare(Transaction& txn);
  void arrive(Transaction txn, Policy& policy, PhaseMetrics& m);
  void begin_attempt(std::size_t w, PhaseMetrics& m);
  void complete(std::size_t w, PhaseMetrics& m);
  void schedule(Micros t, std::uint8_t priority, std::size_t w);
  void go_idle(std::size_t w);
  void charge_idle(std::size_t w, Micros until, PhaseMetrics& m);
  const FeatureVector* recent_features(std::uint64_t seq) const;
  void prune_recent();
  bool quiescent() const;

  EngineConfig config_;
  WorkloadGenerator generator_;
  const CanonMap* canon_;
  QueueSet queues_;
  std::vector<Worker> workers_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t event_seq_ = 0;
  Micros now_ = 0;
  Micros phase_start_ = 0;
  bool logging_ = false;
  bool measuring_ = false;

  std::uint64_t commit_seq_ = 0;
  static constexpr std::size_t kLastCommitPrune = 1 << 14;
  void prune_last_commit();
  std::size_t next_prune_ = kLastCommitPrune;
  std::unordered_map<std::uint64_t, LastCommit> last_commit_;
  std::deque<RecentCommit> recent_;
  Micros max_service_ = 0;

  Rng policy_rng_;
  Rng log_rng_;
  std::vector<LogRecord> log_;
  std::uint64_t skipped_total_ = 0;
  TraceSink* trace_ = nullptr;
  DecisionSink decisions_;
  bool record_exec_ = false;
  std::vector<ExecutionRecord> executions_;
  std::vector<std::uint64_t> scratch_keys_;
};

}  // namespace mlsched
