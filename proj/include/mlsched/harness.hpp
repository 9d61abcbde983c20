#pragma once

// Experimental protocol: random warm-up with logging, model training, a
// measured run, repeats with derived seeds, arrival-rate sweeps and
// round-based retraining.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlsched/abort_model.hpp"
#include "mlsched/cluster_model.hpp"
#include "mlsched/engine.hpp"
#include "mlsched/scheduler.hpp"
#include "mlsched/workload.hpp"

namespace mlsched {

struct ExperimentConfig {
  WorkloadConfig workload;
  PolicyKind policy = PolicyKind::random;
  std::size_t n_queues = 8;
  std::uint32_t k_bits = kDefaultKBits;
  double warmup_s = 5.0;
  double measure_s = 30.0;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  double theta = 0.5;
  std::size_t jobs = 1;
  std::size_t rt_window = 1000;
  std::size_t backlog_cap = 200000;
  Micros idle_poll_us = 10;

  std::size_t train_sample_size = 10000;
  SampleMode sample_mode = SampleMode::balanced;
  Hyper hyper;
  KMeansOptions kmeans;

  std::size_t rounds = 9;
  double round_s = 20.0;
  std::size_t round_sample_size = 500;

  std::vector<double> rates;

  void validate() const;  // throws ConfigError
};

struct Seeds {
  std::uint64_t workload;
  std::uint64_t engine;
  std::uint64_t training;
};
Seeds repeat_seeds(std::uint64_t base, std::size_t repeat);

EngineConfig engine_config(const ExperimentConfig& cfg, std::uint64_t engine_seed);

struct TrainedModels {
  std::shared_ptr<const AbortModel> model;
  std::shared_ptr<const CentroidSet> centroids;
};

// Trains what `policy` needs from an execution log. Throws DataError when
// the log cannot support it (no records, no aborts, single class).
TrainedModels train_for_policy(PolicyKind policy, const std::vector<LogRecord>& log,
                               const ExperimentConfig& cfg, std::size_t sample_size, Rng& rng);

// Abort vectors of the abort records, sampled uniformly up to `limit`.
std::vector<AbortVector> abort_vectors(const std::vector<LogRecord>& log, std::size_t limit, Rng& rng);

struct RepeatResult {
  Seeds seeds{};
  double throughput_tps = 0.0;
  double abort_rate = 0.0;
  double rt_mean_s = 0.0;
  double rt_std_s = 0.0;
  double rt_p95_s = 0.0;
  double idle_std_s = 0.0;
  double partition_quality = 0.0;
  bool saturated = false;
  bool model_fallback = false;
  std::uint64_t committed = 0;
  std::uint64_t attempts = 0;
  std::uint64_t aborts = 0;
  std::uint64_t warmup_log_records = 0;
  std::array<std::uint64_t, 4> reasons{};
  std::map<std::int64_t, std::vector<std::uint64_t>> key_histogram;
};

struct Report {
  PolicyKind policy = PolicyKind::random;
  WorkloadKind workload = WorkloadKind::tpcc;
  double arrival_rate_tps = 0.0;
  std::vector<RepeatResult> repeats;
  double throughput_tps = 0.0;
  double relative_throughput = 1.0;
  double baseline_throughput_tps = 0.0;
  double abort_rate = 0.0;
  double rt_mean_s = 0.0;
  double rt_std_s = 0.0;
  double rt_p95_s = 0.0;
  double idle_std_s = 0.0;
  double partition_quality = 0.0;
  bool saturated = false;
  bool model_fallback = false;
  std::map<std::int64_t, std::vector<std::uint64_t>> key_histogram;
  std::vector<std::pair<std::string, std::string>> config;
};

// Hooks for optional outputs of a single repeat.
struct RunHooks {
  TraceSink* trace = nullptr;
  DecisionSink decisions;
  // Receives the warm-up log of each repeat.
  std::function<void(std::size_t repeat, const std::vector<LogRecord>&)> warmup_log;
  // Receives the models trained for each repeat.
  std::function<void(std::size_t repeat, const TrainedModels&)> models;
};

RepeatResult run_repeat(const ExperimentConfig& cfg, std::size_t repeat, const RunHooks* hooks = nullptr);

// Runs cfg.repeats repeats (in parallel when cfg.jobs > 1) and aggregates.
// Relative throughput is left at 1 until a baseline is attached.
Report run_experiment_raw(const ExperimentConfig& cfg, const RunHooks* hooks = nullptr);
void attach_baseline(Report& report, const Report& random_baseline);

// As run_experiment_raw, plus a random-policy baseline on the same seeds
// when the policy is not random.
Report run_experiment(const ExperimentConfig& cfg, const RunHooks* hooks = nullptr);

// One random baseline shared by every policy in the list.
std::vector<Report> compare_policies(const ExperimentConfig& cfg, const std::vector<PolicyKind>& policies);

// Warm-up log of one repeat (random policy, logging on).
std::vector<LogRecord> collect_warmup_log(const ExperimentConfig& cfg, std::size_t repeat);

struct SweepPoint {
  double offered_tps = 0.0;
  double throughput_tps = 0.0;
  double rt_mean_s = 0.0;
  double abort_rate = 0.0;
  bool saturated = false;
};

struct SweepReport {
  PolicyKind policy = PolicyKind::random;
  std::vector<SweepPoint> points;
  std::optional<std::size_t> knee;  // first point below 95% of offered
  // Peak throughput over the points up to and including the knee.
  double knee_throughput_tps = 0.0;
};

SweepReport sweep_arrival_rate(const ExperimentConfig& cfg, const std::vector<double>& rates);
std::optional<std::size_t> find_knee(const std::vector<SweepPoint>& points);

struct RoundsReport {
  PolicyKind policy = PolicyKind::random;
  std::vector<double> throughput_tps;  // round 0 .. rounds
  std::vector<double> relative;        // vs round 0
  std::vector<double> abort_rate;
  std::vector<bool> reused_model;
  double mean = 0.0;  // over rounds 1..n
  double stddev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

RoundsReport run_rounds(const ExperimentConfig& cfg);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double ci_low = 0.0;
  double ci_high = 0.0;
};
// Mean, sample std and t-distribution 95% interval.
Summary summarize(const std::vector<double>& values);

struct DistributionMatrix {
  std::vector<std::int64_t> keys;
  std::vector<std::vector<double>> share;  // [queue][key], each row sums to 1
  double partition_quality = 0.0;
};

DistributionMatrix distribution_matrix(const std::map<std::int64_t, std::vector<std::uint64_t>>& hist,
                                       std::size_t n_queues);

struct DecisionRecord {
  TxnId txn_id = 0;
  std::size_t queue = 0;
  std::int64_t key = 0;
};
DistributionMatrix distribution_matrix(const std::vector<DecisionRecord>& trace, std::size_t n_queues);

// Output writers --------------------------------------------------------------

// Frozen column order, documented in the README.
std::string report_csv_header();
std::string report_csv_rows(const Report& report);
std::string report_json(const Report& report);
std::string sweep_csv(const SweepReport& sweep);
std::string rounds_csv(const RoundsReport& rounds);
std::string distribution_csv(const DistributionMatrix& m);

}  // namespace mlsched
