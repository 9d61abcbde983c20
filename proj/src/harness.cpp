#include "mlsched/harness.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <exception>
#include <mutex>
#include "json.hpp"
#include <numeric>
#include <sstream>
#include <thread>

#include "mlsched/config.hpp"
#include "mlsched/errors.hpp"

namespace mlsched {

namespace {

Micros to_micros(double seconds) { return static_cast<Micros>(std::llround(seconds * 1e6)); }

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double mean_of(const std::vector<RepeatResult>& rs, double RepeatResult::*field) {
  double s = 0.0;
  for (const auto& r : rs) s += r.*field;
  return rs.empty() ? 0.0 : s / static_cast<double>(rs.size());
}

}  // namespace

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("experiment.repeats must be at least 1");
  if (!(warmup_s > 0) || !(measure_s > 0)) throw ConfigError("durations must be positive");
  if (n_queues < 1) throw ConfigError("experiment.queues must be at least 1");
  if (k_bits < 1 || k_bits > 3000) throw ConfigError("experiment.k_bits must be in [1, 3000]");
  if (!(theta >= 0 && theta <= 1)) throw ConfigError("experiment.theta must be in [0, 1]");
  if (train_sample_size < 1 || round_sample_size < 1) throw ConfigError("sample sizes must be positive");
  if (!(round_s > 0)) throw ConfigError("rounds.duration_s must be positive");
  if (jobs < 1) throw ConfigError("experiment.jobs must be at least 1");
  if (rt_window < 1) throw ConfigError("experiment.rt_window must be at least 1");
  if (idle_poll_us < 1) throw ConfigError("experiment.idle_poll_us must be at least 1");
  for (std::size_t i = 1; i < rates.size(); ++i) {
    if (!(rates[i] > rates[i - 1])) throw ConfigError("sweep rates must be strictly ascending");
  }
  (void)resolve(workload, n_queues);
}

Seeds repeat_seeds(std::uint64_t base, std::size_t repeat) {
  return {derive_seed(base, 1000 + repeat), derive_seed(base, 2000 + repeat),
          derive_seed(base, 3000 + repeat)};
}

EngineConfig engine_config(const ExperimentConfig& cfg, std::uint64_t engine_seed) {
  EngineConfig e;
  e.n_queues = cfg.n_queues;
  e.k_bits = cfg.k_bits;
  e.idle_poll_us = cfg.idle_poll_us;
  e.backlog_cap = cfg.backlog_cap;
  e.rt_window = cfg.rt_window;
  e.seed = engine_seed;
  return e;
}

std::vector<AbortVector> abort_vectors(const std::vector<LogRecord>& log, std::size_t limit,
                                       Rng& rng) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].kind == LogKind::abort) idx.push_back(i);
  }
  const std::size_t n = std::min(limit, idx.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  std::vector<AbortVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = log[idx[i]];
    out.push_back(abort_vector(r.subject_features, r.other_features));
  }
  return out;
}

TrainedModels train_for_policy(PolicyKind policy, const std::vector<LogRecord>& log,
                               const ExperimentConfig& cfg, std::size_t sample_size, Rng& rng) {
  TrainedModels out;
  if (needs_abort_model(policy)) {
    auto examples = build_training_set(log, sample_size, rng, cfg.sample_mode);
    Hyper h = cfg.hyper;
    h.seed = rng.next_u64();
    out.model = std::make_shared<const AbortModel>(train(examples, h));
  }
  if (needs_centroids(policy)) {
    auto points = abort_vectors(log, sample_size, rng);
    if (points.empty()) throw DataError("no abort data");
    out.centroids = std::make_shared<const CentroidSet>(kmeans_fit(points, cfg.n_queues, rng, cfg.kmeans));
  }
  return out;
}

std::vector<LogRecord> collect_warmup_log(const ExperimentConfig& cfg, std::size_t repeat) {
  const Seeds s = repeat_seeds(cfg.seed, repeat);
  WorkloadConfig wc = cfg.workload;
  wc.rng_seed = s.workload;
  Engine engine(engine_config(cfg, s.engine), wc);
  RandomPolicy warm;
  PhaseOptions opts;
  opts.duration = to_micros(cfg.warmup_s);
  opts.measure = false;
  opts.log = true;
  engine.run_phase(warm, opts);
  return engine.take_log();
}

RepeatResult run_repeat(const ExperimentConfig& cfg, std::size_t repeat, const RunHooks* hooks) {
  RepeatResult res;
  res.seeds = repeat_seeds(cfg.seed, repeat);
  WorkloadConfig wc = cfg.workload;
  wc.rng_seed = res.seeds.workload;
  Engine engine(engine_config(cfg, res.seeds.engine), wc);

  RandomPolicy warm;
  PhaseOptions warm_opts;
  warm_opts.duration = to_micros(cfg.warmup_s);
  warm_opts.measure = false;
  warm_opts.log = cfg.policy != PolicyKind::random || (hooks && hooks->warmup_log);
  engine.run_phase(warm, warm_opts);

  std::unique_ptr<Policy> policy;
  {
    auto log = engine.take_log();
    res.warmup_log_records = log.size();
    if (hooks && hooks->warmup_log) hooks->warmup_log(repeat, log);
    if (cfg.policy == PolicyKind::random) {
      policy = std::make_unique<RandomPolicy>();
    } else {
      Rng rng(res.seeds.training);
      try {
        const TrainedModels models = train_for_policy(cfg.policy, log, cfg, cfg.train_sample_size, rng);
        if (hooks && hooks->models) hooks->models(repeat, models);
        policy = make_policy(cfg.policy, {models.model, models.centroids, cfg.theta});
      } catch (const DataError&) {
        res.model_fallback = true;
        policy = std::make_unique<RandomPolicy>();
      }
    }
  }

  if (hooks) {
    engine.set_trace(hooks->trace);
    if (hooks->decisions) engine.set_decision_sink(hooks->decisions);
  }
  PhaseOptions opts;
  opts.duration = to_micros(cfg.measure_s);
  const PhaseMetrics m = engine.run_phase(*policy, opts);
  engine.set_trace(nullptr);

  res.throughput_tps = m.throughput_tps();
  res.abort_rate = m.abort_rate();
  res.rt_mean_s = m.mean_response_s();
  res.rt_std_s = m.std_response_s();
  res.rt_p95_s = m.p95_response_s();
  res.idle_std_s = m.idle_std_s();
  res.saturated = m.saturated;
  res.committed = m.committed;
  res.attempts = m.attempts;
  res.aborts = m.aborts;
  res.reasons = m.reasons;
  res.key_histogram = m.key_histogram;
  res.partition_quality = distribution_matrix(res.key_histogram, cfg.n_queues).partition_quality;
  return res;
}

Report run_experiment_raw(const ExperimentConfig& cfg, const RunHooks* hooks) {
  cfg.validate();
  Report rep;
  rep.policy = cfg.policy;
  rep.workload = cfg.workload.kind;
  rep.arrival_rate_tps = cfg.workload.arrival_rate_tps;
  rep.config = config_entries(cfg);
  rep.repeats.resize(cfg.repeats);
  // Trace and decision sinks are not thread-safe; they force sequential runs.
  const bool sinks = hooks && (hooks->trace || hooks->decisions || hooks->warmup_log || hooks->models);
  parallel_for(cfg.repeats, sinks ? 1 : cfg.jobs,
               [&](std::size_t r) { rep.repeats[r] = run_repeat(cfg, r, hooks); });

  rep.throughput_tps = mean_of(rep.repeats, &RepeatResult::throughput_tps);
  rep.abort_rate = mean_of(rep.repeats, &RepeatResult::abort_rate);
  rep.rt_mean_s = mean_of(rep.repeats, &RepeatResult::rt_mean_s);
  rep.rt_std_s = mean_of(rep.repeats, &RepeatResult::rt_std_s);
  rep.rt_p95_s = mean_of(rep.repeats, &RepeatResult::rt_p95_s);
  rep.idle_std_s = mean_of(rep.repeats, &RepeatResult::idle_std_s);
  for (const auto& r : rep.repeats) {
    rep.saturated = rep.saturated || r.saturated;
    rep.model_fallback = rep.model_fallback || r.model_fallback;
    for (const auto& [key, row] : r.key_histogram) {
      auto& dst = rep.key_histogram[key];
      if (dst.empty()) dst.assign(row.size(), 0);
      for (std::size_t q = 0; q < row.size(); ++q) dst[q] += row[q];
    }
  }
  // Queue labels are not comparable across repeats.
  rep.partition_quality = mean_of(rep.repeats, &RepeatResult::partition_quality);
  rep.baseline_throughput_tps = rep.throughput_tps;
  return rep;
}

void attach_baseline(Report& report, const Report& random_baseline) {
  report.baseline_throughput_tps = random_baseline.throughput_tps;
  report.relative_throughput = random_baseline.throughput_tps > 0
                                   ? report.throughput_tps / random_baseline.throughput_tps
                                   : 0.0;
}

Report run_experiment(const ExperimentConfig& cfg, const RunHooks* hooks) {
  Report rep = run_experiment_raw(cfg, hooks);
  if (cfg.policy != PolicyKind::random) {
    ExperimentConfig base = cfg;
    base.policy = PolicyKind::random;
    attach_baseline(rep, run_experiment_raw(base));
  }
  return rep;
}

std::vector<Report> compare_policies(const ExperimentConfig& cfg,
                                     const std::vector<PolicyKind>& policies) {
  std::vector<ExperimentConfig> cells;
  ExperimentConfig base = cfg;
  base.policy = PolicyKind::random;
  base.jobs = 1;
  cells.push_back(base);
  for (auto p : policies) {
    if (p == PolicyKind::random) continue;
    ExperimentConfig c = base;
    c.policy = p;
    cells.push_back(c);
  }
  std::vector<Report> reports(cells.size());
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) { reports[i] = run_experiment_raw(cells[i]); });
  std::vector<Report> out;
  for (auto p : policies) {
    for (auto& r : reports) {
      if (r.policy == p) {
        Report copy = r;
        attach_baseline(copy, reports.front());
        out.push_back(std::move(copy));
        break;
      }
    }
  }
  return out;
}

// Sweeps -------------------------------------------------------------------------

std::optional<std::size_t> find_knee(const std::vector<SweepPoint>& points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].throughput_tps < 0.95 * points[i].offered_tps) return i;
  }
  return std::nullopt;
}

SweepReport sweep_arrival_rate(const ExperimentConfig& cfg, const std::vector<double>& rates) {
  if (rates.empty()) throw ConfigError("sweep needs at least one rate");
  for (std::size_t i = 1; i < rates.size(); ++i) {
    if (!(rates[i] > rates[i - 1])) throw ConfigError("sweep rates must be strictly ascending");
  }
  SweepReport out;
  out.policy = cfg.policy;
  out.points.resize(rates.size());
  const std::size_t outer = std::min(cfg.jobs, rates.size());
  parallel_for(rates.size(), outer, [&](std::size_t i) {
    ExperimentConfig c = cfg;
    c.workload.arrival_rate_tps = rates[i];
    c.jobs = 1;
    const Report r = run_experiment_raw(c);
    out.points[i] = {rates[i], r.throughput_tps, r.rt_mean_s, r.abort_rate, r.saturated};
  });
  out.knee = find_knee(out.points);
  const std::size_t last = out.knee ? *out.knee + 1 : out.points.size();
  for (std::size_t i = 0; i < last; ++i) {
    out.knee_throughput_tps = std::max(out.knee_throughput_tps, out.points[i].throughput_tps);
  }
  return out;
}

// Rounds -------------------------------------------------------------------------

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) {
    s.ci_low = s.ci_high = s.mean;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (n - 1));
  boost::math::students_t dist(n - 1);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  const double half = t * s.stddev / std::sqrt(n);
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

RoundsReport run_rounds(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.rounds < 1) throw ConfigError("rounds.count must be at least 1");
  RoundsReport out;
  out.policy = cfg.policy;
  const Seeds s = repeat_seeds(cfg.seed, 0);
  WorkloadConfig wc = cfg.workload;
  wc.rng_seed = s.workload;
  Engine engine(engine_config(cfg, s.engine), wc);
  Rng rng(s.training);
  PhaseOptions opts;
  opts.duration = to_micros(cfg.round_s);
  opts.log = true;

  RandomPolicy random;
  PhaseMetrics m0 = engine.run_phase(random, opts);
  out.throughput_tps.push_back(m0.throughput_tps());
  out.abort_rate.push_back(m0.abort_rate());
  out.reused_model.push_back(false);

  std::optional<TrainedModels> current;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    auto log = engine.take_log();
    bool reused = false;
    if (cfg.policy != PolicyKind::random) {
      try {
        current = train_for_policy(cfg.policy, log, cfg, cfg.round_sample_size, rng);
      } catch (const DataError&) {
        reused = true;
      }
    }
    log.clear();
    std::unique_ptr<Policy> policy;
    if (cfg.policy == PolicyKind::random || !current) {
      policy = std::make_unique<RandomPolicy>();
    } else {
      policy = make_policy(cfg.policy, {current->model, current->centroids, cfg.theta});
    }
    const PhaseMetrics m = engine.run_phase(*policy, opts);
    out.throughput_tps.push_back(m.throughput_tps());
    out.abort_rate.push_back(m.abort_rate());
    out.reused_model.push_back(reused);
  }
  for (double t : out.throughput_tps) {
    out.relative.push_back(out.throughput_tps[0] > 0 ? t / out.throughput_tps[0] : 0.0);
  }
  const Summary sm = summarize(std::vector<double>(out.relative.begin() + 1, out.relative.end()));
  out.mean = sm.mean;
  out.stddev = sm.stddev;
  out.ci_low = sm.ci_low;
  out.ci_high = sm.ci_high;
  return out;
}

// Distributions ------------------------------------------------------------------

DistributionMatrix distribution_matrix(const std::map<std::int64_t, std::vector<std::uint64_t>>& hist,
                                       std::size_t n_queues) {
  DistributionMatrix m;
  m.share.assign(n_queues, {});
  std::vector<double> per_queue(n_queues, 0.0);
  double quality = 0.0;
  for (const auto& [key, row] : hist) {
    if (row.size() != n_queues) throw InvariantError("histogram row width does not match queue count");
    const std::uint64_t total = std::accumulate(row.begin(), row.end(), std::uint64_t{0});
    if (total == 0) continue;
    m.keys.push_back(key);
    quality += static_cast<double>(*std::max_element(row.begin(), row.end())) / static_cast<double>(total);
    for (std::size_t q = 0; q < n_queues; ++q) {
      m.share[q].push_back(static_cast<double>(row[q]));
      per_queue[q] += static_cast<double>(row[q]);
    }
  }
  for (std::size_t q = 0; q < n_queues; ++q) {
    if (per_queue[q] > 0) {
      for (auto& x : m.share[q]) x /= per_queue[q];
    }
  }
  m.partition_quality = m.keys.empty() ? 0.0 : quality / static_cast<double>(m.keys.size());
  return m;
}

DistributionMatrix distribution_matrix(const std::vector<DecisionRecord>& trace, std::size_t n_queues) {
  std::map<std::int64_t, std::vector<std::uint64_t>> hist;
  for (const auto& d : trace) {
    if (d.queue >= n_queues) throw InvariantError("decision record queue out of range");
    auto& row = hist[d.key];
    if (row.empty()) row.assign(n_queues, 0);
    ++row[d.queue];
  }
  return distribution_matrix(hist, n_queues);
}

// Output -------------------------------------------------------------------------

std::string report_csv_header() {
  return "workload,policy,repeat,arrival_rate_tps,throughput_tps,relative_throughput,abort_rate,"
         "rt_mean_s,rt_std_s,rt_p95_s,idle_std_s,partition_quality,saturated,model_fallback,"
         "committed,attempts,aborts\n";
}

std::string report_csv_rows(const Report& report) {
  std::ostringstream out;
  auto row = [&](const std::string& repeat, double tps, double rel, double ar, double rtm, double rts,
                 double rtp, double idle, double pq, bool sat, bool fb, std::uint64_t c,
                 std::uint64_t a, std::uint64_t ab) {
    out << to_string(report.workload) << ',' << to_string(report.policy) << ',' << repeat << ','
        << format_double(report.arrival_rate_tps) << ',' << format_double(tps) << ','
        << format_double(rel) << ',' << format_double(ar) << ',' << format_double(rtm) << ','
        << format_double(rts) << ',' << format_double(rtp) << ',' << format_double(idle) << ','
        << format_double(pq) << ',' << (sat ? 1 : 0) << ',' << (fb ? 1 : 0) << ',' << c << ',' << a
        << ',' << ab << '\n';
  };
  std::uint64_t c = 0;
  std::uint64_t a = 0;
  std::uint64_t ab = 0;
  for (std::size_t i = 0; i < report.repeats.size(); ++i) {
    const auto& r = report.repeats[i];
    const double rel = report.baseline_throughput_tps > 0 ? r.throughput_tps / report.baseline_throughput_tps : 0.0;
    row(std::to_string(i), r.throughput_tps, rel, r.abort_rate, r.rt_mean_s, r.rt_std_s, r.rt_p95_s,
        r.idle_std_s, r.partition_quality, r.saturated, r.model_fallback, r.committed, r.attempts, r.aborts);
    c += r.committed;
    a += r.attempts;
    ab += r.aborts;
  }
  row("mean", report.throughput_tps, report.relative_throughput, report.abort_rate, report.rt_mean_s,
      report.rt_std_s, report.rt_p95_s, report.idle_std_s, report.partition_quality, report.saturated,
      report.model_fallback, c, a, ab);
  return out.str();
}

std::string report_json(const Report& report) {
  nlohmann::ordered_json j;
  j["workload"] = std::string(to_string(report.workload));
  j["policy"] = std::string(to_string(report.policy));
  j["arrival_rate_tps"] = report.arrival_rate_tps;
  j["throughput_tps"] = report.throughput_tps;
  j["relative_throughput"] = report.relative_throughput;
  j["baseline_throughput_tps"] = report.baseline_throughput_tps;
  j["abort_rate"] = report.abort_rate;
  j["response_time_s"] = {{"mean", report.rt_mean_s}, {"std", report.rt_std_s}, {"p95", report.rt_p95_s}};
  j["idle_std_s"] = report.idle_std_s;
  j["partition_quality"] = report.partition_quality;
  j["saturated"] = report.saturated;
  j["model_fallback"] = report.model_fallback;
  auto reps = nlohmann::ordered_json::array();
  for (const auto& r : report.repeats) {
    nlohmann::ordered_json x;
    x["workload_seed"] = r.seeds.workload;
    x["engine_seed"] = r.seeds.engine;
    x["throughput_tps"] = r.throughput_tps;
    x["abort_rate"] = r.abort_rate;
    x["rt_mean_s"] = r.rt_mean_s;
    x["rt_std_s"] = r.rt_std_s;
    x["rt_p95_s"] = r.rt_p95_s;
    x["idle_std_s"] = r.idle_std_s;
    x["saturated"] = r.saturated;
    x["model_fallback"] = r.model_fallback;
    x["committed"] = r.committed;
    x["attempts"] = r.attempts;
    x["aborts"] = r.aborts;
    x["warmup_log_records"] = r.warmup_log_records;
    nlohmann::ordered_json reasons;
    for (std::size_t i = 0; i < r.reasons.size(); ++i) {
      reasons[std::string(to_string(static_cast<Reason>(i)))] = r.reasons[i];
    }
    x["decision_reasons"] = reasons;
    reps.push_back(x);
  }
  j["repeats"] = reps;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

std::string sweep_csv(const SweepReport& sweep) {
  std::ostringstream out;
  out << "policy,offered_tps,throughput_tps,rt_mean_s,abort_rate,saturated,knee\n";
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    const auto& p = sweep.points[i];
    out << to_string(sweep.policy) << ',' << format_double(p.offered_tps) << ','
        << format_double(p.throughput_tps) << ',' << format_double(p.rt_mean_s) << ','
        << format_double(p.abort_rate) << ',' << (p.saturated ? 1 : 0) << ','
        << (sweep.knee && *sweep.knee == i ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string rounds_csv(const RoundsReport& rounds) {
  std::ostringstream out;
  out << "policy,round,throughput_tps,relative_throughput,abort_rate,reused_model\n";
  for (std::size_t r = 0; r < rounds.throughput_tps.size(); ++r) {
    out << to_string(rounds.policy) << ',' << r << ',' << format_double(rounds.throughput_tps[r]) << ','
        << format_double(rounds.relative[r]) << ',' << format_double(rounds.abort_rate[r]) << ','
        << (rounds.reused_model[r] ? 1 : 0) << '\n';
  }
  out << to_string(rounds.policy) << ",mean,," << format_double(rounds.mean) << ",,\n";
  out << to_string(rounds.policy) << ",std,," << format_double(rounds.stddev) << ",,\n";
  out << to_string(rounds.policy) << ",ci95_low,," << format_double(rounds.ci_low) << ",,\n";
  out << to_string(rounds.policy) << ",ci95_high,," << format_double(rounds.ci_high) << ",,\n";
  return out.str();
}

std::string distribution_csv(const DistributionMatrix& m) {
  std::ostringstream out;
  out << "queue,key,share\n";
  for (std::size_t q = 0; q < m.share.size(); ++q) {
    for (std::size_t k = 0; k < m.keys.size(); ++k) {
      out << q << ',' << m.keys[k] << ',' << format_double(m.share[q][k]) << '\n';
    }
  }
  out << "# partition_quality," << format_double(m.partition_quality) << '\n';
  return out.str();
}

}  // namespace mlsched
