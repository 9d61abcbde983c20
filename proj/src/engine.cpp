#include "mlsched/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mlsched/errors.hpp"

namespace mlsched {

// PhaseMetrics -------------------------------------------------------------------

double PhaseMetrics::throughput_tps() const {
  const double d = duration_s();
  return d > 0 ? static_cast<double>(committed) / d : 0.0;
}

double PhaseMetrics::abort_rate() const {
  return attempts ? static_cast<double>(aborts) / static_cast<double>(attempts) : 0.0;
}

double PhaseMetrics::mean_response_s() const {
  if (response_times.empty()) return 0.0;
  long double s = 0;
  for (auto r : response_times) s += r;
  return static_cast<double>(s / response_times.size()) / 1e6;
}

double PhaseMetrics::std_response_s() const {
  if (response_times.size() < 2) return 0.0;
  const double mean = mean_response_s() * 1e6;
  long double s = 0;
  for (auto r : response_times) s += (r - mean) * (r - mean);
  return std::sqrt(static_cast<double>(s / response_times.size())) / 1e6;
}

double PhaseMetrics::p95_response_s() const {
  if (response_times.empty()) return 0.0;
  std::vector<Micros> v = response_times;
  const std::size_t idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size()))) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return static_cast<double>(v[idx]) / 1e6;
}

double PhaseMetrics::idle_std_s() const {
  if (idle_us.empty()) return 0.0;
  double mean = 0.0;
  for (auto x : idle_us) mean += static_cast<double>(x);
  mean /= static_cast<double>(idle_us.size());
  double s = 0.0;
  for (auto x : idle_us) s += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  return std::sqrt(s / static_cast<double>(idle_us.size())) / 1e6;
}

// Engine -------------------------------------------------------------------------

namespace {

std::string join_keys(const std::vector<RowKey>& a, const std::vector<RowKey>* b = nullptr) {
  std::string out;
  auto add = [&](const RowKey& k) {
    if (!out.empty()) out += ';';
    out += k.str();
  };
  if (b == nullptr) {
    for (const auto& k : a) add(k);
  } else {
    std::vector<RowKey> all;
    std::set_union(a.begin(), a.end(), b->begin(), b->end(), std::back_inserter(all));
    for (const auto& k : all) add(k);
  }
  return out;
}

}  // namespace

Engine::Engine(EngineConfig config, WorkloadConfig workload)
    : config_(config),
      generator_(resolve(std::move(workload), config.n_queues)),
      canon_(&canon_map(generator_.config().kind)),
      queues_(config.n_queues, config.rt_window),
      workers_(config.n_queues),
      policy_rng_(derive_seed(config.seed, 1)),
      log_rng_(derive_seed(config.seed, 2)) {
  if (config_.k_bits == 0) throw ConfigError("k_bits must be positive");
  if (config_.idle_poll_us <= 0) throw ConfigError("idle poll interval must be positive");
}

std::vector<LogRecord> Engine::take_log() {
  std::vector<LogRecord> out;
  out.swap(log_);
  return out;
}

void Engine::prepare(Transaction& txn) {
  if (txn.features.size == 0) {
    txn.features = hash_features(extract_features(txn.refs, *canon_), config_.k_bits);
  } else if (txn.features.size != config_.k_bits) {
    throw InvariantError("transaction feature vector length does not match k_bits");
  }
  txn.refs.clear();
  txn.refs.shrink_to_fit();
  if (txn.service_time <= 0) throw InvariantError("service time must be positive");
}

void Engine::schedule(Micros t, std::uint8_t priority, std::size_t w) {
  events_.push(Event{t, priority, event_seq_++, w});
}

void Engine::go_idle(std::size_t w) {
  workers_[w].state = WorkerState::idle;
  workers_[w].idle_since = now_;
}

void Engine::charge_idle(std::size_t w, Micros until, PhaseMetrics& m) {
  auto& wk = workers_[w];
  if (until > wk.idle_since) m.idle_us[w] += until - wk.idle_since;
  wk.idle_since = until;
}

void Engine::arrive(Transaction txn, Policy& policy, PhaseMetrics& m) {
  prepare(txn);
  txn.measured = measuring_;
  ++m.arrivals;
  const SchedulerDecision d = policy.assign(txn, queues_, policy_rng_);
  if (d.queue_index >= queues_.size()) throw InvariantError("policy returned an out-of-range queue");
  const std::size_t q = d.queue_index;
  ++m.reasons[static_cast<std::size_t>(d.reason)];
  if (txn.measured) {
    ++m.assigned[q];
    auto& row = m.key_histogram[txn.partition_key];
    if (row.empty()) row.assign(queues_.size(), 0);
    ++row[q];
  }
  if (decisions_) decisions_(txn, policy.kind(), d);
  if (trace_) {
    trace_->event(now_, "arrive", txn.id, q, "type=" + std::string(to_string(txn.type)));
  }
  queues_.enqueue(q, std::move(txn));
  auto& wk = workers_[q];
  if (wk.state == WorkerState::idle) {
    // The worker polls every idle_poll_us since it went idle.
    const Micros poll = config_.idle_poll_us;
    const Micros gap = now_ - wk.idle_since;
    const Micros wake = wk.idle_since + poll * ((gap + poll - 1) / poll);
    wk.state = WorkerState::waking;
    schedule(wake, 1, q);
  }
}

void Engine::begin_attempt(std::size_t w, PhaseMetrics& m) {
  auto& wk = workers_[w];
  Transaction& t = *wk.running;
  wk.state = WorkerState::busy;
  wk.start_exec = now_;
  wk.start_seq = commit_seq_;
  ++t.attempts;
  if (t.measured) ++m.attempts;
  max_service_ = std::max(max_service_, t.service_time);
  if (trace_) {
    trace_->event(now_, "start", t.id, w,
                  "attempt=" + std::to_string(t.attempts) + " seq=" + std::to_string(commit_seq_));
  }
  schedule(now_ + t.service_time, 0, w);
}

const FeatureVector* Engine::recent_features(std::uint64_t seq) const {
  auto it = std::lower_bound(recent_.begin(), recent_.end(), seq,
                             [](const RecentCommit& r, std::uint64_t s) { return r.seq < s; });
  if (it == recent_.end() || it->seq != seq) return nullptr;
  return &it->features;
}

void Engine::prune_recent() {
  while (!recent_.empty() && recent_.front().time < now_ - max_service_) recent_.pop_front();
}

// Entries at or below every running attempt's start seq can no longer abort
// anything, since later attempts start with a larger seq.
void Engine::prune_last_commit() {
  std::uint64_t floor = commit_seq_;
  for (const auto& wk : workers_) {
    if (wk.state == WorkerState::busy) floor = std::min(floor, wk.start_seq);
  }
  std::erase_if(last_commit_, [floor](const auto& e) { return e.second.seq <= floor; });
  next_prune_ = std::max(kLastCommitPrune, 2 * last_commit_.size());
}

void Engine::complete(std::size_t w, PhaseMetrics& m) {
  auto& wk = workers_[w];
  Transaction& t = *wk.running;
  m.busy_us[w] += now_ - wk.start_exec;

  std::uint64_t conflict_seq = 0;
  TxnId conflicter = 0;
  auto check = [&](const std::vector<RowKey>& keys) {
    for (const auto& k : keys) {
      auto it = last_commit_.find(k.packed());
      if (it != last_commit_.end() && it->second.seq > wk.start_seq && it->second.seq > conflict_seq) {
        conflict_seq = it->second.seq;
        conflicter = it->second.id;
      }
    }
  };
  check(t.read_set);
  check(t.write_set);

  if (record_exec_) {
    executions_.push_back({t.id, w, wk.start_exec, now_, conflict_seq == 0, conflicter});
  }

  if (conflict_seq != 0) {
    if (t.measured) ++m.aborts;
    if (trace_) {
      trace_->event(now_, "abort", t.id, w,
                    "by=" + std::to_string(conflicter) + " rws=" + join_keys(t.read_set, &t.write_set));
    }
    if (logging_) {
      if (const FeatureVector* f = recent_features(conflict_seq)) {
        log_.push_back({LogKind::abort, t.id, conflicter, now_, t.features, *f});
      }
    }
    begin_attempt(w, m);
    return;
  }

  ++commit_seq_;
  for (const auto& k : t.write_set) last_commit_[k.packed()] = {commit_seq_, t.id};
  if (last_commit_.size() > next_prune_) prune_last_commit();
  if (logging_) {
    prune_recent();
    recent_.push_back({commit_seq_, t.id, now_, t.features});
    std::vector<std::size_t> running;
    for (std::size_t o = 0; o < workers_.size(); ++o) {
      if (o != w && workers_[o].state == WorkerState::busy) running.push_back(o);
    }
    if (running.empty()) {
      ++m.commit_pairs_skipped;
      ++skipped_total_;
    } else {
      const auto& other = *workers_[running[log_rng_.below(running.size())]].running;
      log_.push_back({LogKind::commit, t.id, other.id, now_, t.features, other.features});
    }
  }
  const Micros response = now_ - t.arrival_time;
  queues_[w].rt.push(response);
  if (t.measured) {
    ++m.committed;
    m.response_times.push_back(response);
  }
  if (trace_) {
    trace_->event(now_, "commit", t.id, w,
                  "seq=" + std::to_string(commit_seq_) + " ws=" + join_keys(t.write_set));
  }
  wk.running.reset();
  if (!queues_[w].fifo.empty()) {
    wk.running = queues_.pop(w);
    begin_attempt(w, m);
  } else {
    go_idle(w);
  }
}

template <typename NextArrival>
PhaseMetrics Engine::run_loop(Policy& policy, const PhaseOptions& options, Micros arrivals_end,
                              NextArrival next) {
  if (queues_.size() != config_.n_queues) throw InvariantError("queue set size changed");
  PhaseMetrics m;
  m.start = now_;
  m.arrivals_end = arrivals_end;
  m.idle_us.assign(queues_.size(), 0);
  m.busy_us.assign(queues_.size(), 0);
  m.assigned.assign(queues_.size(), 0);
  measuring_ = options.measure;
  logging_ = options.log;
  if (!logging_) recent_.clear();
  for (auto& wk : workers_) {
    if (wk.state == WorkerState::idle) wk.idle_since = now_;
  }

  std::optional<Transaction> pending = next();
  for (;;) {
    const Micros te = events_.empty() ? std::numeric_limits<Micros>::max() : events_.top().time;
    if (pending && pending->arrival_time < te) {
      now_ = std::max(now_, pending->arrival_time);
      arrive(std::move(*pending), policy, m);
      pending.reset();
      if (queues_.total_queued() > config_.backlog_cap) {
        m.saturated = true;
        m.arrivals_end = now_;
      } else {
        pending = next();
      }
      continue;
    }
    if (events_.empty()) break;
    const Event e = events_.top();
    events_.pop();
    now_ = e.time;
    if (e.priority == 0) {
      complete(e.worker, m);
    } else {
      auto& wk = workers_[e.worker];
      charge_idle(e.worker, now_, m);
      wk.running = queues_.pop(e.worker);
      begin_attempt(e.worker, m);
    }
  }
  m.end = std::max(now_, m.arrivals_end);
  now_ = m.end;
  for (std::size_t w = 0; w < workers_.size(); ++w) charge_idle(w, m.end, m);
  if (!quiescent()) throw InvariantError("phase ended with work outstanding");
  return m;
}

bool Engine::quiescent() const {
  if (queues_.total_queued() != 0 || !events_.empty()) return false;
  return std::all_of(workers_.begin(), workers_.end(),
                     [](const Worker& w) { return w.state == WorkerState::idle; });
}

PhaseMetrics Engine::run_phase(Policy& policy, const PhaseOptions& options) {
  if (options.duration <= 0) throw ConfigError("phase duration must be positive");
  generator_.skip_to(now_);
  const Micros arrivals_end = now_ + options.duration;
  return run_loop(policy, options, arrivals_end, [&]() -> std::optional<Transaction> {
    Transaction t = generator_.next_arrival();
    if (t.arrival_time >= arrivals_end) return std::nullopt;
    return t;
  });
}

PhaseMetrics Engine::run_script(std::vector<Transaction> txns, Policy& policy, bool log) {
  for (std::size_t i = 1; i < txns.size(); ++i) {
    if (txns[i].arrival_time < txns[i - 1].arrival_time || txns[i].id <= txns[i - 1].id) {
      throw InvariantError("scripted transactions must be ordered by arrival time and id");
    }
  }
  Micros last = txns.empty() ? now_ : std::max(now_, txns.back().arrival_time);
  std::size_t next = 0;
  PhaseOptions opts;
  opts.measure = true;
  opts.log = log;
  return run_loop(policy, opts, last, [&]() -> std::optional<Transaction> {
    if (next == txns.size()) return std::nullopt;
    return std::move(txns[next++]);
  });
}

}  // namespace mlsched
