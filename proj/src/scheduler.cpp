#include "mlsched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mlsched/errors.hpp"

namespace mlsched {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::random: return "random";
    case PolicyKind::search: return "search";
    case PolicyKind::bfs: return "bfs";
    case PolicyKind::balanced_vector: return "balanced_vector";
    case PolicyKind::balanced_kmeans: return "balanced_kmeans";
    case PolicyKind::unbalanced_kmeans: return "unbalanced_kmeans";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view text) {
  for (auto k : {PolicyKind::random, PolicyKind::search, PolicyKind::bfs,
                 PolicyKind::balanced_vector, PolicyKind::balanced_kmeans,
                 PolicyKind::unbalanced_kmeans}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown policy '" + std::string(text) + "'");
}

bool needs_abort_model(PolicyKind kind) {
  return kind == PolicyKind::search || kind == PolicyKind::bfs ||
         kind == PolicyKind::balanced_vector;
}

bool needs_centroids(PolicyKind kind) {
  return kind == PolicyKind::balanced_kmeans || kind == PolicyKind::unbalanced_kmeans;
}

std::string_view to_string(Reason reason) {
  switch (reason) {
    case Reason::model_match: return "model_match";
    case Reason::threshold_hit: return "threshold_hit";
    case Reason::balance_override: return "balance_override";
    case Reason::random_fallback: return "random_fallback";
  }
  return "?";
}

// ResponseWindow ---------------------------------------------------------------

ResponseWindow::ResponseWindow(std::size_t capacity) : buf_(std::max<std::size_t>(1, capacity)) {}

void ResponseWindow::push(Micros rt) {
  if (size_ == buf_.size()) {
    const Micros old = buf_[head_];
    sum_ -= old;
    sum_sq_ -= static_cast<__int128>(old) * old;
  } else {
    ++size_;
  }
  buf_[head_] = rt;
  sum_ += rt;
  sum_sq_ += static_cast<__int128>(rt) * rt;
  head_ = (head_ + 1) % buf_.size();
}

double ResponseWindow::mean() const {
  return size_ ? static_cast<double>(sum_) / static_cast<double>(size_) : 0.0;
}

double ResponseWindow::stddev() const {
  if (size_ < 2) return 0.0;
  const auto n = static_cast<__int128>(size_);
  const __int128 num = n * sum_sq_ - sum_ * sum_;
  return std::sqrt(std::max(0.0, static_cast<double>(num)) / static_cast<double>(n * n));
}

void ResponseWindow::clear() {
  head_ = size_ = 0;
  sum_ = sum_sq_ = 0;
}

// Queues -----------------------------------------------------------------------

std::vector<double> QueueState::r_avg() const {
  std::vector<double> out(r_sum.size(), 0.0);
  if (count == 0) return out;
  for (std::size_t j = 0; j < r_sum.size(); ++j) {
    out[j] = static_cast<double>(r_sum[j]) / static_cast<double>(count);
  }
  return out;
}

QueueSet::QueueSet(std::size_t n, std::size_t rt_window) {
  if (n == 0) throw ConfigError("need at least one queue");
  queues_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) queues_.emplace_back(i, rt_window);
}

void QueueSet::enqueue(std::size_t i, Transaction txn) {
  auto& q = queues_.at(i);
  q.fifo.push_back(std::move(txn));
  ++q.enqueued;
  ++total_;
}

Transaction QueueSet::pop(std::size_t i) {
  auto& q = queues_.at(i);
  if (q.fifo.empty()) throw InvariantError("pop from empty queue");
  Transaction t = std::move(q.fifo.front());
  q.fifo.pop_front();
  --total_;
  if (q.fifo.empty()) q.blocked = false;
  return t;
}

ResponseStats response_stats(const QueueSet& queues) {
  ResponseStats s;
  __int128 sum = 0;
  __int128 sum_sq = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < queues.size(); ++i) {
    const auto& w = queues[i].rt;
    sum += w.sum();
    sum_sq += w.sum_sq();
    n += w.size();
  }
  if (n > 0) {
    const auto nn = static_cast<__int128>(n);
    s.global_mean = static_cast<double>(sum) / static_cast<double>(n);
    const __int128 num = nn * sum_sq - sum * sum;
    s.global_std = std::sqrt(std::max(0.0, static_cast<double>(num)) / static_cast<double>(nn * nn));
  }
  s.mean.resize(queues.size());
  s.samples.resize(queues.size());
  s.queued.resize(queues.size());
  for (std::size_t i = 0; i < queues.size(); ++i) {
    const auto& w = queues[i].rt;
    s.samples[i] = w.size();
    s.queued[i] = queues[i].fifo.size();
    s.mean[i] = w.size() ? w.mean() : s.global_mean;
  }
  return s;
}

namespace {

std::size_t min_response_queue(const ResponseStats& stats, const QueueSet* skip_blocked) {
  std::size_t best = 0;
  double best_rt = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    if (skip_blocked && (*skip_blocked)[i].blocked) continue;
    if (stats.mean[i] < best_rt) {
      best_rt = stats.mean[i];
      best = i;
      found = true;
    }
  }
  return found ? best : std::numeric_limits<std::size_t>::max();
}

bool over_limit(std::size_t q, const ResponseStats& stats) {
  const bool empty = q < stats.queued.size() && stats.queued[q] == 0;
  return stats.samples[q] > 0 && !empty && stats.mean[q] - stats.global_mean > stats.global_std;
}

}  // namespace

std::size_t response_time_override(std::size_t chosen, const ResponseStats& stats) {
  if (chosen >= stats.mean.size()) throw InvariantError("queue index out of range");
  if (!over_limit(chosen, stats)) return chosen;
  return min_response_queue(stats, nullptr);
}

template <BlockingMode Mode>
std::size_t apply_balance(std::size_t chosen, QueueSet& queues, PolicyCounters& counters,
                          bool& overridden) {
  overridden = false;
  if (queues.size() == 1) return chosen;
  const ResponseStats stats = response_stats(queues);
  std::size_t target = chosen;
  if constexpr (Mode == BlockingMode::strict) {
    if (queues[chosen].blocked || over_limit(chosen, stats)) {
      if (!queues[chosen].fifo.empty()) queues[chosen].blocked = true;
      const auto alt = min_response_queue(stats, &queues);
      if (alt != std::numeric_limits<std::size_t>::max()) target = alt;
    }
  } else {
    target = response_time_override(chosen, stats);
  }
  if (target != chosen) {
    overridden = true;
    ++counters.overrides;
  }
  return target;
}

template std::size_t apply_balance<BlockingMode::reroute>(std::size_t, QueueSet&, PolicyCounters&,
                                                          bool&);
template std::size_t apply_balance<BlockingMode::strict>(std::size_t, QueueSet&, PolicyCounters&,
                                                         bool&);

// Policies ---------------------------------------------------------------------

SchedulerDecision RandomPolicy::assign(const Transaction&, QueueSet& queues, Rng& rng) {
  ++counters_.decisions;
  ++counters_.fallbacks;
  return {static_cast<std::size_t>(rng.below(queues.size())), Reason::random_fallback, 0.0};
}

SchedulerDecision SearchPolicy::assign(const Transaction& txn, QueueSet& queues, Rng& rng) {
  ++counters_.decisions;
  bool found = false;
  SchedulerDecision best{0, Reason::model_match, -1.0};
  for (std::size_t i = 0; i < queues.size(); ++i) {
    for (const auto& queued : queues[i].fifo) {
      ++counters_.model_evals;
      const double p = model_->predict(txn.features, queued.features);
      if (p > best.score) {
        best = {i, Reason::model_match, p};
        found = true;
      }
    }
  }
  if (!found) {
    ++counters_.fallbacks;
    return {static_cast<std::size_t>(rng.below(queues.size())), Reason::random_fallback, 0.0};
  }
  return best;
}

SchedulerDecision BfsPolicy::assign(const Transaction& txn, QueueSet& queues, Rng& rng) {
  ++counters_.decisions;
  const std::size_t n = queues.size();
  const std::size_t alpha = static_cast<std::size_t>(rng.below(n));
  std::vector<bool> done(n, false);
  std::unordered_set<TxnId> seen;
  std::size_t remaining = n;
  for (std::size_t step = 0; remaining > 0; ++step) {
    const std::size_t i = (alpha + step) % n;
    if (done[i]) continue;
    const auto& q = queues[i].fifo;
    // The head is inspected in place; nothing else can run between the
    // pseudocode's dequeue and re-enqueue, so a peek is equivalent.
    if (q.empty() || seen.contains(q.front().id) || q.front().id > txn.id) {
      done[i] = true;
      --remaining;
      continue;
    }
    const auto& head = q.front();
    ++counters_.model_evals;
    const double p = model_->predict(txn.features, head.features);
    if (p > theta_) return {i, Reason::threshold_hit, p};
    seen.insert(head.id);
  }
  ++counters_.fallbacks;
  return {alpha, Reason::random_fallback, 0.0};
}

template <BlockingMode Mode>
BalancedVectorPolicy<Mode>::BalancedVectorPolicy(std::shared_ptr<const AbortModel> model)
    : model_(std::move(model)) {
  if (!model_) throw DataError("balanced vector policy needs an abort model");
}

template <BlockingMode Mode>
SchedulerDecision BalancedVectorPolicy<Mode>::assign(const Transaction& txn, QueueSet& queues,
                                                     Rng&) {
  ++counters_.decisions;
  const std::uint32_t k = model_->k_bits();
  if (txn.features.size != k) throw InvariantError("feature vector length does not match model");
  const auto w = model_->weights();
  const double* w1 = w.data();
  const double* w2 = w1 + k;
  const double* w3 = w2 + k;
  if (w2_dot_r_.size() != queues.size()) {
    // Queues may carry R from an earlier policy instance.
    w2_dot_r_.assign(queues.size(), 0.0);
    for (std::size_t i = 0; i < queues.size(); ++i) {
      const auto& r = queues[i].r_sum;
      for (std::size_t j = 0; j < r.size() && j < k; ++j) w2_dot_r_[i] += w2[j] * r[j];
    }
  }

  double base = model_->bias();
  for (auto j : txn.features.ones) base += w1[j];

  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t i = 0; i < queues.size(); ++i) {
    auto& q = queues[i];
    if (q.r_sum.size() != k) q.r_sum.assign(k, 0);
    ++counters_.model_evals;
    double z = base;
    if (q.count > 0) {
      const double inv = 1.0 / static_cast<double>(q.count);
      double v3 = 0.0;
      for (auto j : txn.features.ones) v3 += w3[j] * q.r_sum[j];
      z += (w2_dot_r_[i] + v3) * inv;
    }
    const double p = sigmoid(z);
    if (p >= best_p) {
      best_p = p;
      best = i;
    }
  }
  bool overridden = false;
  const std::size_t target = apply_balance<Mode>(best, queues, counters_, overridden);

  auto& q = queues[target];
  ++q.count;
  for (auto j : txn.features.ones) {
    ++q.r_sum[j];
    w2_dot_r_[target] += w2[j];
  }
  return {target, overridden ? Reason::balance_override : Reason::model_match, best_p};
}

template <BlockingMode Mode>
KMeansPolicy<Mode>::KMeansPolicy(std::shared_ptr<const CentroidSet> centroids, bool balanced)
    : centroids_(std::move(centroids)), balanced_(balanced) {
  if (!centroids_ || centroids_->size() == 0) throw DataError("k-means policy needs centroids");
}

template <BlockingMode Mode>
SchedulerDecision KMeansPolicy<Mode>::assign(const Transaction& txn, QueueSet& queues, Rng&) {
  ++counters_.decisions;
  if (centroids_->size() != queues.size()) {
    throw InvariantError("centroid count does not match queue count");
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids_->size(); ++c) {
    ++counters_.distance_evals;
    const double d = sq_distance(txn.features, *centroids_, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (!balanced_) return {best, Reason::model_match, best_d};
  bool overridden = false;
  const std::size_t target = apply_balance<Mode>(best, queues, counters_, overridden);
  return {target, overridden ? Reason::balance_override : Reason::model_match, best_d};
}

template class BalancedVectorPolicy<BlockingMode::reroute>;
template class BalancedVectorPolicy<BlockingMode::strict>;
template class KMeansPolicy<BlockingMode::reroute>;
template class KMeansPolicy<BlockingMode::strict>;

std::unique_ptr<Policy> make_policy(PolicyKind kind, const PolicyInputs& inputs) {
  if (needs_abort_model(kind) && !inputs.model) {
    throw DataError(std::string(to_string(kind)) + " policy needs a trained abort model");
  }
  switch (kind) {
    case PolicyKind::random: return std::make_unique<RandomPolicy>();
    case PolicyKind::search: return std::make_unique<SearchPolicy>(inputs.model);
    case PolicyKind::bfs: return std::make_unique<BfsPolicy>(inputs.model, inputs.theta);
    case PolicyKind::balanced_vector:
      return std::make_unique<BalancedVectorPolicy<kBlockingMode>>(inputs.model);
    case PolicyKind::balanced_kmeans:
      return std::make_unique<KMeansPolicy<kBlockingMode>>(inputs.centroids, true);
    case PolicyKind::unbalanced_kmeans:
      return std::make_unique<KMeansPolicy<kBlockingMode>>(inputs.centroids, false);
  }
  throw ConfigError("unknown policy");
}

}  // namespace mlsched
