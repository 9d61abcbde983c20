#include "mlsched/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mlsched/errors.hpp"

namespace mlsched {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

double to_double(std::string_view key, std::string_view v) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) bad_value(key, v);
  return x;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

std::int64_t to_i64(std::string_view key, std::string_view v) {
  std::int64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

KeyDistribution to_dist(std::string_view key, std::string_view v) {
  if (v == "uniform") return KeyDistribution::uniform;
  if (v == "zipfian") return KeyDistribution::zipfian;
  bad_value(key, v);
}

std::string_view dist_name(KeyDistribution d) { return d == KeyDistribution::uniform ? "uniform" : "zipfian"; }

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"workload.kind", [](auto& c, auto, auto v) { c.workload.kind = parse_workload_kind(v); }},
      {"workload.scale", [](auto& c, auto k, auto v) { c.workload.scale = to_i64(k, v); }},
      {"workload.zipf_s", [](auto& c, auto k, auto v) { c.workload.zipf_s = to_double(k, v); }},
      {"workload.arrival_rate_tps",
       [](auto& c, auto k, auto v) { c.workload.arrival_rate_tps = to_double(k, v); }},
      {"workload.deterministic_arrivals",
       [](auto& c, auto k, auto v) { c.workload.deterministic_arrivals = to_bool(k, v); }},
      {"workload.user_dist", [](auto& c, auto k, auto v) { c.workload.user_dist = to_dist(k, v); }},
      {"workload.item_dist", [](auto& c, auto k, auto v) { c.workload.item_dist = to_dist(k, v); }},
      {"experiment.policy", [](auto& c, auto, auto v) { c.policy = parse_policy(v); }},
      {"experiment.queues", [](auto& c, auto k, auto v) { c.n_queues = to_u64(k, v); }},
      {"experiment.k_bits",
       [](auto& c, auto k, auto v) { c.k_bits = static_cast<std::uint32_t>(to_u64(k, v)); }},
      {"experiment.warmup_s", [](auto& c, auto k, auto v) { c.warmup_s = to_double(k, v); }},
      {"experiment.measure_s", [](auto& c, auto k, auto v) { c.measure_s = to_double(k, v); }},
      {"experiment.repeats", [](auto& c, auto k, auto v) { c.repeats = to_u64(k, v); }},
      {"experiment.seed", [](auto& c, auto k, auto v) { c.seed = to_u64(k, v); }},
      {"experiment.theta", [](auto& c, auto k, auto v) { c.theta = to_double(k, v); }},
      {"experiment.jobs", [](auto& c, auto k, auto v) { c.jobs = to_u64(k, v); }},
      {"experiment.rt_window", [](auto& c, auto k, auto v) { c.rt_window = to_u64(k, v); }},
      {"experiment.backlog_cap", [](auto& c, auto k, auto v) { c.backlog_cap = to_u64(k, v); }},
      {"experiment.idle_poll_us", [](auto& c, auto k, auto v) { c.idle_poll_us = to_i64(k, v); }},
      {"train.sample_size", [](auto& c, auto k, auto v) { c.train_sample_size = to_u64(k, v); }},
      {"train.sample_mode",
       [](auto& c, auto k, auto v) {
         if (v == "uniform") {
           c.sample_mode = SampleMode::uniform;
         } else if (v == "balanced") {
           c.sample_mode = SampleMode::balanced;
         } else {
           bad_value(k, v);
         }
       }},
      {"train.learning_rate", [](auto& c, auto k, auto v) { c.hyper.learning_rate = to_double(k, v); }},
      {"train.epochs", [](auto& c, auto k, auto v) { c.hyper.epochs = static_cast<int>(to_i64(k, v)); }},
      {"train.l2", [](auto& c, auto k, auto v) { c.hyper.l2 = to_double(k, v); }},
      {"train.kmeans_restarts", [](auto& c, auto k, auto v) { c.kmeans.restarts = to_u64(k, v); }},
      {"train.kmeans_max_iters", [](auto& c, auto k, auto v) { c.kmeans.max_iters = to_u64(k, v); }},
      {"rounds.count", [](auto& c, auto k, auto v) { c.rounds = to_u64(k, v); }},
      {"rounds.duration_s", [](auto& c, auto k, auto v) { c.round_s = to_double(k, v); }},
      {"rounds.sample_size", [](auto& c, auto k, auto v) { c.round_sample_size = to_u64(k, v); }},
      {"sweep.rates", [](auto& c, auto, auto v) { c.rates = parse_rate_list(v); }},
  };
  return table;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, p);
}

std::vector<double> parse_rate_list(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      const auto item = trim(text.substr(start, i - start));
      const double r = to_double("rates", item);
      if (!(r > 0)) bad_value("rates", item);
      out.push_back(r);
      start = i + 1;
    }
  }
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key.rfind("service.", 0) == 0) {
    const auto t = parse_txn_type(key.substr(8));
    if (!t) throw ConfigError("unknown transaction type in key '" + std::string(key) + "'");
    cfg.workload.service.set(*t, to_i64(key, value));
    return;
  }
  if (key.rfind("mix.", 0) == 0) {
    const auto t = parse_txn_type(key.substr(4));
    if (!t) throw ConfigError("unknown transaction type in key '" + std::string(key) + "'");
    const double w = to_double(key, value);
    if (!(w >= 0)) bad_value(key, value);
    if (cfg.workload.mix.empty() || workload_of(cfg.workload.mix.front().first) != workload_of(*t)) {
      cfg.workload.mix = type_mix(workload_of(*t));
    }
    for (auto& [type, p] : cfg.workload.mix) {
      if (type == *t) p = w;
    }
    return;
  }
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = trim(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = trim(s.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(base, s.substr(0, eq), s.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> e;
  auto add = [&](std::string k, std::string v) { e.emplace_back(std::move(k), std::move(v)); };
  const auto& w = c.workload;
  add("workload.kind", std::string(to_string(w.kind)));
  add("workload.scale", std::to_string(w.scale));
  add("workload.zipf_s", format_double(w.zipf_s));
  add("workload.arrival_rate_tps", format_double(w.arrival_rate_tps));
  add("workload.deterministic_arrivals", w.deterministic_arrivals ? "true" : "false");
  add("workload.user_dist", std::string(dist_name(w.user_dist)));
  add("workload.item_dist", std::string(dist_name(w.item_dist)));
  for (const auto& [t, p] : w.mix) add("mix." + std::string(to_string(t)), format_double(p));
  for (std::size_t i = 0; i < kTxnTypeCount; ++i) {
    const auto t = static_cast<TxnType>(i);
    if (workload_of(t) == w.kind) {
      add("service." + std::string(to_string(t)), std::to_string(w.service.get(t)));
    }
  }
  add("experiment.policy", std::string(to_string(c.policy)));
  add("experiment.queues", std::to_string(c.n_queues));
  add("experiment.k_bits", std::to_string(c.k_bits));
  add("experiment.warmup_s", format_double(c.warmup_s));
  add("experiment.measure_s", format_double(c.measure_s));
  add("experiment.repeats", std::to_string(c.repeats));
  add("experiment.seed", std::to_string(c.seed));
  add("experiment.theta", format_double(c.theta));
  add("experiment.jobs", std::to_string(c.jobs));
  add("experiment.rt_window", std::to_string(c.rt_window));
  add("experiment.backlog_cap", std::to_string(c.backlog_cap));
  add("experiment.idle_poll_us", std::to_string(c.idle_poll_us));
  add("train.sample_size", std::to_string(c.train_sample_size));
  add("train.sample_mode", c.sample_mode == SampleMode::uniform ? "uniform" : "balanced");
  add("train.learning_rate", format_double(c.hyper.learning_rate));
  add("train.epochs", std::to_string(c.hyper.epochs));
  add("train.l2", format_double(c.hyper.l2));
  add("train.kmeans_restarts", std::to_string(c.kmeans.restarts));
  add("train.kmeans_max_iters", std::to_string(c.kmeans.max_iters));
  add("rounds.count", std::to_string(c.rounds));
  add("rounds.duration_s", format_double(c.round_s));
  add("rounds.sample_size", std::to_string(c.round_sample_size));
  std::string rates;
  for (std::size_t i = 0; i < c.rates.size(); ++i) {
    if (i) rates += ',';
    rates += format_double(c.rates[i]);
  }
  if (!rates.empty()) add("sweep.rates", rates);
  return e;
}

}  // namespace mlsched
