#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mlsched/audit.hpp"
#include "mlsched/config.hpp"
#include "mlsched/errors.hpp"
#include "mlsched/harness.hpp"

namespace mlsched {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::string policy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> queues;
  std::optional<std::uint32_t> k_bits;
  std::optional<double> theta;
  std::string rates;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> jobs;
  std::string output = ".";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config_path, "Experiment config file (key = value)");
  if (needs_config) c->required();
  cmd->add_option("--policy", o.policy,
                  "random | search | bfs | balanced_vector | balanced_kmeans | unbalanced_kmeans");
  cmd->add_option("--seed", o.seed, "Base seed for every random stream");
  cmd->add_option("--queues", o.queues, "Number of queues (one worker each)");
  cmd->add_option("--k-bits", o.k_bits, "Feature vector length");
  cmd->add_option("--theta", o.theta, "BFS abort-probability threshold");
  cmd->add_option("--jobs", o.jobs, "Independent simulations run concurrently");
  cmd->add_option("--output", o.output, "Output directory");
  cmd->add_option("--set", o.overrides, "Config override key=value (repeatable)");
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  for (const auto& s : o.overrides) apply_override(cfg, s);
  if (!o.policy.empty()) cfg.policy = parse_policy(o.policy);
  if (o.seed) cfg.seed = *o.seed;
  if (o.queues) cfg.n_queues = *o.queues;
  if (o.k_bits) cfg.k_bits = *o.k_bits;
  if (o.theta) cfg.theta = *o.theta;
  if (!o.rates.empty()) cfg.rates = parse_rate_list(o.rates);
  if (o.rounds) cfg.rounds = *o.rounds;
  if (o.jobs) cfg.jobs = *o.jobs;
  cfg.validate();
  return cfg;
}

fs::path output_dir(const CommonOptions& o) {
  fs::path dir(o.output);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << content;
}

void print_report(std::ostream& out, const Report& r) {
  out << std::fixed << std::setprecision(4);
  out << to_string(r.workload) << ' ' << to_string(r.policy) << " @ " << r.arrival_rate_tps << " tps\n"
      << "  throughput_tps      " << r.throughput_tps << '\n'
      << "  relative_throughput " << r.relative_throughput << '\n'
      << "  abort_rate          " << r.abort_rate << '\n'
      << "  rt_mean_s           " << r.rt_mean_s << '\n'
      << "  rt_p95_s            " << r.rt_p95_s << '\n'
      << "  idle_std_s          " << r.idle_std_s << '\n'
      << "  partition_quality   " << r.partition_quality << '\n'
      << "  saturated           " << (r.saturated ? "yes" : "no") << '\n'
      << "  model_fallback      " << (r.model_fallback ? "yes" : "no") << '\n';
  out.unsetf(std::ios::floatfield);
}

// Feature strings that hash to each bit, from a sample of generated
// transactions.
std::map<std::uint32_t, std::vector<std::string>> feature_dictionary(const ExperimentConfig& cfg,
                                                                     std::size_t samples) {
  WorkloadConfig wc = resolve(cfg.workload, cfg.n_queues);
  wc.rng_seed = cfg.seed;
  WorkloadGenerator gen(wc);
  const auto& canon = canon_map(wc.kind);
  std::map<std::uint32_t, std::vector<std::string>> dict;
  for (std::size_t i = 0; i < samples; ++i) {
    const Transaction t = gen.next_arrival();
    for (const auto& f : extract_features(t.refs, canon)) {
      auto& names = dict[static_cast<std::uint32_t>(fnv1a64(f) % cfg.k_bits)];
      if (names.size() < 4 && std::find(names.begin(), names.end(), f) == names.end()) names.push_back(f);
    }
  }
  return dict;
}

std::map<std::uint32_t, std::vector<std::string>> read_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open feature dictionary '" + path + "'");
  std::map<std::uint32_t, std::vector<std::string>> dict;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::uint32_t bit = 0;
    std::string name;
    if (!(ls >> bit)) throw FormatError("malformed feature dictionary line: " + line);
    while (ls >> name) dict[bit].push_back(name);
  }
  return dict;
}

int cmd_run(const CommonOptions& o, bool trace, std::ostream& out) {
  const ExperimentConfig cfg = build_config(o);
  const auto dir = output_dir(o);
  std::unique_ptr<GzTraceSink> sink;
  RunHooks hooks;
  if (trace) {
    sink = std::make_unique<GzTraceSink>((dir / "trace.csv.gz").string());
    hooks.trace = sink.get();
  }
  const Report r = run_experiment(cfg, trace ? &hooks : nullptr);
  if (sink) sink->close();
  write_file(dir / "report.csv", report_csv_header() + report_csv_rows(r));
  write_file(dir / "report.json", report_json(r));
  print_report(out, r);
  return 0;
}

int cmd_sweep(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = build_config(o);
  if (cfg.rates.empty()) throw ConfigError("sweep needs --rates or sweep.rates");
  const auto dir = output_dir(o);
  const SweepReport s = sweep_arrival_rate(cfg, cfg.rates);
  const std::string csv = sweep_csv(s);
  write_file(dir / "sweep.csv", csv);
  out << csv;
  return 0;
}

int cmd_rounds(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = build_config(o);
  const auto dir = output_dir(o);
  const RoundsReport r = run_rounds(cfg);
  const std::string csv = rounds_csv(r);
  write_file(dir / "rounds.csv", csv);
  out << csv;
  return 0;
}

int cmd_train(const CommonOptions& o, std::size_t folds, std::ostream& out) {
  ExperimentConfig cfg = build_config(o);
  const auto dir = output_dir(o);
  const auto log = collect_warmup_log(cfg, 0);
  {
    std::ofstream f(dir / "log.csv");
    write_log(f, log);
  }
  Rng rng(repeat_seeds(cfg.seed, 0).training);
  const auto examples = build_training_set(log, cfg.train_sample_size, rng, cfg.sample_mode);
  const CvResult cv = cross_validate(examples, folds, cfg.hyper);
  const AbortModel model = train(examples, cfg.hyper);
  {
    std::ofstream f(dir / "model.txt");
    save_model(f, model);
  }
  std::size_t aborts = 0;
  for (const auto& r : log) aborts += r.kind == LogKind::abort;
  if (aborts > 0) {
    const auto points = abort_vectors(log, cfg.train_sample_size, rng);
    const CentroidSet cs = kmeans_fit(points, cfg.n_queues, rng, cfg.kmeans);
    std::ofstream f(dir / "centroids.txt");
    save_centroids(f, cs);
  }
  {
    std::ofstream f(dir / "features.tsv");
    f << "# bit feature...\n";
    for (const auto& [bit, names] : feature_dictionary(cfg, 20000)) {
      f << bit;
      for (const auto& n : names) f << '\t' << n;
      f << '\n';
    }
  }
  out << "log_records " << log.size() << " (aborts " << aborts << ")\n"
      << "examples " << examples.size() << " (positives " << cv.positives << ", negatives "
      << cv.negatives << ")\n"
      << "cv_accuracy " << format_double(cv.accuracy) << '\n'
      << "majority_baseline " << format_double(cv.majority_baseline) << '\n';
  for (std::size_t f = 0; f < cv.fold_accuracy.size(); ++f) {
    out << "fold_" << f << ' ' << format_double(cv.fold_accuracy[f]) << '\n';
  }
  return 0;
}

int cmd_inspect(const std::string& model_path, std::size_t top, const std::string& dict_path,
                std::ostream& out) {
  std::ifstream in(model_path);
  if (!in) throw std::runtime_error("cannot open model '" + model_path + "'");
  const AbortModel m = load_model(in);
  std::map<std::uint32_t, std::vector<std::string>> dict;
  if (!dict_path.empty()) dict = read_dictionary(dict_path);
  const auto w = m.weights();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(w[a]) > std::abs(w[b]); });
  if (idx.size() > top) idx.resize(top);
  out << "k_bits " << m.k_bits() << " bias " << format_double(m.bias()) << " nonzero "
      << m.nonzero_weights() << '\n';
  static constexpr const char* kSegments[] = {"V1", "V2", "V3"};
  for (auto i : idx) {
    const auto seg = i / m.k_bits();
    const auto bit = static_cast<std::uint32_t>(i % m.k_bits());
    out << kSegments[seg] << '[' << bit << "]\t" << format_double(w[i]);
    if (auto it = dict.find(bit); it != dict.end()) {
      out << '\t';
      for (std::size_t n = 0; n < it->second.size(); ++n) out << (n ? "|" : "") << it->second[n];
    }
    out << '\n';
  }
  return 0;
}

int cmd_audit(const std::string& path, std::ostream& out) {
  const AuditReport r = audit_trace_file(path);
  out << "lines " << r.lines << "\narrivals " << r.arrivals << "\nattempts " << r.starts
      << "\ncommits " << r.commits << "\naborts " << r.aborts << "\nviolations " << r.violation_count
      << '\n';
  for (const auto& v : r.violations) out << "  " << v << '\n';
  if (!r.ok()) throw std::runtime_error("trace audit found violations");
  return 0;
}

int cmd_distributions(const CommonOptions& o, bool trace, std::ostream& out) {
  ExperimentConfig cfg = build_config(o);
  const auto dir = output_dir(o);
  std::ofstream decisions(dir / "decisions.csv");
  decisions << "txn_id,policy,queue,reason,score,key\n";
  std::vector<DecisionRecord> records;
  std::unique_ptr<GzTraceSink> sink;
  RunHooks hooks;
  if (trace) {
    sink = std::make_unique<GzTraceSink>((dir / "trace.csv.gz").string());
    hooks.trace = sink.get();
  }
  hooks.decisions = [&](const Transaction& t, PolicyKind p, const SchedulerDecision& d) {
    if (!t.measured) return;
    decisions << t.id << ',' << to_string(p) << ',' << d.queue_index << ',' << to_string(d.reason)
              << ',' << format_double(d.score) << ',' << t.partition_key << '\n';
    records.push_back({t.id, d.queue_index, t.partition_key});
  };
  cfg.repeats = 1;
  const Report r = run_experiment_raw(cfg, &hooks);
  if (sink) sink->close();
  const DistributionMatrix m = distribution_matrix(records, cfg.n_queues);
  write_file(dir / "distribution.csv", distribution_csv(m));
  out << "partition_quality " << format_double(m.partition_quality) << '\n';
  print_report(out, r);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transaction-scheduling simulator with learned abort models", "mlsched"};
  app.require_subcommand(1);
  app.fallthrough(false);

  CommonOptions run_o;
  bool run_trace = false;
  auto* run = app.add_subcommand("run", "Warm-up, train, measure; writes report.csv and report.json");
  add_common(run, run_o);
  run->add_flag("--trace", run_trace, "Write the measured phase's event trace to trace.csv.gz");

  CommonOptions sweep_o;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per arrival rate; writes sweep.csv");
  add_common(sweep, sweep_o);
  sweep->add_option("--rates", sweep_o.rates, "Ascending comma-separated arrival rates (tps)");

  CommonOptions rounds_o;
  auto* rounds = app.add_subcommand("rounds", "Round-based retraining; writes rounds.csv");
  add_common(rounds, rounds_o);
  rounds->add_option("--rounds", rounds_o.rounds, "Number of retraining rounds after round 0");

  CommonOptions train_o;
  std::size_t folds = 4;
  auto* trainc = app.add_subcommand(
      "train", "Warm-up log, cross-validation, model, centroids and feature dictionary");
  add_common(trainc, train_o);
  trainc->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 100));

  std::string model_path;
  std::string dict_path;
  std::size_t top = 20;
  auto* inspect = app.add_subcommand("inspect-model", "List the largest model weights");
  inspect->add_option("model", model_path, "Serialized model file")->required();
  inspect->add_option("--top", top, "Number of weights to list");
  inspect->add_option("--features", dict_path, "Feature dictionary written by `train`");

  std::string trace_path;
  auto* audit = app.add_subcommand("audit", "Check engine invariants over an event trace");
  audit->add_option("--trace,trace", trace_path, "Trace file (plain or gzip)")->required();

  CommonOptions dist_o;
  bool dist_trace = false;
  auto* dist = app.add_subcommand("distributions",
                                  "Per-queue key distribution; writes decisions.csv and distribution.csv");
  add_common(dist, dist_o);
  dist->add_flag("--trace", dist_trace, "Also write trace.csv.gz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*run) return cmd_run(run_o, run_trace, out);
    if (*sweep) return cmd_sweep(sweep_o, out);
    if (*rounds) return cmd_rounds(rounds_o, out);
    if (*trainc) return cmd_train(train_o, folds, out);
    if (*inspect) return cmd_inspect(model_path, top, dict_path, out);
    if (*audit) return cmd_audit(trace_path, out);
    if (*dist) return cmd_distributions(dist_o, dist_trace, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace mlsched
