#include "mlsched/abort_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "mlsched/errors.hpp"

namespace mlsched {

namespace {

constexpr std::string_view kModelMagic = "mlsched-model";
constexpr std::string_view kLogMagic = "# mlsched-log";
constexpr int kFormatVersion = 1;

void require_length(const SparseBits& pair, std::uint32_t k_bits) {
  if (pair.size != 3 * k_bits) {
    throw InvariantError("pair vector length " + std::to_string(pair.size) +
                         " does not match model length " + std::to_string(3 * k_bits));
  }
}

double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// -log p(y | z) for the logistic model.
double logistic_loss(double z, int y) { return y ? log1pexp(-z) : log1pexp(z); }

std::vector<std::size_t> sample_indices(std::vector<std::size_t> pool, std::size_t n, Rng& rng) {
  n = std::min(n, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<PairExample> build_training_set(const std::vector<LogRecord>& log,
                                            std::size_t sample_size, Rng& rng, SampleMode mode) {
  if (log.empty()) throw DataError("no training data: execution log is empty");
  std::vector<std::size_t> chosen;
  if (mode == SampleMode::uniform) {
    std::vector<std::size_t> all(log.size());
    std::iota(all.begin(), all.end(), 0);
    chosen = sample_indices(std::move(all), sample_size, rng);
  } else {
    std::vector<std::size_t> aborts;
    std::vector<std::size_t> commits;
    for (std::size_t i = 0; i < log.size(); ++i) {
      (log[i].kind == LogKind::abort ? aborts : commits).push_back(i);
    }
    // Equal counts per label, limited by the scarcer one.
    const std::size_t each = std::max<std::size_t>(
        1, std::min({sample_size / 2, aborts.size(), commits.size()}));
    chosen = sample_indices(std::move(aborts), each, rng);
    auto c = sample_indices(std::move(commits), each, rng);
    chosen.insert(chosen.end(), c.begin(), c.end());
    shuffle(chosen, rng);
  }
  std::vector<PairExample> out;
  out.reserve(chosen.size());
  for (auto i : chosen) {
    const auto& r = log[i];
    out.push_back({pair_vector(r.subject_features, r.other_features), r.kind == LogKind::abort});
  }
  return out;
}

// AbortModel -----------------------------------------------------------------

AbortModel::AbortModel(std::uint32_t k_bits) : k_bits_(k_bits), weights_(3 * std::size_t{k_bits}, 0.0) {}

double AbortModel::logit(const SparseBits& pair) const {
  require_length(pair, k_bits_);
  double z = bias_;
  for (auto i : pair.ones) z += weights_[i];
  return z;
}

double AbortModel::predict(const FeatureVector& v1, const FeatureVector& v2) const {
  if (v1.size != k_bits_ || v2.size != k_bits_) {
    throw InvariantError("feature vector length does not match model k_bits");
  }
  const double* w1 = weights_.data();
  const double* w2 = w1 + k_bits_;
  const double* w3 = w2 + k_bits_;
  double z = bias_;
  auto a = v1.ones.begin();
  auto b = v2.ones.begin();
  while (a != v1.ones.end() || b != v2.ones.end()) {
    if (b == v2.ones.end() || (a != v1.ones.end() && *a < *b)) {
      z += w1[*a++];
    } else if (a == v1.ones.end() || *b < *a) {
      z += w2[*b++];
    } else {
      z += w1[*a] + w2[*b] + w3[*a];
      ++a;
      ++b;
    }
  }
  return sigmoid(z);
}

double AbortModel::predict_dense(const std::vector<std::uint8_t>& pair) const {
  if (pair.size() != weights_.size()) throw InvariantError("dense pair length mismatch");
  double z = bias_;
  for (std::size_t i = 0; i < pair.size(); ++i) z += weights_[i] * pair[i];
  return sigmoid(z);
}

double AbortModel::predict_centroid(const FeatureVector& v, std::span<const double> r_avg) const {
  if (v.size != k_bits_ || r_avg.size() != k_bits_) {
    throw InvariantError("centroid length does not match model k_bits");
  }
  const double* w1 = weights_.data();
  const double* w2 = w1 + k_bits_;
  const double* w3 = w2 + k_bits_;
  double z = bias_;
  for (std::uint32_t j = 0; j < k_bits_; ++j) {
    const double r = r_avg[j];
    if (!(r >= 0.0 && r <= 1.0)) throw InvariantError("centroid entry outside [0,1]");
    z += w2[j] * r;
  }
  for (auto i : v.ones) z += w1[i] + w3[i] * r_avg[i];
  return sigmoid(z);
}

std::size_t AbortModel::nonzero_weights() const {
  return static_cast<std::size_t>(
      std::count_if(weights_.begin(), weights_.end(), [](double w) { return w != 0.0; }));
}

// Training -------------------------------------------------------------------

double example_loss(const AbortModel& model, const PairExample& ex, double l2) {
  double sq = 0.0;
  for (double w : model.weights()) sq += w * w;
  return logistic_loss(model.logit(ex.x), ex.y) + 0.5 * l2 * sq;
}

std::vector<double> example_gradient(const AbortModel& model, const PairExample& ex, double l2) {
  const auto w = model.weights();
  std::vector<double> g(w.size() + 1);
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = l2 * w[i];
  const double r = model.predict(ex.x) - ex.y;
  for (auto i : ex.x.ones) g[i] += r;
  g.back() = r;
  return g;
}

double objective(const AbortModel& model, const std::vector<PairExample>& examples, double l2) {
  if (examples.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& ex : examples) loss += logistic_loss(model.logit(ex.x), ex.y);
  double sq = 0.0;
  for (double w : model.weights()) sq += w * w;
  return loss / static_cast<double>(examples.size()) + 0.5 * l2 * sq;
}

AbortModel train(const std::vector<PairExample>& examples, const Hyper& hyper,
                 TrainReport* report) {
  if (examples.empty()) throw DataError("no training data");
  if (hyper.learning_rate <= 0 || hyper.epochs < 1 || hyper.l2 < 0) {
    throw ConfigError("invalid training hyperparameters");
  }
  const std::uint32_t size = examples.front().x.size;
  if (size == 0 || size % 3 != 0) throw InvariantError("pair vector length must be a positive multiple of 3");
  std::size_t positives = 0;
  bool any_bits = false;
  for (const auto& ex : examples) {
    if (ex.x.size != size) throw InvariantError("pair vectors of different lengths in training set");
    positives += ex.y != 0;
    any_bits = any_bits || !ex.x.ones.empty();
  }
  if (positives == 0 || positives == examples.size()) {
    throw DataError("degenerate training data: only one label present");
  }
  if (!any_bits) throw DataError("degenerate training data: no feature bits set");

  AbortModel model(size / 3);
  model.set_hyper(hyper);
  // Weights are kept as scale * u so the L2 shrink costs O(1) per step.
  std::vector<double> u(size, 0.0);
  double scale = 1.0;
  double bias = 0.0;
  const double lr = hyper.learning_rate;
  const double shrink = 1.0 - lr * hyper.l2;
  if (shrink <= 0.0) throw ConfigError("learning_rate * l2 must be below 1");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hyper.seed);

  auto materialize = [&] {
    auto w = model.weights();
    for (std::size_t i = 0; i < size; ++i) w[i] = scale * u[i];
    model.set_bias(bias);
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle(order, rng);
    for (auto idx : order) {
      const auto& ex = examples[idx];
      double dot = 0.0;
      for (auto i : ex.x.ones) dot += u[i];
      const double g = sigmoid(bias + scale * dot) - ex.y;
      scale *= shrink;
      const double step = lr * g / scale;
      for (auto i : ex.x.ones) u[i] -= step;
      bias -= lr * g;
      if (scale < 1e-9) {
        for (auto& x : u) x *= scale;
        scale = 1.0;
      }
    }
    if (report) {
      materialize();
      report->epoch_loss.push_back(objective(model, examples, hyper.l2));
    }
  }
  materialize();
  for (double w : model.weights()) {
    if (!std::isfinite(w)) throw DataError("training diverged: non-finite weight");
  }
  return model;
}

CvResult cross_validate(const std::vector<PairExample>& examples, std::size_t folds,
                        const Hyper& hyper) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (examples.size() < folds) throw DataError("fewer examples than folds");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < examples.size(); ++i) (examples[i].y ? pos : neg).push_back(i);
  Rng rng(derive_seed(hyper.seed, 0xcf));
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::size_t> fold_of(examples.size());
  std::size_t next = 0;
  for (auto i : pos) fold_of[i] = next++ % folds;
  for (auto i : neg) fold_of[i] = next++ % folds;

  CvResult result;
  result.positives = pos.size();
  result.negatives = neg.size();
  result.majority_baseline =
      static_cast<double>(std::max(pos.size(), neg.size())) / static_cast<double>(examples.size());
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<PairExample> train_set;
    std::vector<const PairExample*> test_set;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (fold_of[i] == f) {
        test_set.push_back(&examples[i]);
      } else {
        train_set.push_back(examples[i]);
      }
    }
    const AbortModel m = train(train_set, hyper);
    std::size_t correct = 0;
    for (const auto* ex : test_set) correct += (m.predict(ex->x) >= 0.5) == (ex->y != 0);
    result.fold_accuracy.push_back(static_cast<double>(correct) /
                                   static_cast<double>(test_set.size()));
  }
  result.accuracy = std::accumulate(result.fold_accuracy.begin(), result.fold_accuracy.end(), 0.0) /
                    static_cast<double>(folds);
  return result;
}

// Serialization --------------------------------------------------------------

void save_model(std::ostream& out, const AbortModel& model) {
  const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
  const auto& h = model.hyper();
  out << kModelMagic << " v" << kFormatVersion << '\n';
  out << "k_bits " << model.k_bits() << '\n';
  out << "bias " << model.bias() << '\n';
  out << "hyper " << h.learning_rate << ' ' << h.epochs << ' ' << h.l2 << ' ' << h.seed << '\n';
  out << "weights " << model.nonzero_weights() << '\n';
  const auto w = model.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) out << i << ' ' << w[i] << '\n';
  }
  out << "end\n";
  out.precision(prec);
}

namespace {

template <typename T>
T expect_field(std::istream& in, std::string_view name) {
  std::string tag;
  T value{};
  if (!(in >> tag) || tag != name || !(in >> value)) {
    throw FormatError("model file: expected '" + std::string(name) + "'");
  }
  return value;
}

}  // namespace

AbortModel load_model(std::istream& in) {
  std::string magic;
  std::string version;
  if (!(in >> magic >> version) || magic != kModelMagic) throw FormatError("not a model file");
  if (version != "v" + std::to_string(kFormatVersion)) {
    throw FormatError("unsupported model version '" + version + "'");
  }
  const auto k = expect_field<std::uint32_t>(in, "k_bits");
  if (k == 0) throw FormatError("model file: k_bits must be positive");
  AbortModel model(k);
  model.set_bias(expect_field<double>(in, "bias"));
  Hyper h;
  h.learning_rate = expect_field<double>(in, "hyper");
  if (!(in >> h.epochs >> h.l2 >> h.seed)) throw FormatError("model file: malformed hyper line");
  model.set_hyper(h);
  const auto n = expect_field<std::size_t>(in, "weights");
  auto w = model.weights();
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t i = 0;
    double v = 0.0;
    if (!(in >> i >> v)) throw FormatError("model file truncated in weight list");
    if (i >= w.size()) throw FormatError("model file: weight index out of range");
    if (!std::isfinite(v)) throw FormatError("model file: non-finite weight");
    w[i] = v;
  }
  std::string end;
  if (!(in >> end) || end != "end") throw FormatError("model file truncated: missing end marker");
  if (!std::isfinite(model.bias())) throw FormatError("model file: non-finite bias");
  return model;
}

namespace {

void write_ones(std::ostream& out, const SparseBits& v) {
  for (std::size_t i = 0; i < v.ones.size(); ++i) {
    if (i) out << ' ';
    out << v.ones[i];
  }
}

FeatureVector parse_ones(std::string_view text, std::uint32_t k_bits) {
  std::vector<std::uint32_t> ones;
  std::istringstream in{std::string(text)};
  std::uint64_t x = 0;
  while (in >> x) {
    if (x >= k_bits) throw FormatError("log record: bit index out of range");
    ones.push_back(static_cast<std::uint32_t>(x));
  }
  if (!in.eof()) throw FormatError("log record: malformed bit list");
  std::sort(ones.begin(), ones.end());
  ones.erase(std::unique(ones.begin(), ones.end()), ones.end());
  return FeatureVector::from_ones(k_bits, std::move(ones));
}

}  // namespace

void write_log(std::ostream& out, const std::vector<LogRecord>& log) {
  out << kLogMagic << " v" << kFormatVersion << '\n';
  out << "# kind,subject_id,other_id,timestamp_us,k_bits,subject_bits,other_bits\n";
  for (const auto& r : log) {
    out << (r.kind == LogKind::abort ? "abort" : "commit") << ',' << r.subject_id << ','
        << r.other_id << ',' << r.timestamp << ',' << r.subject_features.size << ',';
    write_ones(out, r.subject_features);
    out << ',';
    write_ones(out, r.other_features);
    out << '\n';
  }
}

std::vector<LogRecord> read_log(std::istream& in) {
  std::vector<LogRecord> log;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind(kLogMagic, 0) == 0) {
        if (line != std::string(kLogMagic) + " v" + std::to_string(kFormatVersion)) {
          throw FormatError("unsupported log version: " + line);
        }
        header = true;
      }
      continue;
    }
    if (!header) throw FormatError("log file missing version header");
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 7) throw FormatError("log line " + std::to_string(lineno) + ": expected 7 fields");
    LogRecord r;
    if (f[0] == "abort") {
      r.kind = LogKind::abort;
    } else if (f[0] == "commit") {
      r.kind = LogKind::commit;
    } else {
      throw FormatError("log line " + std::to_string(lineno) + ": unknown kind '" + f[0] + "'");
    }
    try {
      r.subject_id = std::stoull(f[1]);
      r.other_id = std::stoull(f[2]);
      r.timestamp = std::stoll(f[3]);
      const auto k = static_cast<std::uint32_t>(std::stoul(f[4]));
      if (k == 0) throw FormatError("k_bits must be positive");
      r.subject_features = parse_ones(f[5], k);
      r.other_features = parse_ones(f[6], k);
    } catch (const std::logic_error&) {
      throw FormatError("log line " + std::to_string(lineno) + ": malformed number");
    }
    log.push_back(std::move(r));
  }
  return log;
}

}  // namespace mlsched
