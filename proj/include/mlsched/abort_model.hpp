#pragma once

// Pairwise abort predictor: labeled pair examples drawn from the execution
// log and an L2-regularized logistic regression over V1|V2|(V1&V2).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mlsched/feature.hpp"
#include "mlsched/rng.hpp"
#include "mlsched/workload.hpp"

namespace mlsched {

enum class LogKind : std::uint8_t { abort, commit };

struct LogRecord {
  LogKind kind = LogKind::commit;
  TxnId subject_id = 0;
  TxnId other_id = 0;
  Micros timestamp = 0;
  FeatureVector subject_features;
  FeatureVector other_features;
};

struct PairExample {
  PairVector x;
  int y = 0;
};

struct Hyper {
  double learning_rate = 0.1;
  int epochs = 10;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
};

// `uniform` samples records without replacement regardless of label;
// `balanced` draws equal counts from each label, up to half the sample size
// and limited by the scarcer label, so that the majority baseline sits at 0.5.
enum class SampleMode : std::uint8_t { uniform, balanced };

std::vector<PairExample> build_training_set(const std::vector<LogRecord>& log,
                                            std::size_t sample_size, Rng& rng,
                                            SampleMode mode = SampleMode::uniform);

double sigmoid(double z);

class AbortModel {
 public:
  AbortModel() = default;
  explicit AbortModel(std::uint32_t k_bits);

  std::uint32_t k_bits() const { return k_bits_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> weights() { return weights_; }
  double bias() const { return bias_; }
  void set_bias(double b) { bias_ = b; }
  const Hyper& hyper() const { return hyper_; }
  void set_hyper(const Hyper& h) { hyper_ = h; }

  double logit(const SparseBits& pair) const;
  double predict(const SparseBits& pair) const { return sigmoid(logit(pair)); }
  // M(T1, T2): cost proportional to the set bits of the pair.
  double predict(const FeatureVector& v1, const FeatureVector& v2) const;
  // Reference dense evaluation, used to cross-check the sparse path.
  double predict_dense(const std::vector<std::uint8_t>& pair) const;

  // M' on a fractional second argument: v | r_avg | (v * r_avg).
  double predict_centroid(const FeatureVector& v, std::span<const double> r_avg) const;

  std::size_t nonzero_weights() const;

 private:
  std::uint32_t k_bits_ = 0;
  std::vector<double> weights_;
  double bias_ = 0.0;
  Hyper hyper_;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // regularized mean loss after each epoch
};

// Throws DataError when the set is empty, single-class, or carries no set
// bits at all.
AbortModel train(const std::vector<PairExample>& examples, const Hyper& hyper,
                 TrainReport* report = nullptr);

// Mean regularized loss: mean log-loss + l2/2 * |w|^2 (bias excluded).
double objective(const AbortModel& model, const std::vector<PairExample>& examples, double l2);

// Gradient of the single-example regularized loss with respect to
// (weights..., bias), dense.
std::vector<double> example_gradient(const AbortModel& model, const PairExample& ex, double l2);
double example_loss(const AbortModel& model, const PairExample& ex, double l2);

struct CvResult {
  double accuracy = 0.0;
  std::vector<double> fold_accuracy;
  double majority_baseline = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

CvResult cross_validate(const std::vector<PairExample>& examples, std::size_t folds,
                        const Hyper& hyper);

// Versioned text serialization.
void save_model(std::ostream& out, const AbortModel& model);
AbortModel load_model(std::istream& in);

void write_log(std::ostream& out, const std::vector<LogRecord>& log);
std::vector<LogRecord> read_log(std::istream& in);

}  // namespace mlsched
