#pragma once

#include "rdiv/data.hpp"
#include "rdiv/models.hpp"

#include <vector>

namespace rdiv {

/// Index partition of one batch into predicted-clean and predicted-noisy
/// samples; |noisy_idx| == floor(gamma * batch size) exactly.
struct NoisySplit {
  std::vector<std::size_t> clean_idx;
  std::vector<std::size_t> noisy_idx;
  double gamma = 0.0;
};

struct DetectionMetrics {
  double precision_clean = 0.0;
  double recall_clean = 0.0;
  double precision_noisy = 0.0;
  double recall_noisy = 0.0;
};

struct CaseStudyReport {
  double gamma = 0.0;
  double pretrained_acc = 0.0;
  double retrained_acc = 0.0;
  DetectionMetrics detection;
  double discrepancy = 0.0;
};

// The complementary-label term is unbounded below; clamping each noisy-sample
// loss here keeps the retraining objective finite.
constexpr double kComplementaryClip = 10.0;

/// Standard cross-entropy training on the whole corrupted set.
Hypothesis pretrain(const DataMatrix& corrupted, const ModelSpec& spec, std::uint64_t seed,
                    TrainLog* log = nullptr);

/// Sorts the batch by per-sample loss under h (ascending; ties broken by
/// original index, lower index counting as clean) and splits off the top
/// gamma fraction as predicted noisy.
NoisySplit split_by_risk(const DataMatrix& batch, const Hypothesis& h, double gamma);

/// Trains a freshly initialized network where every mini-batch is split by
/// risk under the frozen `pretrained` hypothesis and the objective is
/// mean CE over the predicted-clean part minus mean clamped CE over the
/// predicted-noisy part.
Hypothesis retrain_robust(const DataMatrix& corrupted, const Hypothesis& pretrained,
                          double gamma, const ModelSpec& spec, std::uint64_t seed,
                          TrainLog* log = nullptr);

/// Precision/recall of noisy-detection (flipped = positive) and of
/// clean-detection. Empty denominators count as a rate of 1.
DetectionMetrics detection_metrics(const NoisySplit& split, const FlipMask& mask);

/// |risk(predicted clean) - risk(predicted noisy)| under h, splitting the
/// full dataset as one batch. Zero when the noisy side is empty.
double clean_noisy_discrepancy(const DataMatrix& corrupted, const Hypothesis& h,
                               double gamma);

/// Everything the `noisy` command needs for one sweep.
struct CaseStudyConfig {
  std::size_t n_train = 5000;
  std::size_t n_test = 2000;
  int classes = 10;
  std::size_t dim = 10;
  double separation = 4.0;
  double noise_rate = 0.2;
  FlipMode flip_mode = FlipMode::Symmetry;
  ModelSpec model;           // MlpClassifier; defaulted in default_case_study_config()
  int retrain_epochs = 60;   // pretraining uses model.mlp.epochs
  std::vector<double> gammas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::uint64_t seed = 1;
};

CaseStudyConfig default_case_study_config();

struct CaseStudyResult {
  std::vector<CaseStudyReport> reports;  // one per gamma, sweep order
  TrainLog pretrain_log;
  std::vector<TrainLog> retrain_logs;
};

/// Generates data, corrupts labels, pretrains, and runs the gamma sweep.
CaseStudyResult run_case_study(const CaseStudyConfig& cfg);

}  // namespace rdiv
