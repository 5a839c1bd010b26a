#pragma once

#include "rdiv/data.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rdiv {

enum class Family { Mean, Gaussian, Kde, MlpClassifier, MlpAutoencoder };
enum class Target { SelfReconstruction, Label };
enum class OptimizerKind { Adam, Sgd };

/// Training configuration for the MLP families. Adam uses (0.9, 0.999, 1e-8);
/// Sgd divides the learning rate by 10 after 50% and 75% of the epochs.
struct MlpConfig {
  std::vector<int> hidden{32};
  int epochs = 50;
  int batch = 128;
  double learning_rate = 1e-3;  // 0.1 is the customary choice for Sgd
  OptimizerKind optimizer = OptimizerKind::Adam;
};

/// Declares the hypothesis space, the loss, and the target function. The
/// optional loss_clip bounds every per-sample loss to [-c, c], both during
/// evaluation and as the training objective.
struct ModelSpec {
  Family family = Family::Mean;
  Target target = Target::SelfReconstruction;
  std::optional<double> kde_bandwidth;  // unset: Silverman's rule on the training set
  MlpConfig mlp;
  std::optional<double> loss_clip;

  static ModelSpec mean();
  static ModelSpec gaussian();
  static ModelSpec kde(std::optional<double> bandwidth = std::nullopt);
  static ModelSpec mlp_classifier(MlpConfig cfg = {});
  static ModelSpec mlp_autoencoder(MlpConfig cfg = {});

  void validate() const;
  bool requires_labels() const { return target == Target::Label; }
};

// Degenerate coordinates would otherwise give the Gaussian family an
// infinite log density.
constexpr double kVarianceFloor = 1e-6;

struct MeanParams {
  Eigen::RowVectorXd mu;
};

struct GaussianParams {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd var;  // diagonal, floored at kVarianceFloor
};

struct KdeParams {
  Matrix train;      // retained training matrix
  double bandwidth;  // resolved (explicit or Silverman), > 0
};

struct MlpLayer {
  Matrix w;             // out x in
  Eigen::VectorXd b;
};

struct MlpParams {
  std::vector<MlpLayer> layers;  // hidden layers use ReLU, output is linear
  int num_classes = 0;           // 0 for autoencoders
};

/// A fitted model: the spec it was fitted under plus family-dependent
/// parameters. Immutable after fit and safe to share across threads.
struct Hypothesis {
  ModelSpec spec;
  std::variant<MeanParams, GaussianParams, KdeParams, MlpParams> params;

  std::size_t dim() const;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // running mean loss per epoch
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learns the empirical risk minimizer on `data`. Mean and Gaussian are
/// closed-form, Kde memorizes the data, the MLP families run the configured
/// mini-batch optimization from a seeded initialization. Bit-reproducible
/// for a fixed seed.
Hypothesis fit(const ModelSpec& spec, const DataMatrix& data, std::uint64_t seed,
               TrainLog* log = nullptr);

/// Per-sample loss l(h(x), a(x)) for self-targeted families (squared
/// reconstruction error or negative log density).
double sample_loss(const Hypothesis& h, const Eigen::RowVectorXd& x);

/// Per-sample loss for classifiers: softmax cross-entropy against `label`.
double sample_loss(const Hypothesis& h, const Eigen::RowVectorXd& x, int label);

/// Losses for every row of `data`; the vectorized path behind empirical_risk.
Eigen::VectorXd per_sample_losses(const Hypothesis& h, const DataMatrix& data);

/// Mean of per-sample losses, normalized by the evaluated set's own size.
double empirical_risk(const Hypothesis& h, const DataMatrix& data);

/// Fraction of rows whose argmax logit equals the label (classifiers only).
double classification_accuracy(const Hypothesis& h, const DataMatrix& data);

/// Compares analytic MLP gradients against central finite differences
/// (step 1e-5) at a seeded random initialization; returns the worst
/// relative error over all parameters.
double grad_check(const ModelSpec& spec, const DataMatrix& data, std::uint64_t seed);

/// h = sigma_bar * (4 / ((d + 2) M))^(1/(d+4)) with sigma_bar the root mean
/// marginal sample variance; floored at 1e-9.
double silverman_bandwidth(const Matrix& data);

// Versioned binary blob: header, family tag, parameter tensors as float64
// little-endian. Used for the pretrain/retrain handoff.
std::vector<std::uint8_t> serialize_hypothesis(const Hypothesis& h);
Hypothesis deserialize_hypothesis(const std::vector<std::uint8_t>& blob);
void save_hypothesis(const Hypothesis& h, const std::string& path);
Hypothesis load_hypothesis(const std::string& path);

}  // namespace rdiv
