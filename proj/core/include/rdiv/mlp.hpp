#pragma once

#include "rdiv/models.hpp"

#include <cstdint>
#include <optional>

// Network internals shared by fit, grad_check, and the robust retraining
// loop. Exposed so the tests can drive hand-built parameter sets.
namespace rdiv::mlp {

struct Gradients {
  std::vector<Matrix> w;
  std::vector<Eigen::VectorXd> b;

  static Gradients zeros_like(const MlpParams& params);
  void accumulate(double scale, const Gradients& other);
};

/// He-style initialization: W ~ N(0, 2/fan_in), b = 0, seeded.
MlpParams he_init(std::size_t in_dim, const std::vector<int>& hidden,
                  std::size_t out_dim, int num_classes, std::uint64_t seed);

/// Logits (classifier) or reconstructions (autoencoder) for a batch.
Matrix forward(const MlpParams& params, const Matrix& x);

/// Per-sample losses for a batch: softmax cross-entropy when labels are
/// given, squared reconstruction error otherwise. `clip` clamps each loss
/// to [-clip, clip].
Eigen::VectorXd batch_losses(const MlpParams& params, const Matrix& x,
                             const std::vector<int>* labels,
                             std::optional<double> clip);

/// Mean batch loss and its parameter gradients. Samples whose loss sits at
/// the clip boundary contribute zero gradient.
double batch_loss_and_grads(const MlpParams& params, const Matrix& x,
                            const std::vector<int>* labels,
                            std::optional<double> clip, Gradients& grads);

/// Adam, or Sgd with the step-decay schedule (lr/10 after 50% and 75% of
/// the configured epochs).
class Optimizer {
 public:
  Optimizer(const MlpConfig& cfg, const MlpParams& shape);

  void apply(MlpParams& params, const Gradients& grads, int epoch);

 private:
  MlpConfig cfg_;
  Gradients m_;
  Gradients v_;
  long step_ = 0;
};

}  // namespace rdiv::mlp
