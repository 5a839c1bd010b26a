#include "rdiv/mlp.hpp"

#include "rdiv/rng.hpp"

#include <cmath>

namespace rdiv::mlp {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Activations after every layer; act[0] is the input batch.
struct Trace {
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> act;   // act[l] feeds layer l
};

Trace run_forward(const MlpParams& params, const Matrix& x) {
  Trace t;
  t.act.reserve(params.layers.size() + 1);
  t.pre.reserve(params.layers.size());
  t.act.push_back(x);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = t.act.back() * layer.w.transpose();
    z.rowwise() += layer.b.transpose();
    const bool last = l + 1 == params.layers.size();
    t.act.push_back(last ? z : relu(z));
    t.pre.push_back(std::move(z));
  }
  return t;
}

// Row-wise log(sum(exp)) with max shift.
Eigen::VectorXd log_sum_exp(const Matrix& z) {
  Eigen::VectorXd m = z.rowwise().maxCoeff();
  return ((z.colwise() - m).array().exp().rowwise().sum().log() + m.array()).matrix();
}

double clamp_loss(double v, std::optional<double> clip) {
  if (!clip) return v;
  return std::min(std::max(v, -*clip), *clip);
}

}  // namespace

Gradients Gradients::zeros_like(const MlpParams& params) {
  Gradients g;
  g.w.reserve(params.layers.size());
  g.b.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
    g.b.push_back(Eigen::VectorXd::Zero(layer.b.size()));
  }
  return g;
}

void Gradients::accumulate(double scale, const Gradients& other) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += scale * other.w[l];
    b[l] += scale * other.b[l];
  }
}

MlpParams he_init(std::size_t in_dim, const std::vector<int>& hidden,
                  std::size_t out_dim, int num_classes, std::uint64_t seed) {
  MlpParams params;
  params.num_classes = num_classes;
  Rng rng(seed);
  std::size_t fan_in = in_dim;
  auto add_layer = [&](std::size_t out) {
    MlpLayer layer;
    layer.w.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
        layer.w(i, j) = std_dev * rng.normal();
      }
    }
    layer.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    params.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (int width : hidden) add_layer(static_cast<std::size_t>(width));
  add_layer(out_dim);
  return params;
}

Matrix forward(const MlpParams& params, const Matrix& x) {
  return run_forward(params, x).act.back();
}

Eigen::VectorXd batch_losses(const MlpParams& params, const Matrix& x,
                             const std::vector<int>* labels,
                             std::optional<double> clip) {
  const Matrix out = forward(params, x);
  Eigen::VectorXd losses(x.rows());
  if (labels != nullptr) {
    const Eigen::VectorXd lse = log_sum_exp(out);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      losses[i] = lse[i] - out(i, (*labels)[static_cast<std::size_t>(i)]);
    }
  } else {
    losses = (out - x).rowwise().squaredNorm();
  }
  if (clip) {
    for (Eigen::Index i = 0; i < losses.size(); ++i) losses[i] = clamp_loss(losses[i], clip);
  }
  return losses;
}

double batch_loss_and_grads(const MlpParams& params, const Matrix& x,
                            const std::vector<int>* labels,
                            std::optional<double> clip, Gradients& grads) {
  const Trace trace = run_forward(params, x);
  const Matrix& out = trace.act.back();
  const auto batch = static_cast<double>(x.rows());

  Eigen::VectorXd raw(x.rows());
  Matrix delta;  // dLoss/dOut for the mean loss
  if (labels != nullptr) {
    const Eigen::VectorXd lse = log_sum_exp(out);
    delta = ((out.colwise() - lse).array().exp()).matrix();  // softmax
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const int y = (*labels)[static_cast<std::size_t>(i)];
      raw[i] = lse[i] - out(i, y);
      delta(i, y) -= 1.0;
    }
  } else {
    delta = 2.0 * (out - x);
    raw = (out - x).rowwise().squaredNorm();
  }

  double total = 0.0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double clamped = clamp_loss(raw[i], clip);
    total += clamped;
    // A sample pinned at the clip bound is flat in the parameters.
    if (clip && clamped != raw[i]) delta.row(i).setZero();
  }
  delta /= batch;

  const auto n_layers = params.layers.size();
  for (std::size_t l = n_layers; l-- > 0;) {
    grads.w[l] = delta.transpose() * trace.act[l];
    grads.b[l] = delta.colwise().sum();
    if (l > 0) {
      delta = delta * params.layers[l].w;
      delta.array() *= (trace.pre[l - 1].array() > 0.0).cast<double>();
    }
  }
  return total / batch;
}

Optimizer::Optimizer(const MlpConfig& cfg, const MlpParams& shape)
    : cfg_(cfg), m_(Gradients::zeros_like(shape)), v_(Gradients::zeros_like(shape)) {}

void Optimizer::apply(MlpParams& params, const Gradients& grads, int epoch) {
  if (cfg_.optimizer == OptimizerKind::Sgd) {
    double lr = cfg_.learning_rate;
    if (epoch >= cfg_.epochs / 2) lr *= 0.1;
    if (epoch >= (cfg_.epochs * 3) / 4) lr *= 0.1;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      params.layers[l].w -= lr * grads.w[l];
      params.layers[l].b -= lr * grads.b[l];
    }
    return;
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    m_.w[l] = beta1 * m_.w[l] + (1.0 - beta1) * grads.w[l];
    m_.b[l] = beta1 * m_.b[l] + (1.0 - beta1) * grads.b[l];
    v_.w[l].array() = beta2 * v_.w[l].array() + (1.0 - beta2) * grads.w[l].array().square();
    v_.b[l].array() = beta2 * v_.b[l].array() + (1.0 - beta2) * grads.b[l].array().square();
    params.layers[l].w.array() -=
        cfg_.learning_rate * (m_.w[l].array() / bc1) / ((v_.w[l].array() / bc2).sqrt() + eps);
    params.layers[l].b.array() -=
        cfg_.learning_rate * (m_.b[l].array() / bc1) / ((v_.b[l].array() / bc2).sqrt() + eps);
  }
}

}  // namespace rdiv::mlp
