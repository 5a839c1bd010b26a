#include "rdiv/divergences.hpp"

#include "rdiv/mlp.hpp"
#include "rdiv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rdiv {

namespace {

constexpr std::uint64_t kStreamUnionShuffle = 31;
constexpr std::uint64_t kStreamFit = 32;
constexpr std::uint64_t kStreamC2stSplit = 33;
constexpr std::uint64_t kStreamC2stFit = 34;

bool rows_identical(const DataMatrix& a, const DataMatrix& b) {
  if (a.rows() != b.rows() || a.dim() != b.dim()) return false;
  if (a.values() != b.values()) return false;
  if (a.has_labels() != b.has_labels()) return false;
  return !a.has_labels() || a.labels() == b.labels();
}

void check_spec_compatible(const ModelSpec& spec, const DatasetPair& pair,
                           const char* who) {
  spec.validate();
  if (spec.requires_labels() && !pair.p_hat.has_labels()) {
    throw std::invalid_argument(std::string(who) + ": model requires labeled data");
  }
}

}  // namespace

DataMatrix canonical_union(const DatasetPair& pair, std::uint64_t seed) {
  const std::size_t n = pair.n();
  const bool labeled = pair.p_hat.has_labels();
  auto row_of = [&](std::size_t i) {
    return i < n ? pair.p_hat.row(i) : pair.q_hat.row(i - n);
  };
  auto label_of = [&](std::size_t i) {
    return i < n ? pair.p_hat.label(i) : pair.q_hat.label(i - n);
  };

  std::vector<std::size_t> order(2 * n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Eigen::RowVectorXd ra = row_of(a);
    const Eigen::RowVectorXd rb = row_of(b);
    for (Eigen::Index j = 0; j < ra.size(); ++j) {
      if (ra[j] < rb[j]) return true;
      if (ra[j] > rb[j]) return false;
    }
    if (labeled) return label_of(a) < label_of(b);
    return false;
  });
  Rng rng(derive_seed(seed, kStreamUnionShuffle, 0));
  rng.shuffle(order);

  Matrix values(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(pair.dim()));
  std::vector<int> labels(labeled ? 2 * n : 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    values.row(static_cast<Eigen::Index>(i)) = row_of(order[i]);
    if (labeled) labels[i] = label_of(order[i]);
  }
  if (labeled) {
    return DataMatrix(std::move(values), std::move(labels), pair.p_hat.num_classes());
  }
  return DataMatrix(std::move(values));
}

DivergenceEstimate r_div(const DatasetPair& pair, const ModelSpec& spec, std::uint64_t seed) {
  check_spec_compatible(spec, pair, "r_div");
  const DataMatrix merged = canonical_union(pair, seed);
  const Hypothesis h = fit(spec, merged, derive_seed(seed, kStreamFit, 0));
  const double risk_p = empirical_risk(h, pair.p_hat);
  const double risk_q = empirical_risk(h, pair.q_hat);
  return {std::abs(risk_p - risk_q), risk_p, risk_q, EstimatorKind::RDiv, seed};
}

DivergenceEstimate h_div(const DatasetPair& pair, const ModelSpec& spec, HPhi phi,
                         std::uint64_t seed) {
  check_spec_compatible(spec, pair, "h_div");
  if (rows_identical(pair.p_hat, pair.q_hat)) {
    const Hypothesis h_p = fit(spec, pair.p_hat, derive_seed(seed, kStreamFit, 1));
    const double risk = empirical_risk(h_p, pair.p_hat);
    return {0.0, risk, risk, EstimatorKind::HDiv, seed};
  }
  const DataMatrix merged = canonical_union(pair, seed);
  const Hypothesis h_u = fit(spec, merged, derive_seed(seed, kStreamFit, 0));
  const Hypothesis h_p = fit(spec, pair.p_hat, derive_seed(seed, kStreamFit, 1));
  const Hypothesis h_q = fit(spec, pair.q_hat, derive_seed(seed, kStreamFit, 2));
  const double risk_u = empirical_risk(h_u, merged);
  const double risk_p = empirical_risk(h_p, pair.p_hat);
  const double risk_q = empirical_risk(h_q, pair.q_hat);
  const double theta = risk_u - risk_p;
  const double lambda = risk_u - risk_q;
  double value = phi == HPhi::Mean ? 0.5 * (theta + lambda) : std::max(theta, lambda);
  // Exact minimizers make both drops non-negative; inexact (MLP) fits may
  // undershoot by training noise, which the non-negativity contract clamps.
  value = std::max(value, 0.0);
  return {value, risk_p, risk_q, EstimatorKind::HDiv, seed};
}

double mmd_o(const DatasetPair& pair, std::optional<double> bandwidth) {
  const std::size_t n = pair.n();
  if (n < 2) throw std::invalid_argument("mmd_o: need N >= 2");
  const Matrix& x = pair.p_hat.values();
  const Matrix& y = pair.q_hat.values();

  double gamma;
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw std::invalid_argument("mmd_o: bandwidth must be > 0");
    gamma = *bandwidth;
  } else {
    // Median heuristic over the pooled set.
    std::vector<double> dists;
    dists.reserve(n * (2 * n - 1));
    auto row_of = [&](std::size_t i) {
      return i < n ? x.row(static_cast<Eigen::Index>(i))
                   : y.row(static_cast<Eigen::Index>(i - n));
    };
    for (std::size_t i = 0; i < 2 * n; ++i) {
      for (std::size_t j = i + 1; j < 2 * n; ++j) {
        dists.push_back((row_of(i) - row_of(j)).norm());
      }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t s = dists.size();
    gamma = 0.5 * (dists[(s - 1) / 2] + dists[s / 2]);
    if (!(gamma > 0.0)) gamma = 1.0;  // fully degenerate pooled set
  }

  const double inv = 1.0 / (gamma * gamma);
  auto kernel = [&](const auto& a, const auto& b) {
    return std::exp(-(a - b).squaredNorm() * inv);
  };
  const auto nd = static_cast<double>(n);
  double within_x = 0.0, within_y = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto xi = x.row(static_cast<Eigen::Index>(i));
      const auto yj = y.row(static_cast<Eigen::Index>(j));
      if (i != j) {
        within_x += kernel(xi, x.row(static_cast<Eigen::Index>(j)));
        within_y += kernel(y.row(static_cast<Eigen::Index>(i)), yj);
      }
      cross += kernel(xi, yj);
    }
  }
  return within_x / (nd * (nd - 1.0)) + within_y / (nd * (nd - 1.0)) -
         2.0 * cross / (nd * nd);
}

double c2st(const DatasetPair& pair, const ModelSpec& spec, C2stVariant variant,
            std::uint64_t seed) {
  spec.validate();
  if (spec.family != Family::MlpClassifier) {
    throw std::invalid_argument("c2st: requires an MlpClassifier spec");
  }
  const std::size_t n = pair.n();
  if (n < 4) throw std::invalid_argument("c2st: need N >= 4 for a train/test split");

  Rng rng_p(derive_seed(seed, kStreamC2stSplit, 0));
  Rng rng_q(derive_seed(seed, kStreamC2stSplit, 1));
  const auto order_p = shuffled_indices(n, rng_p);
  const auto order_q = shuffled_indices(n, rng_q);
  const std::size_t n_train = n / 2;
  const std::size_t n_test = n - n_train;

  const auto dim = static_cast<Eigen::Index>(pair.dim());
  Matrix train(static_cast<Eigen::Index>(2 * n_train), dim);
  std::vector<int> train_labels(2 * n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    train.row(static_cast<Eigen::Index>(i)) = pair.p_hat.row(order_p[i]);
    train_labels[i] = 0;
    train.row(static_cast<Eigen::Index>(n_train + i)) = pair.q_hat.row(order_q[i]);
    train_labels[n_train + i] = 1;
  }
  const Hypothesis h = fit(spec, DataMatrix(std::move(train), std::move(train_labels), 2),
                           derive_seed(seed, kStreamC2stFit, 0));

  Matrix test_p(static_cast<Eigen::Index>(n_test), dim);
  Matrix test_q(static_cast<Eigen::Index>(n_test), dim);
  for (std::size_t i = 0; i < n_test; ++i) {
    test_p.row(static_cast<Eigen::Index>(i)) = pair.p_hat.row(order_p[n_train + i]);
    test_q.row(static_cast<Eigen::Index>(i)) = pair.q_hat.row(order_q[n_train + i]);
  }

  const auto& params = std::get<MlpParams>(h.params);
  const Matrix logits_p = mlp::forward(params, test_p);
  const Matrix logits_q = mlp::forward(params, test_q);

  if (variant == C2stVariant::S) {
    auto soft_one = [](const Matrix& logits) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = std::max(logits(i, 0), logits(i, 1));
        const double e0 = std::exp(logits(i, 0) - m);
        const double e1 = std::exp(logits(i, 1) - m);
        total += e1 / (e0 + e1);
      }
      return total / static_cast<double>(logits.rows());
    };
    return std::abs(soft_one(logits_p) - soft_one(logits_q));
  }
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits_p.rows(); ++i) {
    hits += (logits_p(i, 0) >= logits_p(i, 1));  // predicted class 0
  }
  for (Eigen::Index i = 0; i < logits_q.rows(); ++i) {
    hits += (logits_q(i, 1) > logits_q(i, 0));  // predicted class 1
  }
  return static_cast<double>(hits) / static_cast<double>(2 * n_test);
}

PairStatistic make_statistic(EstimatorKind kind, ModelSpec spec, HPhi phi,
                             std::optional<double> mmd_bandwidth) {
  switch (kind) {
    case EstimatorKind::RDiv:
      return [spec = std::move(spec)](const DatasetPair& pair, std::uint64_t seed) {
        return r_div(pair, spec, seed).value;
      };
    case EstimatorKind::HDiv:
      return [spec = std::move(spec), phi](const DatasetPair& pair, std::uint64_t seed) {
        return h_div(pair, spec, phi, seed).value;
      };
    case EstimatorKind::MmdO:
      return [mmd_bandwidth](const DatasetPair& pair, std::uint64_t) {
        return mmd_o(pair, mmd_bandwidth);
      };
    case EstimatorKind::C2stS:
      return [spec = std::move(spec)](const DatasetPair& pair, std::uint64_t seed) {
        return c2st(pair, spec, C2stVariant::S, seed);
      };
    case EstimatorKind::C2stL:
      return [spec = std::move(spec)](const DatasetPair& pair, std::uint64_t seed) {
        return c2st(pair, spec, C2stVariant::L, seed);
      };
  }
  throw std::logic_error("make_statistic: unknown estimator");
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::RDiv: return "rdiv";
    case EstimatorKind::HDiv: return "hdiv";
    case EstimatorKind::MmdO: return "mmd";
    case EstimatorKind::C2stS: return "c2st-s";
    case EstimatorKind::C2stL: return "c2st-l";
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator(const std::string& name) {
  if (name == "rdiv") return EstimatorKind::RDiv;
  if (name == "hdiv") return EstimatorKind::HDiv;
  if (name == "mmd") return EstimatorKind::MmdO;
  if (name == "c2st-s") return EstimatorKind::C2stS;
  if (name == "c2st-l") return EstimatorKind::C2stL;
  return std::nullopt;
}

}  // namespace rdiv
