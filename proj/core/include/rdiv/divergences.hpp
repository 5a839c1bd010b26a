#pragma once

#include "rdiv/data.hpp"
#include "rdiv/models.hpp"

#include <functional>
#include <optional>
#include <string>

namespace rdiv {

enum class EstimatorKind { RDiv, HDiv, MmdO, C2stS, C2stL };
enum class HPhi { Mean, Max };
enum class C2stVariant { S, L };

/// Statistic value plus the two empirical risks it was derived from.
/// risk_p / risk_q hold the shared-hypothesis risks for RDiv, the per-side
/// risks for HDiv, and NaN for the risk-free estimators (MmdO, C2st).
struct DivergenceEstimate {
  double value = 0.0;
  double risk_p = 0.0;
  double risk_q = 0.0;
  EstimatorKind estimator = EstimatorKind::RDiv;
  std::uint64_t fit_seed = 0;
};

/// The merged 2N rows, sorted lexicographically and then shuffled with a
/// sub-seed of `seed`. The result is a pure function of the unordered pair,
/// which is what makes the estimators below symmetric even with stochastic
/// trainers.
DataMatrix canonical_union(const DatasetPair& pair, std::uint64_t seed);

/// Fits the minimum hypothesis on the canonical union and reports the
/// absolute gap between its empirical risks on the two sides.
DivergenceEstimate r_div(const DatasetPair& pair, const ModelSpec& spec, std::uint64_t seed);

/// Fits three hypotheses (union and each side) and combines the two risk
/// drops with phi (mean or max). Row-identical pairs short-circuit to zero:
/// the three fits collapse to one and the drops vanish by definition.
DivergenceEstimate h_div(const DatasetPair& pair, const ModelSpec& spec, HPhi phi,
                         std::uint64_t seed);

/// Unbiased U-statistic estimate of MMD^2 with kernel exp(-||x-y||^2/g^2).
/// The bandwidth g defaults to the median pairwise distance of the pooled
/// set. May be negative.
double mmd_o(const DatasetPair& pair, std::optional<double> bandwidth = std::nullopt);

/// Classifier two-sample test: labels side P as 0 and side Q as 1, trains on
/// seeded per-side halves, and reports either the mean soft-output gap on the
/// held-out halves (S) or the held-out accuracy (L).
double c2st(const DatasetPair& pair, const ModelSpec& spec, C2stVariant variant,
            std::uint64_t seed);

/// A statistic as consumed by the permutation harness: deterministic given
/// the pair and its own fit seed.
using PairStatistic = std::function<double(const DatasetPair&, std::uint64_t)>;

PairStatistic make_statistic(EstimatorKind kind, ModelSpec spec, HPhi phi = HPhi::Mean,
                             std::optional<double> mmd_bandwidth = std::nullopt);

std::string estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator(const std::string& name);

}  // namespace rdiv
