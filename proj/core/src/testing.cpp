#include "rdiv/testing.hpp"

#include "rdiv/parallel.hpp"
#include "rdiv/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rdiv {

namespace {

constexpr std::uint64_t kStreamReplicaPerm = 41;
constexpr std::uint64_t kStreamReplicaFit = 42;
constexpr std::uint64_t kStreamTrialPair = 43;
constexpr std::uint64_t kStreamTrialTest = 44;

// floor(alpha * Z) with a guard against products like 0.01 * 300 landing one
// ulp below the intended integer.
std::size_t rejection_threshold(double alpha, std::size_t z_count) {
  return static_cast<std::size_t>(alpha * static_cast<double>(z_count) + 1e-9);
}

}  // namespace

PermutationTestResult permutation_test(const DatasetPair& pair, const PairStatistic& stat,
                                       std::size_t z_count, double alpha,
                                       std::uint64_t seed, int threads) {
  if (z_count < 2) throw std::invalid_argument("permutation_test: need Z >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("permutation_test: alpha must lie in (0, 1)");
  }

  PermutationTestResult result;
  result.alpha = alpha;
  result.permuted.assign(z_count, 0.0);

  parallel_for(z_count, threads, [&](std::size_t zi) {
    const std::uint64_t fit_seed = derive_seed(seed, kStreamReplicaFit, zi);
    try {
      if (zi == 0) {
        result.permuted[0] = stat(pair, fit_seed);
      } else {
        const DatasetPair replica =
            permute_pair(pair, derive_seed(seed, kStreamReplicaPerm, zi));
        result.permuted[zi] = stat(replica, fit_seed);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("permutation_test: estimator failed at replica " +
                               std::to_string(zi + 1) + ": " + e.what());
    }
  });

  result.observed = result.permuted[0];
  for (double g : result.permuted) {
    if (g >= result.observed) ++result.rank;
  }
  result.reject = result.rank <= rejection_threshold(alpha, z_count);
  return result;
}

PowerReport test_power(const PairGenerator& scenario, const PairStatistic& stat,
                       std::size_t n, std::size_t trials, std::size_t z_count,
                       double alpha, std::uint64_t master_seed, int threads) {
  if (trials < 1) throw std::invalid_argument("test_power: need K >= 1");

  PowerReport report;
  report.trials = trials;
  report.permutations = z_count;
  report.alpha = alpha;
  report.per_trial.assign(trials, 0);

  const int inner_threads = trials == 1 ? threads : 1;
  parallel_for(trials, threads, [&](std::size_t k) {
    DatasetPair pair = [&] {
      try {
        return scenario(n, derive_seed(master_seed, kStreamTrialPair, k));
      } catch (const std::exception& e) {
        throw std::runtime_error("test_power: scenario failed at trial " +
                                 std::to_string(k + 1) + ": " + e.what());
      }
    }();
    const auto res = permutation_test(pair, stat, z_count, alpha,
                                      derive_seed(master_seed, kStreamTrialTest, k),
                                      inner_threads);
    report.per_trial[k] = res.reject ? 1 : 0;
  });

  std::size_t rejections = 0;
  for (auto r : report.per_trial) rejections += r;
  report.power = static_cast<double>(rejections) / static_cast<double>(trials);
  report.std_err =
      std::sqrt(report.power * (1.0 - report.power) / static_cast<double>(trials));
  return report;
}

PowerReport type1_calibration(const PairGenerator& null_scenario, const PairStatistic& stat,
                              std::size_t n, std::size_t trials, std::size_t z_count,
                              double alpha, std::uint64_t master_seed, int threads) {
  return test_power(null_scenario, stat, n, trials, z_count, alpha, master_seed, threads);
}

}  // namespace rdiv
