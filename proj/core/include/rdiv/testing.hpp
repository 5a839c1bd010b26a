#pragma once

#include "rdiv/data.hpp"
#include "rdiv/divergences.hpp"

#include <functional>
#include <vector>

namespace rdiv {

/// Outcome of one permutation test. `permuted` holds the statistic for every
/// replica; entry 0 is the observed pair itself. `rank` counts replicas whose
/// statistic is >= the observed one (so rank >= 1 always), and rejection
/// requires rank <= floor(alpha * Z) -- ties count against rejection, which
/// keeps the guaranteed level exact.
struct PermutationTestResult {
  double observed = 0.0;
  std::vector<double> permuted;
  double alpha = 0.0;
  bool reject = false;
  std::size_t rank = 0;
};

/// Runs the statistic on the observed pair and on Z-1 uniform re-partitions
/// of the pooled rows. Each replica gets its own derived permutation seed and
/// its own derived fit seed, so permuted replicas are fully independent fits.
/// Results are identical for any `threads` value.
PermutationTestResult permutation_test(const DatasetPair& pair, const PairStatistic& stat,
                                       std::size_t z_count, double alpha,
                                       std::uint64_t seed, int threads = 1);

/// Rejection-rate summary of K independent permutation tests.
struct PowerReport {
  std::size_t trials = 0;        // K
  std::size_t permutations = 0;  // Z
  double alpha = 0.0;
  double power = 0.0;            // mean of per_trial
  double std_err = 0.0;          // sqrt(power (1 - power) / K)
  std::vector<std::uint8_t> per_trial;
};

/// Generates a dataset pair of per-side size n from a trial seed.
using PairGenerator = std::function<DatasetPair(std::size_t n, std::uint64_t seed)>;

/// Average test power: K freshly generated pairs, one permutation test each.
PowerReport test_power(const PairGenerator& scenario, const PairStatistic& stat,
                       std::size_t n, std::size_t trials, std::size_t z_count,
                       double alpha, std::uint64_t master_seed, int threads = 1);

/// test_power on a scenario whose two sides share one distribution; the
/// rejection rate then estimates the empirical Type-I error.
PowerReport type1_calibration(const PairGenerator& null_scenario, const PairStatistic& stat,
                              std::size_t n, std::size_t trials, std::size_t z_count,
                              double alpha, std::uint64_t master_seed, int threads = 1);

}  // namespace rdiv
