#pragma once

#include "rdiv/testing.hpp"

#include <string>
#include <vector>

namespace rdiv {

/// Named dataset-pair scenarios shared by the power/calibrate commands and
/// the statistical test suites:
///   blob         3x3 Gaussian grid, isotropic vs rotated-anisotropic (d = 2)
///   blob-null    blob side P against an independent draw of itself
///   hdgm         two-component Gaussian mixture, plain vs correlated (d flag)
///   hdgm-null    hdgm side P against an independent draw of itself
///   normal-null  standard normal against itself (d flag, default 1)
///   gauss-shift  1-D N(0,1) against N(3,1)
/// Each side of every pair draws from its own derived sub-seed.
PairGenerator make_scenario(const std::string& name, std::size_t dim = 0);

/// True when the scenario's two sides share one distribution.
bool scenario_is_null(const std::string& name);

/// Sample dimension the scenario emits given the CLI --d flag (0 = default).
std::size_t scenario_dim(const std::string& name, std::size_t dim_flag);

std::vector<std::string> scenario_names();

}  // namespace rdiv
