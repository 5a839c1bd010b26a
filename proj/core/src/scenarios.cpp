#include "rdiv/scenarios.hpp"

#include "rdiv/rng.hpp"

#include <stdexcept>

namespace rdiv {

namespace {

constexpr std::uint64_t kStreamScenarioSide = 61;
constexpr std::uint64_t kStreamStdNormal = 62;

DataMatrix std_normal(std::size_t n, std::size_t dim, std::uint64_t seed, double shift) {
  Rng rng(derive_seed(seed, kStreamStdNormal, 0));
  Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) values(i, j) = shift + rng.normal();
  }
  return DataMatrix(std::move(values));
}

std::uint64_t side_seed(std::uint64_t seed, int side) {
  return derive_seed(seed, kStreamScenarioSide, static_cast<std::uint64_t>(side));
}

}  // namespace

PairGenerator make_scenario(const std::string& name, std::size_t dim) {
  if (name == "blob") {
    return [](std::size_t n, std::uint64_t seed) {
      return DatasetPair(gen_blob(n, side_seed(seed, 0), Side::P),
                         gen_blob(n, side_seed(seed, 1), Side::Q));
    };
  }
  if (name == "blob-null") {
    return [](std::size_t n, std::uint64_t seed) {
      return DatasetPair(gen_blob(n, side_seed(seed, 0), Side::P),
                         gen_blob(n, side_seed(seed, 1), Side::P));
    };
  }
  if (name == "hdgm" || name == "hdgm-null") {
    const std::size_t d = dim == 0 ? 10 : dim;
    const Side q_side = name == "hdgm" ? Side::Q : Side::P;
    return [d, q_side](std::size_t n, std::uint64_t seed) {
      return DatasetPair(gen_hdgm(n, d, side_seed(seed, 0), Side::P),
                         gen_hdgm(n, d, side_seed(seed, 1), q_side));
    };
  }
  if (name == "normal-null") {
    const std::size_t d = dim == 0 ? 1 : dim;
    return [d](std::size_t n, std::uint64_t seed) {
      return DatasetPair(std_normal(n, d, side_seed(seed, 0), 0.0),
                         std_normal(n, d, side_seed(seed, 1), 0.0));
    };
  }
  if (name == "gauss-shift") {
    return [](std::size_t n, std::uint64_t seed) {
      return DatasetPair(std_normal(n, 1, side_seed(seed, 0), 0.0),
                         std_normal(n, 1, side_seed(seed, 1), 3.0));
    };
  }
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

bool scenario_is_null(const std::string& name) {
  return name == "blob-null" || name == "hdgm-null" || name == "normal-null";
}

std::size_t scenario_dim(const std::string& name, std::size_t dim_flag) {
  if (name == "blob" || name == "blob-null") return 2;
  if (name == "hdgm" || name == "hdgm-null") return dim_flag == 0 ? 10 : dim_flag;
  if (name == "normal-null") return dim_flag == 0 ? 1 : dim_flag;
  if (name == "gauss-shift") return 1;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::vector<std::string> scenario_names() {
  return {"blob", "blob-null", "hdgm", "hdgm-null", "normal-null", "gauss-shift"};
}

}  // namespace rdiv
