#include "rdiv/data.hpp"
#include "rdiv/rng.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace rdiv;

namespace {

double std_normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Two-sided KS statistic against the standard normal.
double ks_statistic(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = std_normal_cdf(sample[i]);
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - cdf));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  return d;
}

std::vector<std::vector<double>> sorted_rows(const DataMatrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> r;
    for (std::size_t j = 0; j < m.dim(); ++j) {
      r.push_back(m.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    if (m.has_labels()) r.push_back(static_cast<double>(m.label(i)));
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/rdiv_data_test_") + name;
}

}  // namespace

TEST_CASE("blob components stay within the binomial band") {
  const auto data = gen_blob(9000, 7, Side::P);
  // Nearest grid centre; with sigma = 1 and spacing 5 assignment is clean.
  std::array<int, 9> counts{};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto nearest = [](double v) {
      return std::min(2, std::max(0, static_cast<int>(std::lround(v / 5.0))));
    };
    counts[static_cast<std::size_t>(3 * nearest(data.values()(static_cast<Eigen::Index>(i), 1)) +
                                    nearest(data.values()(static_cast<Eigen::Index>(i), 0)))]++;
  }
  // Multinomial(9000, 1/9): mean 1000, sd sqrt(9000 * (1/9) * (8/9)) = 29.81.
  for (int c : counts) {
    CHECK(c >= 911);
    CHECK(c <= 1089);
  }
}

TEST_CASE("blob generation is a pure function of its arguments") {
  const auto a = gen_blob(500, 3, Side::P);
  const auto b = gen_blob(500, 3, Side::P);
  CHECK(a.values() == b.values());
  const auto q = gen_blob(500, 3, Side::Q);
  CHECK(a.values() != q.values());
}

TEST_CASE("blob sample mean approaches the grid centroid") {
  const auto data = gen_blob(100000, 1, Side::P);
  const Eigen::RowVectorXd mean = data.values().colwise().mean();
  CHECK(std::abs(mean[0] - 5.0) < 0.1);
  CHECK(std::abs(mean[1] - 5.0) < 0.1);
}

TEST_CASE("blob Q has the anisotropic per-component spread") {
  const auto data = gen_blob(200000, 11, Side::Q);
  // Component at the origin (even index): rotation +45deg, eigenvalues 1 and 4
  // give Var(x0) = Var(x1) = 2.5 and Cov(x0, x1) = -1.5.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double x = data.values()(static_cast<Eigen::Index>(i), 0);
    const double y = data.values()(static_cast<Eigen::Index>(i), 1);
    if (std::abs(x) < 2.5 && std::abs(y) < 2.5) pts.emplace_back(x, y);
  }
  REQUIRE(pts.size() > 5000);
  double sxx = 0, syy = 0, sxy = 0, sx = 0, sy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double mx = sx / static_cast<double>(pts.size());
  const double my = sy / static_cast<double>(pts.size());
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
    sxy += (x - mx) * (y - my);
  }
  const auto m = static_cast<double>(pts.size());
  // The window truncates the tails, so compare loosely.
  CHECK(sxy / m < -0.5);
  CHECK(sxx / m > 1.2);
  CHECK(syy / m > 1.2);
}

TEST_CASE("hdgm marginals beyond the first two coordinates are standard normal") {
  for (Side side : {Side::P, Side::Q}) {
    const auto data = gen_hdgm(2000, 6, 5, side);
    for (Eigen::Index j = 2; j < 6; ++j) {
      std::vector<double> coord;
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.rows()); ++i) {
        coord.push_back(data.values()(i, j));
      }
      // Asymptotic two-sided KS critical value at alpha = 0.01.
      const double crit = 1.6276 / std::sqrt(static_cast<double>(coord.size()));
      CHECK(ks_statistic(std::move(coord)) < crit);
    }
  }
}

TEST_CASE("hdgm shape and determinism") {
  const auto data = gen_hdgm(100, 10, 3, Side::P);
  CHECK(data.rows() == 100);
  CHECK(data.dim() == 10);
  CHECK(!data.has_labels());
  const auto again = gen_hdgm(100, 10, 3, Side::P);
  CHECK(data.values() == again.values());
  CHECK_THROWS_AS(gen_hdgm(100, 5, 3, Side::P), std::invalid_argument);
  CHECK_THROWS_AS(gen_hdgm(100, 0, 3, Side::P), std::invalid_argument);
}

TEST_CASE("hdgm perturbed component carries the documented correlation") {
  // With equal weights, component means 0 and (s, s), and unit marginal
  // variances, E[x0 x1] = (rho + s^2) / 2, so rho = 2 E[x0 x1] - s^2.
  const double s = kHdgmComponentShift;
  for (auto [side, expected] : {std::pair{Side::Q, kHdgmOffDiagonal}, std::pair{Side::P, 0.0}}) {
    const auto data = gen_hdgm(100000, 6, 42, side);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.rows()); ++i) {
      sum += data.values()(i, 0) * data.values()(i, 1);
    }
    const double rho = 2.0 * sum / static_cast<double>(data.rows()) - s * s;
    CHECK(std::abs(rho - expected) < 0.05);
  }
}

TEST_CASE("gauss classes separate under the nearest-centre rule") {
  const auto data = gen_gauss_classes(1000, 10, 10, 6.0, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    Eigen::Index best = 0;
    data.row(i).maxCoeff(&best);  // centre separation * e_c maximizes coord c
    hits += (static_cast<int>(best) == data.label(i));
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(data.rows()) >= 0.99);
}

TEST_CASE("gauss classes labels are balanced") {
  const auto data = gen_gauss_classes(100, 2, 2, 3.0, 5);
  std::map<int, int> hist;
  for (std::size_t i = 0; i < data.rows(); ++i) hist[data.label(i)]++;
  CHECK(hist[0] == 50);
  CHECK(hist[1] == 50);

  const auto odd = gen_gauss_classes(101, 2, 2, 3.0, 5);
  std::map<int, int> hist_odd;
  for (std::size_t i = 0; i < odd.rows(); ++i) hist_odd[odd.label(i)]++;
  CHECK(std::abs(hist_odd[0] - hist_odd[1]) <= 1);

  const auto again = gen_gauss_classes(100, 2, 2, 3.0, 5);
  CHECK(data.values() == again.values());
  CHECK(data.labels() == again.labels());

  CHECK_THROWS_AS(gen_gauss_classes(100, 4, 2, 3.0, 5), std::invalid_argument);
}

TEST_CASE("flip_labels flips exactly the requested fraction") {
  const auto data = gen_gauss_classes(1000, 10, 10, 6.0, 2);
  const auto [corrupted, mask] = flip_labels(data, 0.2, FlipMode::Symmetry, 9);
  CHECK(mask.flip_count() == 200);
  CHECK(mask.original_labels == data.labels());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (corrupted.label(i) != data.label(i)) {
      ++changed;
      CHECK(mask.flipped[i] == 1);
    } else {
      CHECK(mask.flipped[i] == 0);
    }
  }
  // Symmetry flips never map a label to itself.
  CHECK(changed == 200);
}

TEST_CASE("flip_labels rate zero is the identity") {
  const auto data = gen_gauss_classes(50, 2, 2, 3.0, 1);
  const auto [out, mask] = flip_labels(data, 0.0, FlipMode::Symmetry, 3);
  CHECK(out.values() == data.values());
  CHECK(out.labels() == data.labels());
  CHECK(mask.flip_count() == 0);
}

TEST_CASE("pair flipping wraps modulo the class count") {
  Matrix values(10, 1);
  std::vector<int> labels(10, 9);
  for (int i = 0; i < 10; ++i) values(i, 0) = i;
  const DataMatrix data(values, labels, 10);
  const auto [out, mask] = flip_labels(data, 0.5, FlipMode::Pair, 4);
  CHECK(mask.flip_count() == 5);
  for (std::size_t i = 0; i < 10; ++i) {
    if (mask.flipped[i]) CHECK(out.label(i) == 0);  // (9 + 1) mod 10
  }
  CHECK_THROWS_AS(flip_labels(DataMatrix(values), 0.2, FlipMode::Pair, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(flip_labels(data, 1.0, FlipMode::Pair, 1), std::invalid_argument);
}

TEST_CASE("permute_pair preserves the pooled multiset") {
  const auto p = gen_blob(64, 1, Side::P);
  const auto q = gen_blob(64, 2, Side::Q);
  const DatasetPair pair(p, q);
  const auto out = permute_pair(pair, 77);

  auto pool = sorted_rows(p);
  auto pool_q = sorted_rows(q);
  pool.insert(pool.end(), pool_q.begin(), pool_q.end());
  std::sort(pool.begin(), pool.end());

  auto out_pool = sorted_rows(out.p_hat);
  auto out_pool_q = sorted_rows(out.q_hat);
  out_pool.insert(out_pool.end(), out_pool_q.begin(), out_pool_q.end());
  std::sort(out_pool.begin(), out_pool.end());

  CHECK(pool == out_pool);

  const auto again = permute_pair(pair, 77);
  CHECK(out.p_hat.values() == again.p_hat.values());
  CHECK(out.q_hat.values() != permute_pair(pair, 78).p_hat.values());
}

TEST_CASE("permute_pair re-partitions uniformly") {
  Matrix vp(2, 1), vq(2, 1);
  vp << 0.0, 1.0;
  vq << 2.0, 3.0;
  const DatasetPair pair{DataMatrix(vp), DataMatrix(vq)};
  // 4 pooled rows -> C(4,2) = 6 possible sets for the new first side.
  std::map<std::set<int>, int> freq;
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    const auto out = permute_pair(pair, static_cast<std::uint64_t>(k));
    std::set<int> key{static_cast<int>(out.p_hat.values()(0, 0)),
                      static_cast<int>(out.p_hat.values()(1, 0))};
    freq[key]++;
  }
  CHECK(freq.size() == 6);
  for (const auto& [key, count] : freq) {
    const double f = static_cast<double>(count) / trials;
    CHECK(std::abs(f - 1.0 / 6.0) < 0.02);
  }
}

TEST_CASE("permute_pair carries labels with their rows") {
  const auto p = gen_gauss_classes(40, 4, 4, 8.0, 1);
  const auto q = gen_gauss_classes(40, 4, 4, 8.0, 2);
  // Tag each row with a recognizable label -> value association.
  const auto out = permute_pair(DatasetPair(p, q), 5);
  auto check_association = [&](const DataMatrix& side) {
    for (std::size_t i = 0; i < side.rows(); ++i) {
      Eigen::Index best = 0;
      side.row(i).maxCoeff(&best);
      CHECK(static_cast<int>(best) == side.label(i));  // holds at separation 8
    }
  };
  check_association(out.p_hat);
  check_association(out.q_hat);
}

TEST_CASE("dataset pair invariants") {
  const auto p = gen_blob(10, 1, Side::P);
  const auto q5 = gen_blob(5, 2, Side::Q);
  CHECK_THROWS_AS(DatasetPair(p, q5), std::invalid_argument);
  const auto labeled = gen_gauss_classes(10, 2, 2, 3.0, 1);
  CHECK_THROWS_AS(DatasetPair(p, labeled), std::invalid_argument);
}

TEST_CASE("data matrix validates finiteness and label range") {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK_THROWS_AS(DataMatrix{bad}, std::invalid_argument);
  Matrix ok(2, 2);
  ok << 1.0, 2.0, 3.0, 4.0;
  CHECK_THROWS_AS(DataMatrix(ok, {0, 5}, 3), std::invalid_argument);
  CHECK_THROWS_AS(DataMatrix(ok, {0}, 3), std::invalid_argument);
}

TEST_CASE("csv and binary serialization round-trip exactly") {
  Rng rng(99);
  Matrix values(37, 3);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      values(i, j) = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(7)) - 3.0);
    }
  }
  std::vector<int> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(static_cast<int>(rng.below(4)));
  const DataMatrix labeled(values, labels, 4);
  const DataMatrix plain(values);

  for (const auto& [data, tag] : {std::pair{labeled, "lab"}, std::pair{plain, "plain"}}) {
    const auto csv = temp_path((std::string("rt_") + tag + ".csv").c_str());
    const auto bin = temp_path((std::string("rt_") + tag + ".bin").c_str());
    save_csv(data, csv);
    save_binary(data, bin);
    for (const auto& path : {csv, bin}) {
      const auto back = load_dataset(path);
      CHECK(back.values() == data.values());
      CHECK(back.has_labels() == data.has_labels());
      if (data.has_labels()) CHECK(back.labels() == data.labels());
      std::remove(path.c_str());
    }
  }
}

TEST_CASE("loaders reject malformed input") {
  const auto path = temp_path("bad.csv");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("x0,x1\n1.0,huh\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_csv(path), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_dataset("/nonexistent/rdiv.csv"), std::runtime_error);
}

TEST_CASE("seed splitting separates streams") {
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}
