#include "rdiv/noisy.hpp"

#include "rdiv/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>

using namespace rdiv;

namespace {

// Mean hypothesis centred at zero: per-sample loss is x^2, so a 1-D dataset
// of square roots realizes any loss profile exactly.
Hypothesis zero_mean_hypothesis() {
  Matrix origin(1, 1);
  origin(0, 0) = 0.0;
  return fit(ModelSpec::mean(), DataMatrix(origin), 0);
}

DataMatrix losses_as_data(std::initializer_list<double> losses) {
  Matrix m(static_cast<Eigen::Index>(losses.size()), 1);
  std::vector<int> labels(losses.size(), 0);
  Eigen::Index i = 0;
  for (double l : losses) m(i++, 0) = std::sqrt(l);
  return DataMatrix(std::move(m), std::move(labels), 1);
}

}  // namespace

TEST_CASE("split_by_risk sorts by loss and keeps exact sizes") {
  const auto h = zero_mean_hypothesis();
  const auto batch = losses_as_data({0.1, 0.2, 0.9, 1.5});
  {
    const auto split = split_by_risk(batch, h, 0.5);
    CHECK(split.clean_idx == std::vector<std::size_t>{0, 1});
    CHECK(split.noisy_idx == std::vector<std::size_t>{2, 3});
  }
  {
    const auto split = split_by_risk(batch, h, 0.25);
    CHECK(split.clean_idx == std::vector<std::size_t>{0, 1, 2});
    CHECK(split.noisy_idx == std::vector<std::size_t>{3});
  }
}

TEST_CASE("equal losses split by the index tiebreak") {
  const auto h = zero_mean_hypothesis();
  const auto batch = losses_as_data({1.0, 1.0, 1.0, 1.0, 1.0});
  const auto split = split_by_risk(batch, h, 0.4);  // floor(2)
  CHECK(split.clean_idx == std::vector<std::size_t>{0, 1, 2});
  CHECK(split.noisy_idx == std::vector<std::size_t>{3, 4});
}

TEST_CASE("split_by_risk validates gamma and labels") {
  const auto h = zero_mean_hypothesis();
  const auto batch = losses_as_data({0.1, 0.2});
  CHECK_THROWS_AS(split_by_risk(batch, h, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(split_by_risk(batch, h, 1.0), std::invalid_argument);
  Matrix m(2, 1);
  m << 1.0, 2.0;
  CHECK_THROWS_AS(split_by_risk(DataMatrix(m), h, 0.5), std::invalid_argument);
}

TEST_CASE("detection metrics on a perfect split") {
  NoisySplit split;
  split.gamma = 0.5;
  split.clean_idx = {0, 1};
  split.noisy_idx = {2, 3};
  FlipMask mask;
  mask.flipped = {0, 0, 1, 1};
  mask.original_labels = {0, 0, 0, 0};
  const auto m = detection_metrics(split, mask);
  CHECK(m.precision_clean == 1.0);
  CHECK(m.recall_clean == 1.0);
  CHECK(m.precision_noisy == 1.0);
  CHECK(m.recall_noisy == 1.0);

  NoisySplit outside = split;
  outside.noisy_idx = {9};
  CHECK_THROWS_AS(detection_metrics(outside, mask), std::invalid_argument);
}

TEST_CASE("a split uncorrelated with the flips recovers the base rate") {
  // Losses independent of the mask: precision_noisy concentrates at the
  // noise rate (hypergeometric expectation).
  const std::size_t n = 2000;
  Rng rng(3);
  Matrix values(static_cast<Eigen::Index>(n), 1);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    values(static_cast<Eigen::Index>(i), 0) = rng.normal();
    labels[i] = static_cast<int>(rng.below(4));
  }
  const DataMatrix data(values, labels, 4);
  const auto [corrupted, mask] = flip_labels(data, 0.2, FlipMode::Symmetry, 7);
  const auto h = zero_mean_hypothesis();

  const auto split = split_by_risk(corrupted, h, 0.2);
  const auto m = detection_metrics(split, mask);
  CHECK(std::abs(m.precision_noisy - 0.2) < 0.05);
  CHECK(std::abs(m.recall_noisy - 0.2) < 0.05);

  // gamma near 1: recall saturates while precision falls to the base rate.
  const auto wide = detection_metrics(split_by_risk(corrupted, h, 0.99), mask);
  CHECK(wide.recall_noisy >= 0.97);
  CHECK(std::abs(wide.precision_noisy - 0.2) < 0.02);
}

TEST_CASE("clean/noisy discrepancy hand cases") {
  const auto h = zero_mean_hypothesis();
  CHECK(clean_noisy_discrepancy(losses_as_data({0.0, 4.0}), h, 0.5) == 4.0);
  CHECK(clean_noisy_discrepancy(losses_as_data({2.0, 2.0, 2.0, 2.0}), h, 0.5) == 0.0);
  // floor(gamma * N) == 0: no noisy side to compare against.
  CHECK(clean_noisy_discrepancy(losses_as_data({1.0, 2.0}), h, 0.3) == 0.0);
}

TEST_CASE("pretraining on clean data solves the task") {
  CaseStudyConfig cfg = default_case_study_config();
  cfg.n_train = 800;
  cfg.n_test = 400;
  cfg.classes = 4;
  cfg.dim = 4;
  cfg.separation = 6.0;
  cfg.model.mlp.hidden = {16};
  cfg.model.mlp.epochs = 25;
  const auto train = gen_gauss_classes(cfg.n_train, cfg.classes, cfg.dim, cfg.separation, 11);
  const auto test = gen_gauss_classes(cfg.n_test, cfg.classes, cfg.dim, cfg.separation, 12);
  const auto h = pretrain(train, cfg.model, 13);
  CHECK(classification_accuracy(h, test) >= 0.95);
  // Bit-identical weights for a repeated seed.
  CHECK(serialize_hypothesis(pretrain(train, cfg.model, 13)) == serialize_hypothesis(h));
}

TEST_CASE("label noise measurably hurts pretraining") {
  MlpConfig mlp;
  mlp.hidden = {32};
  mlp.epochs = 40;
  const auto spec = ModelSpec::mlp_classifier(mlp);
  double gap_total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto train = gen_gauss_classes(1200, 6, 6, 3.0, 100 + seed);
    const auto test = gen_gauss_classes(800, 6, 6, 3.0, 200 + seed);
    const auto [corrupted, mask] = flip_labels(train, 0.2, FlipMode::Symmetry, 300 + seed);
    const double clean_acc = classification_accuracy(pretrain(train, spec, seed), test);
    const double noisy_acc = classification_accuracy(pretrain(corrupted, spec, seed), test);
    gap_total += clean_acc - noisy_acc;
  }
  CHECK(gap_total / 5.0 >= 0.01);
}

TEST_CASE("small-gamma retraining at the reference noise rate is near-harmless") {
  // With 0.2 symmetry noise the top decile of pretrained losses is almost
  // entirely genuinely-noisy, so the complementary term pushes against wrong
  // labels and small-gamma retraining tracks the pretrained accuracy.
  CaseStudyConfig cfg = default_case_study_config();
  cfg.n_train = 1000;
  cfg.n_test = 800;
  cfg.classes = 4;
  cfg.dim = 4;
  cfg.separation = 5.0;
  cfg.model.mlp.hidden = {32};
  cfg.model.mlp.epochs = 60;
  cfg.retrain_epochs = 30;
  cfg.gammas = {0.1};
  double pre_total = 0.0;
  double re_total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const auto run = run_case_study(cfg);
    pre_total += run.reports[0].pretrained_acc;
    re_total += run.reports[0].retrained_acc;
  }
  CHECK(re_total / 5.0 >= pre_total / 5.0 - 0.05);
}

TEST_CASE("zero-noise retraining runs to completion") {
  // The complementary term then anti-trains clean samples; the run must
  // still complete with finite, well-formed reports.
  CaseStudyConfig cfg = default_case_study_config();
  cfg.n_train = 600;
  cfg.n_test = 300;
  cfg.classes = 4;
  cfg.dim = 4;
  cfg.separation = 5.0;
  cfg.noise_rate = 0.0;
  cfg.model.mlp.hidden = {16};
  cfg.model.mlp.epochs = 20;
  cfg.retrain_epochs = 10;
  cfg.gammas = {0.1};
  cfg.seed = 9;
  const auto run = run_case_study(cfg);
  REQUIRE(run.reports.size() == 1);
  CHECK(std::isfinite(run.reports[0].retrained_acc));
  CHECK(run.reports[0].retrained_acc >= 0.0);
  CHECK(run.reports[0].retrained_acc <= 1.0);
  CHECK(run.reports[0].detection.precision_noisy == 0.0);  // nothing is flipped
  CHECK(run.reports[0].detection.recall_noisy == 1.0);     // empty positive set
}

TEST_CASE("case study runs deterministically end to end") {
  CaseStudyConfig cfg = default_case_study_config();
  cfg.n_train = 400;
  cfg.n_test = 200;
  cfg.classes = 4;
  cfg.dim = 4;
  cfg.separation = 4.0;
  cfg.model.mlp.hidden = {16};
  cfg.model.mlp.epochs = 12;
  cfg.retrain_epochs = 8;
  cfg.gammas = {0.2, 0.5};
  cfg.seed = 21;

  const auto run = run_case_study(cfg);
  REQUIRE(run.reports.size() == 2);
  for (const auto& r : run.reports) {
    CHECK(r.pretrained_acc >= 0.0);
    CHECK(r.pretrained_acc <= 1.0);
    CHECK(r.retrained_acc >= 0.0);
    CHECK(r.retrained_acc <= 1.0);
    for (double rate : {r.detection.precision_clean, r.detection.recall_clean,
                        r.detection.precision_noisy, r.detection.recall_noisy}) {
      CHECK(rate >= 0.0);
      CHECK(rate <= 1.0);
    }
    CHECK(r.discrepancy >= 0.0);
    CHECK(std::isfinite(r.discrepancy));
  }
  CHECK(run.pretrain_log.epoch_loss.size() == 12);
  REQUIRE(run.retrain_logs.size() == 2);
  CHECK(run.retrain_logs[0].epoch_loss.size() == 8);

  const auto again = run_case_study(cfg);
  for (std::size_t i = 0; i < run.reports.size(); ++i) {
    CHECK(run.reports[i].retrained_acc == again.reports[i].retrained_acc);
    CHECK(run.reports[i].discrepancy == again.reports[i].discrepancy);
  }
}

TEST_CASE("retrain_robust validates its inputs") {
  const auto labeled = gen_gauss_classes(100, 2, 2, 4.0, 1);
  const auto pre = pretrain(labeled, ModelSpec::mlp_classifier(), 1);
  CHECK_THROWS_AS(retrain_robust(labeled, pre, 0.0, ModelSpec::mlp_classifier(), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(retrain_robust(labeled, pre, 0.5, ModelSpec::mean(), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(pretrain(labeled, ModelSpec::kde(), 1), std::invalid_argument);
}
