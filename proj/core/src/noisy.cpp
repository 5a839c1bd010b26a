#include "rdiv/noisy.hpp"

#include "rdiv/mlp.hpp"
#include "rdiv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rdiv {

namespace {

constexpr std::uint64_t kStreamTrainData = 51;
constexpr std::uint64_t kStreamTestData = 52;
constexpr std::uint64_t kStreamFlip = 53;
constexpr std::uint64_t kStreamPretrain = 54;
constexpr std::uint64_t kStreamRetrain = 55;
constexpr std::uint64_t kStreamRetrainInit = 56;
constexpr std::uint64_t kStreamRetrainBatch = 57;

std::size_t noisy_count(double gamma, std::size_t batch) {
  return static_cast<std::size_t>(gamma * static_cast<double>(batch) + 1e-9);
}

// Ascending (loss, index) order; the index tiebreak sends equal-loss samples
// with lower original index to the clean side.
std::vector<std::size_t> risk_order(const Eigen::VectorXd& losses,
                                    const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> order = idx;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double la = losses[static_cast<Eigen::Index>(a)];
    const double lb = losses[static_cast<Eigen::Index>(b)];
    if (la != lb) return la < lb;
    return a < b;
  });
  return order;
}

}  // namespace

Hypothesis pretrain(const DataMatrix& corrupted, const ModelSpec& spec, std::uint64_t seed,
                    TrainLog* log) {
  if (spec.family != Family::MlpClassifier) {
    throw std::invalid_argument("pretrain: requires an MlpClassifier spec");
  }
  return fit(spec, corrupted, seed, log);
}

NoisySplit split_by_risk(const DataMatrix& batch, const Hypothesis& h, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("split_by_risk: gamma must lie in (0, 1)");
  }
  if (!batch.has_labels()) {
    throw std::invalid_argument("split_by_risk: batch must be labeled");
  }
  const Eigen::VectorXd losses = per_sample_losses(h, batch);
  std::vector<std::size_t> idx(batch.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto order = risk_order(losses, idx);

  NoisySplit split;
  split.gamma = gamma;
  const std::size_t k = noisy_count(gamma, batch.rows());
  const std::size_t n_clean = batch.rows() - k;
  split.clean_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_clean));
  split.noisy_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_clean), order.end());
  std::sort(split.clean_idx.begin(), split.clean_idx.end());
  std::sort(split.noisy_idx.begin(), split.noisy_idx.end());
  return split;
}

Hypothesis retrain_robust(const DataMatrix& corrupted, const Hypothesis& pretrained,
                          double gamma, const ModelSpec& spec, std::uint64_t seed,
                          TrainLog* log) {
  spec.validate();
  if (spec.family != Family::MlpClassifier) {
    throw std::invalid_argument("retrain_robust: requires an MlpClassifier spec");
  }
  if (!corrupted.has_labels()) {
    throw std::invalid_argument("retrain_robust: data must be labeled");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("retrain_robust: gamma must lie in (0, 1)");
  }

  // The splitter stays frozen: per-sample risks are computed once, so the
  // split of any batch is a pure function of its membership.
  const Eigen::VectorXd pre_losses = per_sample_losses(pretrained, corrupted);

  const std::size_t n = corrupted.rows();
  const auto dim = static_cast<Eigen::Index>(corrupted.dim());
  MlpParams params = mlp::he_init(corrupted.dim(), spec.mlp.hidden,
                                  static_cast<std::size_t>(corrupted.num_classes()),
                                  corrupted.num_classes(),
                                  derive_seed(seed, kStreamRetrainInit));
  mlp::Optimizer opt(spec.mlp, params);
  Rng shuffle_rng(derive_seed(seed, kStreamRetrainBatch));
  auto grads_clean = mlp::Gradients::zeros_like(params);
  auto grads_noisy = mlp::Gradients::zeros_like(params);

  const auto batch_size = static_cast<std::size_t>(spec.mlp.batch);
  for (int epoch = 0; epoch < spec.mlp.epochs; ++epoch) {
    auto order = shuffled_indices(n, shuffle_rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const auto ranked = risk_order(pre_losses, batch_idx);
      const std::size_t k = noisy_count(gamma, ranked.size());
      const std::size_t n_clean = ranked.size() - k;

      Matrix x_clean(static_cast<Eigen::Index>(n_clean), dim);
      std::vector<int> y_clean(n_clean);
      for (std::size_t i = 0; i < n_clean; ++i) {
        x_clean.row(static_cast<Eigen::Index>(i)) = corrupted.row(ranked[i]);
        y_clean[i] = corrupted.label(ranked[i]);
      }
      double batch_loss =
          mlp::batch_loss_and_grads(params, x_clean, &y_clean, spec.loss_clip, grads_clean);

      if (k > 0) {
        Matrix x_noisy(static_cast<Eigen::Index>(k), dim);
        std::vector<int> y_noisy(k);
        for (std::size_t i = 0; i < k; ++i) {
          x_noisy.row(static_cast<Eigen::Index>(i)) = corrupted.row(ranked[n_clean + i]);
          y_noisy[i] = corrupted.label(ranked[n_clean + i]);
        }
        const double noisy_loss = mlp::batch_loss_and_grads(
            params, x_noisy, &y_noisy, kComplementaryClip, grads_noisy);
        batch_loss -= noisy_loss;
        grads_clean.accumulate(-1.0, grads_noisy);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged("retrain_robust: non-finite loss in batch starting at sample " +
                               std::to_string(start));
      }
      opt.apply(params, grads_clean, epoch);
      epoch_total += batch_loss * static_cast<double>(stop - start);
    }
    if (log != nullptr) log->epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }
  for (const auto& layer : params.layers) {
    if (!layer.w.allFinite() || !layer.b.allFinite()) {
      throw TrainingDiverged("retrain_robust: non-finite parameters after training");
    }
  }
  return Hypothesis{spec, std::move(params)};
}

DetectionMetrics detection_metrics(const NoisySplit& split, const FlipMask& mask) {
  const std::size_t n = mask.flipped.size();
  for (std::size_t i : split.clean_idx) {
    if (i >= n) throw std::invalid_argument("detection_metrics: split index outside mask");
  }
  for (std::size_t i : split.noisy_idx) {
    if (i >= n) throw std::invalid_argument("detection_metrics: split index outside mask");
  }
  const std::size_t total_flipped = mask.flip_count();
  const std::size_t total_clean = n - total_flipped;

  std::size_t noisy_hits = 0;
  for (std::size_t i : split.noisy_idx) noisy_hits += (mask.flipped[i] != 0);
  std::size_t clean_hits = 0;
  for (std::size_t i : split.clean_idx) clean_hits += (mask.flipped[i] == 0);

  auto rate = [](std::size_t num, std::size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  DetectionMetrics m;
  m.precision_noisy = rate(noisy_hits, split.noisy_idx.size());
  m.recall_noisy = rate(noisy_hits, total_flipped);
  m.precision_clean = rate(clean_hits, split.clean_idx.size());
  m.recall_clean = rate(clean_hits, total_clean);
  return m;
}

double clean_noisy_discrepancy(const DataMatrix& corrupted, const Hypothesis& h,
                               double gamma) {
  const NoisySplit split = split_by_risk(corrupted, h, gamma);
  if (split.noisy_idx.empty()) return 0.0;
  const Eigen::VectorXd losses = per_sample_losses(h, corrupted);
  auto mean_over = [&](const std::vector<std::size_t>& idx) {
    double total = 0.0;
    for (std::size_t i : idx) total += losses[static_cast<Eigen::Index>(i)];
    return total / static_cast<double>(idx.size());
  };
  return std::abs(mean_over(split.clean_idx) - mean_over(split.noisy_idx));
}

CaseStudyConfig default_case_study_config() {
  CaseStudyConfig cfg;
  MlpConfig mlp;
  mlp.hidden = {64, 64};
  mlp.epochs = 150;
  mlp.batch = 128;
  mlp.learning_rate = 1e-3;
  mlp.optimizer = OptimizerKind::Adam;
  cfg.model = ModelSpec::mlp_classifier(mlp);
  return cfg;
}

CaseStudyResult run_case_study(const CaseStudyConfig& cfg) {
  if (cfg.model.family != Family::MlpClassifier) {
    throw std::invalid_argument("run_case_study: model must be an MlpClassifier");
  }
  const DataMatrix train = gen_gauss_classes(cfg.n_train, cfg.classes, cfg.dim,
                                             cfg.separation,
                                             derive_seed(cfg.seed, kStreamTrainData));
  const DataMatrix test = gen_gauss_classes(cfg.n_test, cfg.classes, cfg.dim,
                                            cfg.separation,
                                            derive_seed(cfg.seed, kStreamTestData));
  auto [corrupted, mask] =
      flip_labels(train, cfg.noise_rate, cfg.flip_mode, derive_seed(cfg.seed, kStreamFlip));

  CaseStudyResult result;
  const Hypothesis pre = pretrain(corrupted, cfg.model,
                                  derive_seed(cfg.seed, kStreamPretrain),
                                  &result.pretrain_log);
  const double pre_acc = classification_accuracy(pre, test);

  ModelSpec retrain_spec = cfg.model;
  retrain_spec.mlp.epochs = cfg.retrain_epochs;

  for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
    const double gamma = cfg.gammas[g];
    CaseStudyReport report;
    report.gamma = gamma;
    report.pretrained_acc = pre_acc;
    const NoisySplit split = split_by_risk(corrupted, pre, gamma);
    report.detection = detection_metrics(split, mask);
    report.discrepancy = clean_noisy_discrepancy(corrupted, pre, gamma);
    TrainLog retrain_log;
    const Hypothesis re = retrain_robust(corrupted, pre, gamma, retrain_spec,
                                         derive_seed(cfg.seed, kStreamRetrain, g),
                                         &retrain_log);
    report.retrained_acc = classification_accuracy(re, test);
    result.reports.push_back(report);
    result.retrain_logs.push_back(std::move(retrain_log));
  }
  return result;
}

}  // namespace rdiv
