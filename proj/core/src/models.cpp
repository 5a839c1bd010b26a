#include "rdiv/models.hpp"

#include "rdiv/mlp.hpp"
#include "rdiv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rdiv {

namespace {

constexpr std::uint64_t kStreamMlpInit = 21;
constexpr std::uint64_t kStreamMlpBatch = 22;

constexpr double kPi = 3.14159265358979323846;

double apply_clip(double v, const std::optional<double>& clip) {
  if (!clip) return v;
  return std::min(std::max(v, -*clip), *clip);
}

// Batched KDE negative log density, numerically stable via max-shifted
// log-sum-exp. Evaluation points are processed in blocks to keep the
// distance matrix small.
Eigen::VectorXd kde_nll(const Matrix& train, const Matrix& pts, double h) {
  const Eigen::Index m = train.rows();
  const auto dim = static_cast<double>(train.cols());
  const double log_norm =
      std::log(static_cast<double>(m)) + 0.5 * dim * std::log(2.0 * kPi * h * h);
  const double inv = 1.0 / (2.0 * h * h);
  const Eigen::VectorXd train_sq = train.rowwise().squaredNorm();

  Eigen::VectorXd out(pts.rows());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < pts.rows(); start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, pts.rows() - start);
    const auto block = pts.middleRows(start, rows);
    Matrix d2 = (-2.0) * (block * train.transpose());
    d2.colwise() += block.rowwise().squaredNorm();
    d2.rowwise() += train_sq.transpose();
    d2 = d2.cwiseMax(0.0);  // gemm round-off can dip a hair below zero
    Matrix logk = (-inv) * d2;
    const Eigen::VectorXd mx = logk.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        ((logk.colwise() - mx).array().exp().rowwise().sum().log() + mx.array()).matrix();
    out.segment(start, rows) = (log_norm - lse.array()).matrix();
  }
  return out;
}

}  // namespace

ModelSpec ModelSpec::mean() { return ModelSpec{Family::Mean, Target::SelfReconstruction, {}, {}, {}}; }

ModelSpec ModelSpec::gaussian() {
  return ModelSpec{Family::Gaussian, Target::SelfReconstruction, {}, {}, {}};
}

ModelSpec ModelSpec::kde(std::optional<double> bandwidth) {
  return ModelSpec{Family::Kde, Target::SelfReconstruction, bandwidth, {}, {}};
}

ModelSpec ModelSpec::mlp_classifier(MlpConfig cfg) {
  return ModelSpec{Family::MlpClassifier, Target::Label, {}, std::move(cfg), {}};
}

ModelSpec ModelSpec::mlp_autoencoder(MlpConfig cfg) {
  return ModelSpec{Family::MlpAutoencoder, Target::SelfReconstruction, {}, std::move(cfg), {}};
}

void ModelSpec::validate() const {
  if (family == Family::MlpClassifier) {
    if (target != Target::Label) {
      throw std::invalid_argument("ModelSpec: MlpClassifier requires target=Label");
    }
  } else if (target != Target::SelfReconstruction) {
    throw std::invalid_argument("ModelSpec: only classifiers may use target=Label");
  }
  if (kde_bandwidth && !(*kde_bandwidth > 0.0)) {
    throw std::invalid_argument("ModelSpec: Kde bandwidth must be > 0");
  }
  if (loss_clip && !(*loss_clip > 0.0)) {
    throw std::invalid_argument("ModelSpec: loss_clip must be > 0");
  }
  if (family == Family::MlpClassifier || family == Family::MlpAutoencoder) {
    if (mlp.epochs < 1 || mlp.batch < 1 || !(mlp.learning_rate > 0.0)) {
      throw std::invalid_argument("ModelSpec: MLP needs epochs >= 1, batch >= 1, lr > 0");
    }
    for (int w : mlp.hidden) {
      if (w < 1) throw std::invalid_argument("ModelSpec: hidden widths must be >= 1");
    }
  }
}

std::size_t Hypothesis::dim() const {
  if (const auto* p = std::get_if<MeanParams>(&params)) return static_cast<std::size_t>(p->mu.size());
  if (const auto* p = std::get_if<GaussianParams>(&params)) return static_cast<std::size_t>(p->mu.size());
  if (const auto* p = std::get_if<KdeParams>(&params)) return static_cast<std::size_t>(p->train.cols());
  return static_cast<std::size_t>(std::get<MlpParams>(params).layers.front().w.cols());
}

double silverman_bandwidth(const Matrix& data) {
  const auto m = static_cast<double>(data.rows());
  const auto d = static_cast<double>(data.cols());
  double mean_var = 0.0;
  if (data.rows() > 1) {
    const Eigen::RowVectorXd mu = data.colwise().mean();
    mean_var = (data.rowwise() - mu).array().square().colwise().sum().mean() / (m - 1.0);
  }
  const double sigma = std::sqrt(mean_var);
  const double h = sigma * std::pow(4.0 / ((d + 2.0) * m), 1.0 / (d + 4.0));
  return std::max(h, 1e-9);
}

namespace {

Hypothesis fit_mlp(const ModelSpec& spec, const DataMatrix& data, std::uint64_t seed,
                   TrainLog* log) {
  const bool classifier = spec.family == Family::MlpClassifier;
  const std::size_t out_dim =
      classifier ? static_cast<std::size_t>(data.num_classes()) : data.dim();
  MlpParams params = mlp::he_init(data.dim(), spec.mlp.hidden, out_dim,
                                  classifier ? data.num_classes() : 0,
                                  derive_seed(seed, kStreamMlpInit));
  mlp::Optimizer opt(spec.mlp, params);
  Rng shuffle_rng(derive_seed(seed, kStreamMlpBatch));
  auto grads = mlp::Gradients::zeros_like(params);

  const std::size_t n = data.rows();
  const auto batch = static_cast<std::size_t>(spec.mlp.batch);
  for (int epoch = 0; epoch < spec.mlp.epochs; ++epoch) {
    auto order = shuffled_indices(n, shuffle_rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const auto rows = static_cast<Eigen::Index>(stop - start);
      Matrix xb(rows, static_cast<Eigen::Index>(data.dim()));
      std::vector<int> yb(classifier ? stop - start : 0);
      for (std::size_t k = start; k < stop; ++k) {
        xb.row(static_cast<Eigen::Index>(k - start)) = data.row(order[k]);
        if (classifier) yb[k - start] = data.label(order[k]);
      }
      const double loss = mlp::batch_loss_and_grads(params, xb, classifier ? &yb : nullptr,
                                                    spec.loss_clip, grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("fit: non-finite training loss in epoch " + std::to_string(epoch));
      }
      opt.apply(params, grads, epoch);
      epoch_total += loss * static_cast<double>(stop - start);
    }
    if (log != nullptr) log->epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }
  for (const auto& layer : params.layers) {
    if (!layer.w.allFinite() || !layer.b.allFinite()) {
      throw TrainingDiverged("fit: non-finite parameters after training");
    }
  }
  return Hypothesis{spec, std::move(params)};
}

}  // namespace

Hypothesis fit(const ModelSpec& spec, const DataMatrix& data, std::uint64_t seed,
               TrainLog* log) {
  spec.validate();
  if (spec.requires_labels() && !data.has_labels()) {
    throw std::invalid_argument("fit: classifier requires labeled data");
  }
  switch (spec.family) {
    case Family::Mean: {
      MeanParams p{data.values().colwise().mean()};
      return Hypothesis{spec, std::move(p)};
    }
    case Family::Gaussian: {
      // Closed-form MLE of a diagonal Gaussian, variances floored.
      GaussianParams p;
      p.mu = data.values().colwise().mean();
      p.var = ((data.values().rowwise() - p.mu).array().square().colwise().mean())
                  .cwiseMax(kVarianceFloor);
      return Hypothesis{spec, std::move(p)};
    }
    case Family::Kde: {
      const double bw = spec.kde_bandwidth ? *spec.kde_bandwidth
                                           : silverman_bandwidth(data.values());
      return Hypothesis{spec, KdeParams{data.values(), bw}};
    }
    case Family::MlpClassifier:
    case Family::MlpAutoencoder:
      return fit_mlp(spec, data, seed, log);
  }
  throw std::logic_error("fit: unknown family");
}

double sample_loss(const Hypothesis& h, const Eigen::RowVectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != h.dim()) {
    throw std::invalid_argument("sample_loss: dimension mismatch");
  }
  double loss = 0.0;
  if (const auto* p = std::get_if<MeanParams>(&h.params)) {
    loss = (x - p->mu).squaredNorm();
  } else if (const auto* p = std::get_if<GaussianParams>(&h.params)) {
    loss = 0.5 * ((x - p->mu).array().square() / p->var.array() +
                  (2.0 * kPi * p->var.array()).log())
                     .sum();
  } else if (const auto* p = std::get_if<KdeParams>(&h.params)) {
    Matrix single(1, x.size());
    single.row(0) = x;
    loss = kde_nll(p->train, single, p->bandwidth)[0];
  } else {
    if (h.spec.family == Family::MlpClassifier) {
      throw std::invalid_argument("sample_loss: classifier loss needs a label");
    }
    Matrix single(1, x.size());
    single.row(0) = x;
    loss = mlp::batch_losses(std::get<MlpParams>(h.params), single, nullptr, {})[0];
  }
  return apply_clip(loss, h.spec.loss_clip);
}

double sample_loss(const Hypothesis& h, const Eigen::RowVectorXd& x, int label) {
  if (h.spec.family != Family::MlpClassifier) {
    throw std::invalid_argument("sample_loss: label target requires a classifier");
  }
  if (static_cast<std::size_t>(x.size()) != h.dim()) {
    throw std::invalid_argument("sample_loss: dimension mismatch");
  }
  Matrix single(1, x.size());
  single.row(0) = x;
  std::vector<int> y{label};
  const double loss = mlp::batch_losses(std::get<MlpParams>(h.params), single, &y, {})[0];
  return apply_clip(loss, h.spec.loss_clip);
}

Eigen::VectorXd per_sample_losses(const Hypothesis& h, const DataMatrix& data) {
  if (data.dim() != h.dim()) {
    throw std::invalid_argument("per_sample_losses: dimension mismatch");
  }
  Eigen::VectorXd losses;
  if (const auto* p = std::get_if<MeanParams>(&h.params)) {
    losses = (data.values().rowwise() - p->mu).rowwise().squaredNorm();
  } else if (const auto* p = std::get_if<GaussianParams>(&h.params)) {
    Eigen::ArrayXXd quad = (data.values().rowwise() - p->mu).array().square();
    for (Eigen::Index j = 0; j < quad.cols(); ++j) quad.col(j) /= p->var[j];
    const double log_term = (2.0 * kPi * p->var.array()).log().sum();
    losses = (0.5 * (quad.rowwise().sum() + log_term)).matrix();
  } else if (const auto* p = std::get_if<KdeParams>(&h.params)) {
    losses = kde_nll(p->train, data.values(), p->bandwidth);
  } else {
    const bool classifier = h.spec.family == Family::MlpClassifier;
    if (classifier && !data.has_labels()) {
      throw std::invalid_argument("per_sample_losses: classifier requires labeled data");
    }
    return mlp::batch_losses(std::get<MlpParams>(h.params), data.values(),
                             classifier ? &data.labels() : nullptr, h.spec.loss_clip);
  }
  if (h.spec.loss_clip) {
    for (Eigen::Index i = 0; i < losses.size(); ++i) {
      losses[i] = apply_clip(losses[i], h.spec.loss_clip);
    }
  }
  return losses;
}

double empirical_risk(const Hypothesis& h, const DataMatrix& data) {
  return per_sample_losses(h, data).mean();
}

double classification_accuracy(const Hypothesis& h, const DataMatrix& data) {
  if (h.spec.family != Family::MlpClassifier) {
    throw std::invalid_argument("classification_accuracy: requires a classifier");
  }
  if (!data.has_labels()) {
    throw std::invalid_argument("classification_accuracy: requires labeled data");
  }
  const Matrix logits = mlp::forward(std::get<MlpParams>(h.params), data.values());
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    hits += (static_cast<int>(best) == data.label(static_cast<std::size_t>(i)));
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double grad_check(const ModelSpec& spec, const DataMatrix& data, std::uint64_t seed) {
  spec.validate();
  const bool classifier = spec.family == Family::MlpClassifier;
  if (spec.family != Family::MlpClassifier && spec.family != Family::MlpAutoencoder) {
    throw std::invalid_argument("grad_check: MLP families only");
  }
  if (classifier && !data.has_labels()) {
    throw std::invalid_argument("grad_check: classifier requires labeled data");
  }
  const std::size_t out_dim =
      classifier ? static_cast<std::size_t>(data.num_classes()) : data.dim();
  MlpParams params = mlp::he_init(data.dim(), spec.mlp.hidden, out_dim,
                                  classifier ? data.num_classes() : 0,
                                  derive_seed(seed, kStreamMlpInit));
  const Matrix& x = data.values();
  const std::vector<int>* labels = classifier ? &data.labels() : nullptr;

  auto grads = mlp::Gradients::zeros_like(params);
  mlp::batch_loss_and_grads(params, x, labels, spec.loss_clip, grads);

  constexpr double step = 1e-5;
  auto mean_loss = [&]() { return mlp::batch_losses(params, x, labels, spec.loss_clip).mean(); };
  double worst = 0.0;
  auto probe = [&](double& theta, double analytic) {
    const double orig = theta;
    theta = orig + step;
    const double lp = mean_loss();
    theta = orig - step;
    const double lm = mean_loss();
    theta = orig;
    const double fd = (lp - lm) / (2.0 * step);
    const double err =
        std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
    worst = std::max(worst, err);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
        probe(layer.w(i, j), grads.w[l](i, j));
      }
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
      probe(layer.b[i], grads.b[l][i]);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Hypothesis blob (versioned, little-endian)
// ---------------------------------------------------------------------------

namespace {

constexpr char kHypMagic[4] = {'R', 'H', 'Y', 'P'};
constexpr std::uint32_t kHypVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_vector(std::vector<std::uint8_t>& out, const Eigen::RowVectorXd& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(out, v[i]);
}

void put_col_vector(std::vector<std::uint8_t>& out, const Eigen::VectorXd& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(out, v[i]);
}

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& blob) : blob_(blob) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > blob_.size()) {
      throw std::runtime_error("deserialize_hypothesis: truncated blob");
    }
    T v;
    std::memcpy(&v, blob_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  Eigen::RowVectorXd get_vector() {
    const auto n = get<std::uint64_t>();
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get<double>();
    return v;
  }

  Eigen::VectorXd get_col_vector() {
    const auto n = get<std::uint64_t>();
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get<double>();
    return v;
  }

  Matrix get_matrix() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    }
    return m;
  }

 private:
  const std::vector<std::uint8_t>& blob_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_hypothesis(const Hypothesis& h) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kHypMagic, kHypMagic + sizeof(kHypMagic));
  put<std::uint32_t>(out, kHypVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(h.spec.family));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(h.spec.target));
  put<std::uint8_t>(out, h.spec.loss_clip.has_value() ? 1 : 0);
  put<double>(out, h.spec.loss_clip.value_or(0.0));
  put<std::uint8_t>(out, h.spec.kde_bandwidth.has_value() ? 1 : 0);
  put<double>(out, h.spec.kde_bandwidth.value_or(0.0));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(h.spec.mlp.hidden.size()));
  for (int w : h.spec.mlp.hidden) put<std::int32_t>(out, w);
  put<std::int32_t>(out, h.spec.mlp.epochs);
  put<std::int32_t>(out, h.spec.mlp.batch);
  put<double>(out, h.spec.mlp.learning_rate);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(h.spec.mlp.optimizer));

  if (const auto* p = std::get_if<MeanParams>(&h.params)) {
    put_vector(out, p->mu);
  } else if (const auto* p = std::get_if<GaussianParams>(&h.params)) {
    put_vector(out, p->mu);
    put_vector(out, p->var);
  } else if (const auto* p = std::get_if<KdeParams>(&h.params)) {
    put<double>(out, p->bandwidth);
    put_matrix(out, p->train);
  } else {
    const auto& net = std::get<MlpParams>(h.params);
    put<std::int32_t>(out, net.num_classes);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
      put_matrix(out, layer.w);
      put_col_vector(out, layer.b);
    }
  }
  return out;
}

Hypothesis deserialize_hypothesis(const std::vector<std::uint8_t>& blob) {
  if (blob.size() < 8 || std::memcmp(blob.data(), kHypMagic, sizeof(kHypMagic)) != 0) {
    throw std::runtime_error("deserialize_hypothesis: bad magic");
  }
  Reader r(blob);
  r.get<std::uint32_t>();  // magic already checked
  const auto version = r.get<std::uint32_t>();
  if (version != kHypVersion) {
    throw std::runtime_error("deserialize_hypothesis: unsupported version " +
                             std::to_string(version));
  }
  ModelSpec spec;
  spec.family = static_cast<Family>(r.get<std::uint8_t>());
  spec.target = static_cast<Target>(r.get<std::uint8_t>());
  const bool has_clip = r.get<std::uint8_t>() != 0;
  const double clip = r.get<double>();
  if (has_clip) spec.loss_clip = clip;
  const bool has_bw = r.get<std::uint8_t>() != 0;
  const double bw = r.get<double>();
  if (has_bw) spec.kde_bandwidth = bw;
  const auto n_hidden = r.get<std::uint32_t>();
  spec.mlp.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.mlp.hidden.push_back(r.get<std::int32_t>());
  spec.mlp.epochs = r.get<std::int32_t>();
  spec.mlp.batch = r.get<std::int32_t>();
  spec.mlp.learning_rate = r.get<double>();
  spec.mlp.optimizer = static_cast<OptimizerKind>(r.get<std::uint8_t>());

  switch (spec.family) {
    case Family::Mean:
      return Hypothesis{spec, MeanParams{r.get_vector()}};
    case Family::Gaussian: {
      GaussianParams p;
      p.mu = r.get_vector();
      p.var = r.get_vector();
      return Hypothesis{spec, std::move(p)};
    }
    case Family::Kde: {
      KdeParams p;
      p.bandwidth = r.get<double>();
      p.train = r.get_matrix();
      return Hypothesis{spec, std::move(p)};
    }
    case Family::MlpClassifier:
    case Family::MlpAutoencoder: {
      MlpParams p;
      p.num_classes = r.get<std::int32_t>();
      const auto n_layers = r.get<std::uint32_t>();
      for (std::uint32_t l = 0; l < n_layers; ++l) {
        MlpLayer layer;
        layer.w = r.get_matrix();
        layer.b = r.get_col_vector();
        p.layers.push_back(std::move(layer));
      }
      return Hypothesis{spec, std::move(p)};
    }
  }
  throw std::runtime_error("deserialize_hypothesis: unknown family tag");
}

void save_hypothesis(const Hypothesis& h, const std::string& path) {
  const auto blob = serialize_hypothesis(h);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_hypothesis: cannot open " + path);
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("save_hypothesis: write failed for " + path);
}

Hypothesis load_hypothesis(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_hypothesis: cannot open " + path);
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return deserialize_hypothesis(blob);
}

}  // namespace rdiv
