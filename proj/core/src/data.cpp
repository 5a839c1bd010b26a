#include "rdiv/data.hpp"

#include "rdiv/rng.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian; big-endian hosts are unsupported");

namespace rdiv {

namespace {

// Stream tags for derive_seed; one per consumer so no two purposes ever share
// a generator state.
constexpr std::uint64_t kStreamBlob = 1;
constexpr std::uint64_t kStreamHdgm = 2;
constexpr std::uint64_t kStreamGaussClasses = 3;
constexpr std::uint64_t kStreamFlip = 4;
constexpr std::uint64_t kStreamPermute = 5;
constexpr std::uint64_t kStreamRowShuffle = 6;

constexpr char kBinaryMagic[8] = {'R', 'D', 'I', 'V', '0', '0', '0', '1'};

std::size_t side_index(Side side) { return side == Side::P ? 0 : 1; }

// Applies the same permutation to rows and labels.
DataMatrix reorder(const Matrix& values, const std::vector<int>* labels,
                   int num_classes, const std::vector<std::size_t>& order) {
  const auto n = static_cast<Eigen::Index>(order.size());
  Matrix out(n, values.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = values.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]));
  if (labels == nullptr) return DataMatrix(std::move(out));
  std::vector<int> lab(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) lab[i] = (*labels)[order[i]];
  return DataMatrix(std::move(out), std::move(lab), num_classes);
}

DataMatrix shuffle_rows(DataMatrix data, std::uint64_t seed) {
  Rng rng(seed);
  auto order = shuffled_indices(data.rows(), rng);
  const std::vector<int>* labels = data.has_labels() ? &data.labels() : nullptr;
  return reorder(data.values(), labels, data.num_classes(), order);
}

}  // namespace

DataMatrix::DataMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw std::invalid_argument("DataMatrix: need at least one row and one column");
  }
  if (!values_.allFinite()) {
    throw std::invalid_argument("DataMatrix: values must be finite");
  }
}

DataMatrix::DataMatrix(Matrix values, std::vector<int> labels, int num_classes)
    : DataMatrix(std::move(values)) {
  if (labels.size() != rows()) {
    throw std::invalid_argument("DataMatrix: label count must match row count");
  }
  if (num_classes < 1) {
    throw std::invalid_argument("DataMatrix: num_classes must be >= 1");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("DataMatrix: label outside [0, num_classes)");
    }
  }
  labels_ = std::move(labels);
  num_classes_ = num_classes;
}

const std::vector<int>& DataMatrix::labels() const {
  if (!labels_) throw std::logic_error("DataMatrix: no labels present");
  return *labels_;
}

DataMatrix DataMatrix::with_labels(std::vector<int> labels, int num_classes) const {
  return DataMatrix(values_, std::move(labels), num_classes);
}

DatasetPair::DatasetPair(DataMatrix p, DataMatrix q)
    : p_hat(std::move(p)), q_hat(std::move(q)) {
  if (p_hat.rows() != q_hat.rows()) {
    throw std::invalid_argument("DatasetPair: sides must have equal sample counts");
  }
  if (p_hat.dim() != q_hat.dim()) {
    throw std::invalid_argument("DatasetPair: sides must have equal dimension");
  }
  if (p_hat.has_labels() != q_hat.has_labels()) {
    throw std::invalid_argument("DatasetPair: sides must both be labeled or both unlabeled");
  }
  if (p_hat.has_labels() && p_hat.num_classes() != q_hat.num_classes()) {
    throw std::invalid_argument("DatasetPair: sides must declare the same class count");
  }
}

std::size_t FlipMask::flip_count() const {
  std::size_t k = 0;
  for (auto f : flipped) k += (f != 0);
  return k;
}

DataMatrix gen_blob(std::size_t n, std::uint64_t seed, Side side) {
  if (n < 1) throw std::invalid_argument("gen_blob: n must be >= 1");
  Rng rng(derive_seed(seed, kStreamBlob, side_index(side)));
  // sqrt(2)/2: entries of the +-45 degree rotation.
  const double c = std::sqrt(0.5);
  Matrix out(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto comp = rng.below(9);
    const double cx = 5.0 * static_cast<double>(comp % 3);
    const double cy = 5.0 * static_cast<double>(comp / 3);
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    if (side == Side::P) {
      out(i, 0) = cx + z0;
      out(i, 1) = cy + z1;
    } else {
      // A = R(theta) diag(1, 2), theta = +45 deg for even components and
      // -45 deg for odd ones, so cov = R diag(1, 4) R^T.
      const double s = (comp % 2 == 0) ? c : -c;
      out(i, 0) = cx + c * z0 - 2.0 * s * z1;
      out(i, 1) = cy + s * z0 + 2.0 * c * z1;
    }
  }
  return shuffle_rows(DataMatrix(std::move(out)),
                      derive_seed(seed, kStreamRowShuffle, kStreamBlob + 10 * side_index(side)));
}

DataMatrix gen_hdgm(std::size_t n, std::size_t dim, std::uint64_t seed, Side side) {
  if (n < 1) throw std::invalid_argument("gen_hdgm: n must be >= 1");
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("gen_hdgm: dimension must be even and >= 2");
  }
  Rng rng(derive_seed(seed, kStreamHdgm, side_index(side)));
  // Cholesky factor of [[1, rho], [rho, 1]].
  const double rho = kHdgmOffDiagonal;
  const double l11 = std::sqrt(1.0 - rho * rho);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const bool shifted = rng.below(2) == 1;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = rng.normal();
    if (shifted) {
      if (side == Side::Q) {
        out(i, 1) = rho * out(i, 0) + l11 * out(i, 1);
      }
      out(i, 0) += kHdgmComponentShift;
      out(i, 1) += kHdgmComponentShift;
    }
  }
  return shuffle_rows(DataMatrix(std::move(out)),
                      derive_seed(seed, kStreamRowShuffle, kStreamHdgm + 10 * side_index(side)));
}

DataMatrix gen_gauss_classes(std::size_t n, int classes, std::size_t dim,
                             double separation, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_gauss_classes: n must be >= 1");
  if (classes < 2) throw std::invalid_argument("gen_gauss_classes: need at least 2 classes");
  if (!(separation > 0.0)) {
    throw std::invalid_argument("gen_gauss_classes: separation must be > 0");
  }
  if (static_cast<std::size_t>(classes) > dim) {
    throw std::invalid_argument("gen_gauss_classes: classes must not exceed dim (centres need distinct axes)");
  }
  Rng rng(derive_seed(seed, kStreamGaussClasses, 0));
  Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<int> labels(n);
  // Balanced within one sample: the first n % classes classes get the extras.
  std::size_t row = 0;
  for (int cls = 0; cls < classes; ++cls) {
    std::size_t count = n / static_cast<std::size_t>(classes) +
                        (static_cast<std::size_t>(cls) < n % static_cast<std::size_t>(classes) ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k, ++row) {
      labels[row] = cls;
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        values(static_cast<Eigen::Index>(row), j) = rng.normal();
      }
      values(static_cast<Eigen::Index>(row), cls) += separation;
    }
  }
  return shuffle_rows(DataMatrix(std::move(values), std::move(labels), classes),
                      derive_seed(seed, kStreamRowShuffle, kStreamGaussClasses));
}

std::pair<DataMatrix, FlipMask> flip_labels(const DataMatrix& data, double rate,
                                            FlipMode mode, std::uint64_t seed) {
  if (!data.has_labels()) {
    throw std::invalid_argument("flip_labels: data must be labeled");
  }
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("flip_labels: rate must lie in [0, 1)");
  }
  const std::size_t n = data.rows();
  const int num_classes = data.num_classes();
  // Small epsilon so exact products like 0.3 * 10 do not round below the
  // intended floor.
  auto k = static_cast<std::size_t>(rate * static_cast<double>(n) + 1e-9);
  if (k > n) k = n;

  FlipMask mask;
  mask.flipped.assign(n, 0);
  mask.original_labels = data.labels();

  Rng rng(derive_seed(seed, kStreamFlip, 0));
  auto order = shuffled_indices(n, rng);
  std::vector<int> corrupted = data.labels();
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t i = order[t];
    const int old = corrupted[i];
    int fresh;
    if (mode == FlipMode::Symmetry) {
      // Uniform over the other C-1 classes; never the identity.
      const auto r = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes - 1)));
      fresh = r + (r >= old ? 1 : 0);
    } else {
      fresh = (old + 1) % num_classes;
    }
    corrupted[i] = fresh;
    mask.flipped[i] = 1;
  }
  return {data.with_labels(std::move(corrupted), num_classes), std::move(mask)};
}

DatasetPair permute_pair(const DatasetPair& pair, std::uint64_t seed) {
  const std::size_t n = pair.n();
  Rng rng(derive_seed(seed, kStreamPermute, 0));
  auto order = shuffled_indices(2 * n, rng);

  const bool labeled = pair.p_hat.has_labels();
  auto pooled_row = [&](std::size_t i) -> Eigen::RowVectorXd {
    return i < n ? pair.p_hat.row(i) : pair.q_hat.row(i - n);
  };
  auto pooled_label = [&](std::size_t i) -> int {
    return i < n ? pair.p_hat.label(i) : pair.q_hat.label(i - n);
  };

  const auto dim = static_cast<Eigen::Index>(pair.dim());
  Matrix new_p(static_cast<Eigen::Index>(n), dim);
  Matrix new_q(static_cast<Eigen::Index>(n), dim);
  std::vector<int> lab_p, lab_q;
  if (labeled) {
    lab_p.resize(n);
    lab_q.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    new_p.row(static_cast<Eigen::Index>(i)) = pooled_row(order[i]);
    new_q.row(static_cast<Eigen::Index>(i)) = pooled_row(order[n + i]);
    if (labeled) {
      lab_p[i] = pooled_label(order[i]);
      lab_q[i] = pooled_label(order[n + i]);
    }
  }
  if (labeled) {
    const int num_classes = pair.p_hat.num_classes();
    return DatasetPair(DataMatrix(std::move(new_p), std::move(lab_p), num_classes),
                       DataMatrix(std::move(new_q), std::move(lab_q), num_classes));
  }
  return DatasetPair(DataMatrix(std::move(new_p)), DataMatrix(std::move(new_q)));
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_csv(const DataMatrix& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < data.dim(); ++j) {
    if (j > 0) out << ',';
    out << 'x' << j;
  }
  if (data.has_labels()) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      if (j > 0) out << ',';
      out << format_double(data.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    if (data.has_labels()) out << ',' << data.label(i);
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

DataMatrix load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);

  const auto header = split_csv_line(line);
  bool labeled = !header.empty() && header.back() == "label";
  const std::size_t dim = header.size() - (labeled ? 1 : 0);
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw std::runtime_error("load_csv: unexpected header column '" + header[j] + "' in " + path);
    }
  }
  if (dim == 0) throw std::runtime_error("load_csv: no feature columns in " + path);

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("load_csv: row with wrong field count in " + path);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(fields[j].c_str(), &end);
      if (end == fields[j].c_str() || *end != '\0' || errno == ERANGE) {
        throw std::runtime_error("load_csv: malformed value '" + fields[j] + "' in " + path);
      }
      values.push_back(v);
    }
    if (labeled) {
      labels.push_back(std::stoi(fields[dim]));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("load_csv: no data rows in " + path);

  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * dim + j];
    }
  }
  if (!labeled) return DataMatrix(std::move(m));
  int num_classes = 1;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  return DataMatrix(std::move(m), std::move(labels), num_classes);
}

void save_binary(const DataMatrix& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_binary: cannot open " + path);
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  const std::uint64_t n = data.rows();
  const std::uint64_t d = data.dim();
  const std::uint8_t has_labels = data.has_labels() ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(&has_labels), sizeof(has_labels));
  std::vector<double> row_major(data.rows() * data.dim());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      row_major[i * data.dim() + j] =
          data.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(row_major.size() * sizeof(double)));
  if (has_labels) {
    std::vector<std::int32_t> lab(data.labels().begin(), data.labels().end());
    out.write(reinterpret_cast<const char*>(lab.data()),
              static_cast<std::streamsize>(lab.size() * sizeof(std::int32_t)));
  }
  if (!out) throw std::runtime_error("save_binary: write failed for " + path);
}

DataMatrix load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_binary: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBinaryMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("load_binary: bad magic in " + path);
  }
  std::uint64_t n = 0, d = 0;
  std::uint8_t has_labels = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  in.read(reinterpret_cast<char*>(&has_labels), sizeof(has_labels));
  if (!in || n == 0 || d == 0) throw std::runtime_error("load_binary: bad dimensions in " + path);
  std::vector<double> row_major(n * d);
  in.read(reinterpret_cast<char*>(row_major.data()),
          static_cast<std::streamsize>(row_major.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_binary: truncated values in " + path);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row_major[i * d + j];
    }
  }
  if (!has_labels) return DataMatrix(std::move(m));
  std::vector<std::int32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(std::int32_t)));
  if (!in) throw std::runtime_error("load_binary: truncated labels in " + path);
  std::vector<int> labels(raw.begin(), raw.end());
  int num_classes = 1;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  return DataMatrix(std::move(m), std::move(labels), num_classes);
}

DataMatrix load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  in.close();
  if (std::memcmp(magic, kBinaryMagic, sizeof(magic)) == 0) return load_binary(path);
  return load_csv(path);
}

}  // namespace rdiv
