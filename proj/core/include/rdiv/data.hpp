#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rdiv {

using Matrix = Eigen::MatrixXd;  // one sample per row

/// N x d sample matrix with optional integer class labels. Values are
/// validated to be finite and labels to lie in [0, num_classes) on
/// construction; instances are immutable afterwards and safe to share
/// across threads.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values);
  DataMatrix(Matrix values, std::vector<int> labels, int num_classes);

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  int num_classes() const { return num_classes_; }
  int label(std::size_t i) const { return labels().at(i); }

  Eigen::RowVectorXd row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }

  /// Copy with labels replaced (same class count).
  DataMatrix with_labels(std::vector<int> labels, int num_classes) const;

 private:
  Matrix values_;
  std::optional<std::vector<int>> labels_;
  int num_classes_ = 0;
};

/// Two datasets of equal sample count and dimension; the realization of the
/// two sides of a two-sample problem. The merged set is always derived on
/// demand, never stored.
struct DatasetPair {
  DatasetPair(DataMatrix p, DataMatrix q);

  DataMatrix p_hat;
  DataMatrix q_hat;

  std::size_t n() const { return p_hat.rows(); }
  std::size_t dim() const { return p_hat.dim(); }
};

/// Which samples of a corrupted dataset had their label replaced, plus the
/// labels they had before corruption.
struct FlipMask {
  std::vector<std::uint8_t> flipped;   // one flag per sample
  std::vector<int> original_labels;    // all N originals

  std::size_t flip_count() const;
};

enum class Side { P, Q };
enum class FlipMode { Symmetry, Pair };

// ---------------------------------------------------------------------------
// Synthetic generators. All are pure functions of their arguments (seed
// included); row order is shuffled once after generation so that class or
// component order never leaks into batched consumers.
// ---------------------------------------------------------------------------

/// 2-D mixture of nine unit-weight Gaussians centred on a 3x3 grid with
/// spacing 5 (centres {0,5,10}^2). Side P uses isotropic unit covariance;
/// side Q replaces each component covariance by R diag(1,4) R^T where R
/// rotates by +45 degrees for even component indices and -45 for odd ones.
DataMatrix gen_blob(std::size_t n, std::uint64_t seed, Side side);

/// d-dimensional equal-weight mixture of two Gaussians. Component 0 is
/// centred at the origin, component 1 at (2, 2, 0, ..., 0). Both components
/// have identity covariance except that on side Q component 1's first two
/// coordinates have covariance [[1, 0.5], [0.5, 1]]. Coordinates >= 2 are
/// standard normal in every component on both sides. Requires d even, d >= 2.
DataMatrix gen_hdgm(std::size_t n, std::size_t dim, std::uint64_t seed, Side side);

constexpr double kHdgmComponentShift = 2.0;    // mean of component 1, coords 0 and 1
constexpr double kHdgmOffDiagonal = 0.5;       // perturbed covariance, side Q

/// Labeled isotropic Gaussian blobs: class c is centred at separation * e_c,
/// unit covariance, class sizes balanced within one sample. Requires
/// classes <= dim so every centre sits on its own axis.
DataMatrix gen_gauss_classes(std::size_t n, int classes, std::size_t dim,
                             double separation, std::uint64_t seed);

/// Replaces the labels of floor(rate * N) uniformly chosen samples.
/// Symmetry draws uniformly from the other C-1 classes (never the identity);
/// Pair maps y to (y+1) mod C. Returns the corrupted data and the mask of
/// what changed.
std::pair<DataMatrix, FlipMask> flip_labels(const DataMatrix& data, double rate,
                                            FlipMode mode, std::uint64_t seed);

/// Uniform re-partition of the pooled 2N rows into two fresh sets of N.
/// Rows (and labels) are moved, never copied-and-altered, so the pooled
/// multiset is preserved exactly.
DatasetPair permute_pair(const DatasetPair& pair, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization. CSV uses a header row "x0,...,x{d-1}[,label]" with float64
// values printed to 17 significant digits. The binary format is
// little-endian: magic "RDIV0001", u64 N, u64 d, u8 has_labels, N*d float64
// row-major values, then N int32 labels when present.
// ---------------------------------------------------------------------------

void save_csv(const DataMatrix& data, const std::string& path);
DataMatrix load_csv(const std::string& path);

void save_binary(const DataMatrix& data, const std::string& path);
DataMatrix load_binary(const std::string& path);

/// Reads either format, sniffing the binary magic first.
DataMatrix load_dataset(const std::string& path);

/// float64 -> 17 significant digits (round-trip exact); used by every CSV writer.
std::string format_double(double v);

}  // namespace rdiv
