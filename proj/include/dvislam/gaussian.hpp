#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace dvislam {

/// Moment form N(mean, cov).
struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Gaussian() = default;
  Gaussian(Eigen::VectorXd mean_, Eigen::MatrixXd cov_);

  Eigen::Index dim() const { return mean.size(); }
};

/// Information form: info_vec = cov^-1 mean, info_mat = cov^-1.
struct InfoGaussian {
  Eigen::VectorXd info_vec;
  Eigen::MatrixXd info_mat;

  InfoGaussian() = default;
  InfoGaussian(Eigen::VectorXd info_vec_, Eigen::MatrixXd info_mat_);

  Eigen::Index dim() const { return info_vec.size(); }
};

/// Ordered list of (offset, length) ranges selecting a sub-vector of a joint
/// state. Ranges must not overlap; order is preserved in the selection.
class BlockIndex {
 public:
  struct Range {
    Eigen::Index offset;
    Eigen::Index length;
  };

  BlockIndex() = default;
  explicit BlockIndex(std::vector<Range> ranges);
  static BlockIndex contiguous(Eigen::Index offset, Eigen::Index length);

  const std::vector<Range>& ranges() const { return ranges_; }
  Eigen::Index size() const;
  bool empty() const { return size() == 0; }

  /// Flat element indices in selection order.
  std::vector<Eigen::Index> indices() const;
  /// Throws InvalidArgument if any range leaves [0, dim) or ranges overlap.
  void validate(Eigen::Index dim) const;
  /// Ascending indices of [0, dim) not covered by this selection.
  BlockIndex complement(Eigen::Index dim) const;

  void append(Eigen::Index offset, Eigen::Index length);

 private:
  std::vector<Range> ranges_;
};

/// Weighted term of an information-form average.
struct WeightedInfo {
  double weight;
  InfoGaussian belief;
};

/// (M + M^T) / 2
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

/// LLT that throws NotPositiveDefinite (with the failing leading minor) on failure.
Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& m, const char* what);

/// Index of the first non-positive Cholesky pivot, or -1 if `m` is SPD.
Eigen::Index cholesky_failure_index(const Eigen::MatrixXd& m);

bool is_spd(const Eigen::MatrixXd& m);

/// Inverse of an SPD matrix through its Cholesky factor.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what);

InfoGaussian to_info(const Gaussian& g);
Gaussian to_moment(const InfoGaussian& g);

Gaussian marginal(const Gaussian& g, const BlockIndex& idx);

/// Convex combination in information space (geometric averaging of the
/// densities). Weights must be non-negative and sum to 1 within 1e-12.
InfoGaussian info_average(std::span<const WeightedInfo> terms);

/// Replaces the marginal over the y-block of `joint` with `new_marginal_y`
/// while keeping the conditional x | y unchanged.
Gaussian reconstruct_joint(const Gaussian& joint, const BlockIndex& idx_y,
                           const Gaussian& new_marginal_y);

}  // namespace dvislam
