#include "dvislam/gaussian.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "dvislam/errors.hpp"

namespace dvislam {

Gaussian::Gaussian(Eigen::VectorXd mean_, Eigen::MatrixXd cov_)
    : mean(std::move(mean_)), cov(std::move(cov_)) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw DimensionMismatch("Gaussian: covariance is " + std::to_string(cov.rows()) + "x" +
                            std::to_string(cov.cols()) + " for mean of size " +
                            std::to_string(mean.size()));
  }
}

InfoGaussian::InfoGaussian(Eigen::VectorXd info_vec_, Eigen::MatrixXd info_mat_)
    : info_vec(std::move(info_vec_)), info_mat(std::move(info_mat_)) {
  if (info_mat.rows() != info_vec.size() || info_mat.cols() != info_vec.size()) {
    throw DimensionMismatch("InfoGaussian: information matrix does not match vector size");
  }
}

BlockIndex::BlockIndex(std::vector<Range> ranges) : ranges_(std::move(ranges)) {
  for (const auto& r : ranges_) {
    if (r.offset < 0 || r.length < 0) throw InvalidArgument("BlockIndex: negative range");
  }
}

BlockIndex BlockIndex::contiguous(Eigen::Index offset, Eigen::Index length) {
  return BlockIndex({{offset, length}});
}

Eigen::Index BlockIndex::size() const {
  Eigen::Index n = 0;
  for (const auto& r : ranges_) n += r.length;
  return n;
}

std::vector<Eigen::Index> BlockIndex::indices() const {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (const auto& r : ranges_) {
    for (Eigen::Index i = 0; i < r.length; ++i) out.push_back(r.offset + i);
  }
  return out;
}

void BlockIndex::validate(Eigen::Index dim) const {
  std::vector<Range> sorted = ranges_;
  std::sort(sorted.begin(), sorted.end(),
            [](const Range& a, const Range& b) { return a.offset < b.offset; });
  Eigen::Index end = 0;
  for (const auto& r : sorted) {
    if (r.length == 0) continue;
    if (r.offset + r.length > dim) throw InvalidArgument("BlockIndex: range out of bounds");
    if (r.offset < end) throw InvalidArgument("BlockIndex: overlapping ranges");
    end = r.offset + r.length;
  }
}

BlockIndex BlockIndex::complement(Eigen::Index dim) const {
  std::vector<char> used(static_cast<std::size_t>(dim), 0);
  for (auto i : indices()) used[static_cast<std::size_t>(i)] = 1;
  BlockIndex out;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (!used[static_cast<std::size_t>(i)]) out.append(i, 1);
  }
  return out;
}

void BlockIndex::append(Eigen::Index offset, Eigen::Index length) {
  if (length == 0) return;
  if (!ranges_.empty() && ranges_.back().offset + ranges_.back().length == offset) {
    ranges_.back().length += length;
  } else {
    ranges_.push_back({offset, length});
  }
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::Index cholesky_failure_index(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return j;
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      L(i, j) = (m(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  return -1;
}

Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    const Eigen::Index idx = cholesky_failure_index(m);
    throw NotPositiveDefinite(std::string(what) + ": matrix is not positive definite",
                              static_cast<std::size_t>(std::max<Eigen::Index>(idx, 0)));
  }
  return llt;
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  auto llt = checked_cholesky(m, what);
  return symmetrize(llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols())));
}

InfoGaussian to_info(const Gaussian& g) {
  auto llt = checked_cholesky(g.cov, "to_info");
  const Eigen::MatrixXd info = symmetrize(llt.solve(Eigen::MatrixXd::Identity(g.dim(), g.dim())));
  return InfoGaussian(llt.solve(g.mean), info);
}

Gaussian to_moment(const InfoGaussian& g) {
  auto llt = checked_cholesky(g.info_mat, "to_moment");
  const Eigen::MatrixXd cov = symmetrize(llt.solve(Eigen::MatrixXd::Identity(g.dim(), g.dim())));
  return Gaussian(llt.solve(g.info_vec), cov);
}

Gaussian marginal(const Gaussian& g, const BlockIndex& idx) {
  idx.validate(g.dim());
  const auto sel = idx.indices();
  return Gaussian(g.mean(sel), g.cov(sel, sel));
}

InfoGaussian info_average(std::span<const WeightedInfo> terms) {
  if (terms.empty()) throw InvalidArgument("info_average: no terms");
  const Eigen::Index n = terms.front().belief.dim();
  double weight_sum = 0.0;
  for (const auto& t : terms) {
    if (t.belief.dim() != n) throw DimensionMismatch("info_average: marginal dimensions differ");
    if (!(t.weight >= 0.0)) throw InvalidArgument("info_average: negative weight");
    weight_sum += t.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12) {
    throw InvalidArgument("info_average: weights sum to " + std::to_string(weight_sum));
  }
  InfoGaussian out(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n));
  for (const auto& t : terms) {
    out.info_vec += t.weight * t.belief.info_vec;
    out.info_mat += t.weight * t.belief.info_mat;
  }
  out.info_mat = symmetrize(out.info_mat);
  return out;
}

Gaussian reconstruct_joint(const Gaussian& joint, const BlockIndex& idx_y,
                           const Gaussian& new_marginal_y) {
  const Eigen::Index n = joint.dim();
  idx_y.validate(n);
  if (new_marginal_y.dim() != idx_y.size()) {
    throw DimensionMismatch("reconstruct_joint: new marginal does not match the y-block");
  }
  const auto iy = idx_y.indices();
  const auto ix = idx_y.complement(n).indices();

  const Eigen::MatrixXd cov_y = joint.cov(iy, iy);
  const Eigen::MatrixXd cov_yx = joint.cov(iy, ix);
  const Eigen::MatrixXd cov_x = joint.cov(ix, ix);
  const Eigen::VectorXd mu_y = joint.mean(iy);
  const Eigen::VectorXd mu_x = joint.mean(ix);

  auto llt = checked_cholesky(cov_y, "reconstruct_joint: y-block covariance");
  // gain = cov_xy cov_y^-1, offset = mu_x - gain mu_y, schur = cov_x - gain cov_yx
  const Eigen::MatrixXd gain = llt.solve(cov_yx).transpose();
  const Eigen::VectorXd offset = mu_x - gain * mu_y;
  const Eigen::MatrixXd schur = cov_x - gain * cov_yx;

  const Eigen::MatrixXd new_cov_xy = gain * new_marginal_y.cov;

  Gaussian out(Eigen::VectorXd(n), Eigen::MatrixXd(n, n));
  out.mean(ix) = gain * new_marginal_y.mean + offset;
  out.mean(iy) = new_marginal_y.mean;
  out.cov(ix, ix) = new_cov_xy * gain.transpose() + schur;
  out.cov(ix, iy) = new_cov_xy;
  out.cov(iy, ix) = new_cov_xy.transpose();
  out.cov(iy, iy) = new_marginal_y.cov;
  out.cov = symmetrize(out.cov);
  return out;
}

}  // namespace dvislam
