#include "dvislam/msckf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <iterator>
#include <limits>
#include <string>

#include "dvislam/ckf.hpp"
#include "dvislam/errors.hpp"

namespace dvislam {

namespace {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

void append_range(IndexList& out, Index offset, Index length) {
  for (Index i = 0; i < length; ++i) out.push_back(offset + i);
}

/// Symmetrizes and checks positive definiteness, optionally adding jitter once.
Eigen::MatrixXd enforce_spd(const Eigen::MatrixXd& cov, const FilterConfig& config,
                            UpdateDiagnostics* diag, const char* what) {
  Eigen::MatrixXd out = symmetrize(cov);
  if (is_spd(out)) return out;
  Index bad = cholesky_failure_index(out);
  if (!config.jitter_enabled) {
    throw NotPositiveDefinite(std::string(what) + ": covariance lost positive definiteness",
                              static_cast<std::size_t>(std::max<Index>(bad, 0)));
  }
  out.diagonal().array() += config.jitter;
  if (diag != nullptr) ++diag->jitter_events;
  if (!is_spd(out)) {
    bad = std::max<Index>(cholesky_failure_index(out), 0);
    throw NotPositiveDefinite(std::string(what) + ": covariance not positive definite after jitter",
                              static_cast<std::size_t>(bad));
  }
  return out;
}

Eigen::Vector3d pixel_ray(const CameraModel& cam, double u, double v) {
  return {(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
}

double chi2_threshold(Index dof, double confidence) {
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, confidence);
}

void check_sorted_unique(std::span<const LandmarkId> ids, const char* what) {
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] <= ids[i - 1]) throw InvalidArgument(std::string(what) + ": landmark ids must be strictly ascending");
  }
}

}  // namespace

std::optional<std::size_t> NodeState::find_landmark(LandmarkId id) const {
  const auto it = std::lower_bound(landmark_ids.begin(), landmark_ids.end(), id);
  if (it == landmark_ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - landmark_ids.begin());
}

std::optional<std::size_t> NodeState::find_stamp(std::int64_t stamp) const {
  for (std::size_t k = 0; k < stamps.size(); ++k) {
    if (stamps[k] == stamp) return k;
  }
  return std::nullopt;
}

void NodeState::validate() const {
  if (poses.empty()) throw InvalidArgument("NodeState: empty pose window");
  if (stamps.size() != poses.size()) throw InvalidArgument("NodeState: stamps and poses differ in length");
  if (landmark_ids.size() != landmarks.size()) {
    throw InvalidArgument("NodeState: landmark ids and means differ in length");
  }
  check_sorted_unique(landmark_ids, "NodeState");
  if (cov.rows() != dim() || cov.cols() != dim()) {
    throw DimensionMismatch("NodeState: covariance dimension does not match the state layout");
  }
}

NodeState NodeState::initial(const Pose& pose, std::int64_t stamp, const Matrix6d& pose_cov) {
  NodeState s;
  s.poses = {pose};
  s.stamps = {stamp};
  s.cov = pose_cov;
  return s;
}

InfoGaussian landmark_marginal(const NodeState& node, std::span<const LandmarkId> ids) {
  check_sorted_unique(ids, "landmark_marginal");
  IndexList idx;
  Eigen::VectorXd mean(3 * static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto j = node.find_landmark(ids[k]);
    if (!j) throw InvalidArgument("landmark_marginal: landmark " + std::to_string(ids[k]) + " not in state");
    append_range(idx, node.landmark_offset(*j), 3);
    mean.segment<3>(3 * static_cast<Index>(k)) = node.landmarks[*j];
  }
  return to_info(Gaussian(mean, node.cov(idx, idx)));
}

NodeState consensus_average(const NodeState& node, std::span<const LandmarkMessage> messages,
                            const FilterConfig& config, UpdateDiagnostics* diag) {
  if (messages.empty()) throw InvalidArgument("consensus_average: no messages (the node's own term is required)");

  std::vector<LandmarkId> common;
  for (const auto& m : messages) {
    check_sorted_unique(m.ids, "consensus_average");
    if (m.marginal.dim() != 3 * static_cast<Index>(m.ids.size())) {
      throw DimensionMismatch("consensus_average: marginal dimension does not match its id list");
    }
    for (LandmarkId id : m.ids) {
      if (!node.find_landmark(id)) {
        throw InvalidArgument("consensus_average: message id " + std::to_string(id) + " not in state");
      }
    }
    std::vector<LandmarkId> merged;
    std::set_union(common.begin(), common.end(), m.ids.begin(), m.ids.end(), std::back_inserter(merged));
    common = std::move(merged);
  }
  if (common.empty()) return node;

  // Perturbation-space joint: pose twists have zero mean.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(node.dim());
  for (std::size_t j = 0; j < node.landmarks.size(); ++j) {
    mean.segment<3>(node.landmark_offset(j)) = node.landmarks[j];
  }
  const Gaussian joint(mean, node.cov);

  BlockIndex y_idx;
  for (LandmarkId id : common) y_idx.append(node.landmark_offset(*node.find_landmark(id)), 3);
  const Gaussian own_y = marginal(joint, y_idx);
  const InfoGaussian own_info = to_info(own_y);

  // A message q over C subset of Y completed with the node's conditional is
  // p(Y) q(C) / p(C); in information form that adds (q - p_C) on the C block.
  // The weighted sum of all terms is therefore own + sum_j w_j (q_j - p_Cj).
  double weight_sum = 0.0;
  for (const auto& m : messages) {
    if (!(m.weight >= 0.0)) throw InvalidArgument("consensus_average: negative weight");
    weight_sum += m.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12) {
    throw InvalidArgument("consensus_average: weights sum to " + std::to_string(weight_sum));
  }
  Eigen::VectorXd eta = own_info.info_vec;
  Eigen::MatrixXd lambda = own_info.info_mat;
  std::map<std::vector<LandmarkId>, InfoGaussian> own_on_subset;
  for (const auto& m : messages) {
    if (m.ids.empty() || m.weight == 0.0) continue;
    if (m.ids.size() == common.size()) {
      eta += m.weight * (m.marginal.info_vec - own_info.info_vec);
      lambda += m.weight * (m.marginal.info_mat - own_info.info_mat);
      continue;
    }
    IndexList local;
    for (LandmarkId id : m.ids) {
      const auto pos = std::lower_bound(common.begin(), common.end(), id) - common.begin();
      append_range(local, 3 * static_cast<Index>(pos), 3);
    }
    auto it = own_on_subset.find(m.ids);
    if (it == own_on_subset.end()) {
      it = own_on_subset.emplace(m.ids, to_info(Gaussian(own_y.mean(local), own_y.cov(local, local)))).first;
    }
    eta(local) += m.weight * (m.marginal.info_vec - it->second.info_vec);
    lambda(local, local) += m.weight * (m.marginal.info_mat - it->second.info_mat);
  }

  const Gaussian averaged = to_moment(InfoGaussian(eta, symmetrize(lambda)));
  const Gaussian rebuilt = reconstruct_joint(joint, y_idx, averaged);

  NodeState out = node;
  for (std::size_t k = 0; k < out.poses.size(); ++k) {
    out.poses[k] = retract(node.poses[k], rebuilt.mean.segment<6>(node.pose_offset(k)));
  }
  for (std::size_t j = 0; j < out.landmarks.size(); ++j) {
    out.landmarks[j] = rebuilt.mean.segment<3>(node.landmark_offset(j));
  }
  out.cov = enforce_spd(rebuilt.cov, config, diag, "consensus_average");
  return out;
}

NodeState propagate(const NodeState& node, const Pose& delta, const Matrix6d& odometry_cov,
                    std::int64_t stamp, std::size_t window_size) {
  if (node.poses.empty()) throw InvalidArgument("propagate: empty pose window");
  if (window_size == 0) throw InvalidArgument("propagate: window size must be positive");
  if (!odometry_cov.allFinite()) throw InvalidArgument("propagate: non-finite odometry covariance");

  const std::size_t c = node.poses.size();
  const std::size_t first_kept = c >= window_size ? c - window_size + 1 : 0;
  const Index newest = node.pose_offset(c - 1);

  IndexList kept_poses;
  for (std::size_t k = first_kept; k < c; ++k) append_range(kept_poses, node.pose_offset(k), 6);
  IndexList lm;
  append_range(lm, node.landmark_offset(0), 3 * node.landmark_count());
  IndexList kept = kept_poses;
  kept.insert(kept.end(), lm.begin(), lm.end());

  const Matrix6d J = se3_adjoint(delta.inverse());
  const Index np = static_cast<Index>(kept_poses.size());
  const Index nl = static_cast<Index>(lm.size());
  const Index dim = np + 6 + nl;

  // Rows of the newest pose against every kept variable.
  IndexList newest_rows;
  append_range(newest_rows, newest, 6);
  const Eigen::MatrixXd cross = J * node.cov(newest_rows, kept);

  NodeState out;
  out.poses.assign(node.poses.begin() + static_cast<std::ptrdiff_t>(first_kept), node.poses.end());
  out.stamps.assign(node.stamps.begin() + static_cast<std::ptrdiff_t>(first_kept), node.stamps.end());
  out.poses.push_back(node.poses.back() * delta);
  out.stamps.push_back(stamp);
  out.landmark_ids = node.landmark_ids;
  out.landmarks = node.landmarks;

  out.cov.resize(dim, dim);
  IndexList old_slots;  // positions of kept variables in the new layout
  append_range(old_slots, 0, np);
  append_range(old_slots, np + 6, nl);
  IndexList new_slot;
  append_range(new_slot, np, 6);
  out.cov(old_slots, old_slots) = node.cov(kept, kept);
  out.cov(new_slot, old_slots) = cross;
  out.cov(old_slots, new_slot) = cross.transpose();
  out.cov(new_slot, new_slot) =
      symmetrize(J * node.cov.block<6, 6>(newest, newest) * J.transpose() + odometry_cov);
  return out;
}

Triangulation triangulate(std::span<const Pose> poses, std::span<const StereoPixel> pixels,
                          const CameraModel& cam, const FilterConfig& config) {
  if (poses.size() != pixels.size()) throw DimensionMismatch("triangulate: poses and pixels differ in length");
  if (pixels.empty()) throw InvalidArgument("triangulate: no observations");

  double max_disparity = -std::numeric_limits<double>::infinity();
  double max_baseline = 0.0;
  for (std::size_t a = 0; a < poses.size(); ++a) {
    max_disparity = std::max(max_disparity, pixels[a].x() - pixels[a].z());
    for (std::size_t b = a + 1; b < poses.size(); ++b) {
      max_baseline = std::max(max_baseline, (poses[a].translation() - poses[b].translation()).norm());
    }
  }
  if (max_disparity < config.min_disparity_px && max_baseline < config.min_baseline_m) {
    throw LowParallax("triangulate: insufficient parallax");
  }

  // Linear estimate: point closest to every viewing ray (left and right camera).
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  const Eigen::Vector3d right_offset(cam.baseline, 0.0, 0.0);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Eigen::Matrix3d& R = poses[k].rotation();
    const Eigen::Vector3d& t = poses[k].translation();
    const Eigen::Vector3d rays[2] = {R * pixel_ray(cam, pixels[k].x(), pixels[k].y()),
                                     R * pixel_ray(cam, pixels[k].z(), pixels[k].y())};
    const Eigen::Vector3d centers[2] = {t, t + R * right_offset};
    for (int s = 0; s < 2; ++s) {
      const Eigen::Vector3d d = rays[s].normalized();
      const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - d * d.transpose();
      A += P;
      rhs += P * centers[s];
    }
  }
  Eigen::Vector3d p = A.colPivHouseholderQr().solve(rhs);
  if (!p.allFinite()) throw LowParallax("triangulate: degenerate ray geometry");

  const auto in_front = [&](const Eigen::Vector3d& x) {
    for (const auto& T : poses) {
      if (world_to_camera(T, x).z() <= 1e-6) return false;
    }
    return true;
  };
  if (!in_front(p)) throw LowParallax("triangulate: point behind camera");

  double rms = 0.0;
  for (int it = 0; it <= config.max_gauss_newton_iterations; ++it) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    double sq = 0.0;
    for (std::size_t k = 0; k < poses.size(); ++k) {
      const auto lin = linearize_observation(cam, poses[k], p);
      const Eigen::Vector3d r = pixels[k] - lin.predicted;
      sq += r.squaredNorm();
      JtJ += lin.wrt_point.transpose() * lin.wrt_point;
      Jtr += lin.wrt_point.transpose() * r;
    }
    rms = std::sqrt(sq / (3.0 * static_cast<double>(poses.size())));
    if (it == config.max_gauss_newton_iterations) break;
    const Eigen::Vector3d step = JtJ.ldlt().solve(Jtr);
    if (!step.allFinite()) break;
    const Eigen::Vector3d candidate = p + step;
    if (!in_front(candidate)) break;
    p = candidate;
    if (step.norm() <= 1e-12 * (1.0 + p.norm())) {
      // Converged; refresh the residual at the final point.
      sq = 0.0;
      for (std::size_t k = 0; k < poses.size(); ++k) {
        sq += (pixels[k] - project(cam, world_to_camera(poses[k], p))).squaredNorm();
      }
      rms = std::sqrt(sq / (3.0 * static_cast<double>(poses.size())));
      break;
    }
  }
  return {p, rms};
}

Eigen::MatrixXd left_nullspace(const Eigen::MatrixXd& H) {
  if (H.cols() != 3 || H.rows() <= 3) throw DimensionMismatch("left_nullspace: expected rows x 3 with rows > 3");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(H);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(H.rows(), H.rows());
  return Q.rightCols(H.rows() - 3);
}

NodeState apply_correlated_update(const NodeState& node, const Eigen::VectorXd& residual,
                                  const Eigen::MatrixXd& H, const Eigen::MatrixXd& V,
                                  const Eigen::MatrixXd& S, const FilterConfig& config,
                                  UpdateDiagnostics* diag) {
  if (H.cols() != node.dim() || H.rows() != residual.size()) {
    throw DimensionMismatch("apply_correlated_update: H does not match state or residual");
  }
  const CorrelatedGain g = correlated_gain(node.cov, H, V, S);
  const Eigen::VectorXd delta = g.gain * residual;

  NodeState out = node;
  for (std::size_t k = 0; k < out.poses.size(); ++k) {
    out.poses[k] = retract(node.poses[k], delta.segment<6>(node.pose_offset(k)));
  }
  for (std::size_t j = 0; j < out.landmarks.size(); ++j) {
    out.landmarks[j] += delta.segment<3>(node.landmark_offset(j));
  }
  out.cov = enforce_spd(g.posterior_cov, config, diag, "msckf update");
  return out;
}

NodeState msckf_update(const NodeState& node, std::span<const FeatureTrack> tracks,
                       std::span<const ObjectObservation> objects, const CameraModel& cam,
                       const FilterConfig& config, UpdateDiagnostics* diag) {
  UpdateDiagnostics local;
  UpdateDiagnostics& d = diag != nullptr ? *diag : local;
  const Index D = node.dim();
  const Index P = 6 * node.pose_count();
  const std::size_t newest = node.poses.size() - 1;
  const bool correlated = !config.odometry_observation_correlation.isZero(0.0);

  struct Block {
    Eigen::VectorXd r;
    Eigen::MatrixXd H;  // rows x D
    Eigen::MatrixXd V;
    Eigen::MatrixXd S;  // D x rows
  };
  std::vector<Block> blocks;

  for (const auto& track : tracks) {
    const Index n = static_cast<Index>(track.observations.size());
    if (n < 2) continue;
    std::vector<Pose> poses;
    std::vector<StereoPixel> pixels;
    for (const auto& o : track.observations) {
      if (o.pose_index >= node.poses.size()) throw InvalidArgument("msckf_update: track references a pose outside the window");
      poses.push_back(node.poses[o.pose_index]);
      pixels.push_back(o.pixel);
    }
    Triangulation tri;
    try {
      tri = triangulate(poses, pixels, cam, config);
    } catch (const LowParallax&) {
      ++d.tracks_untriangulable;
      continue;
    }

    Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(3 * n, P);
    Eigen::MatrixXd Hp(3 * n, 3);
    Eigen::VectorXd r(3 * n);
    Eigen::MatrixXd Vs = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    Eigen::MatrixXd Ss = Eigen::MatrixXd::Zero(6, 3 * n);
    for (Index k = 0; k < n; ++k) {
      const auto& o = track.observations[static_cast<std::size_t>(k)];
      const auto lin = linearize_observation(cam, node.poses[o.pose_index], tri.point);
      Hs.block(3 * k, node.pose_offset(o.pose_index), 3, 6) = lin.wrt_pose;
      Hp.block<3, 3>(3 * k, 0) = lin.wrt_point;
      r.segment<3>(3 * k) = o.pixel - lin.predicted;
      Vs.block<3, 3>(3 * k, 3 * k) = config.geometric_noise;
      if (correlated && o.pose_index == newest) {
        Ss.block<6, 3>(0, 3 * k) = config.odometry_observation_correlation;
      }
    }
    const Eigen::MatrixXd N = left_nullspace(Hp);
    d.max_nullspace_residual =
        std::max(d.max_nullspace_residual, (N.transpose() * Hp).cwiseAbs().maxCoeff());

    Block b;
    b.r = N.transpose() * r;
    const Eigen::MatrixXd Hpose = N.transpose() * Hs;
    b.V = symmetrize(N.transpose() * Vs * N);
    const Eigen::MatrixXd Snull = Ss * N;  // 6 x rows, newest pose rows

    if (config.chi2_gating) {
      Eigen::MatrixXd C = Hpose * node.cov.topLeftCorner(P, P) * Hpose.transpose() + b.V;
      if (correlated) {
        const Eigen::MatrixXd HS = Hpose.middleCols(node.pose_offset(newest), 6) * Snull;
        C += HS + HS.transpose();
      }
      Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(C));
      const double gamma = llt.info() == Eigen::Success ? b.r.dot(llt.solve(b.r))
                                                        : std::numeric_limits<double>::infinity();
      if (!(gamma <= chi2_threshold(b.r.size(), config.chi2_confidence))) {
        ++d.tracks_gated;
        continue;
      }
    }

    b.H = Eigen::MatrixXd::Zero(b.r.size(), D);
    b.H.leftCols(P) = Hpose;
    b.S = Eigen::MatrixXd::Zero(D, b.r.size());
    if (correlated) b.S.middleRows(node.pose_offset(newest), 6) = Snull;
    d.geometric_rows += static_cast<std::size_t>(b.r.size());
    ++d.tracks_used;
    blocks.push_back(std::move(b));
  }

  for (const auto& obj : objects) {
    const auto j = node.find_landmark(obj.id);
    const auto k = node.find_stamp(obj.timestep);
    if (!j || !k) continue;
    const auto lin = linearize_observation(cam, node.poses[*k], node.landmarks[*j]);
    if (world_to_camera(node.poses[*k], node.landmarks[*j]).z() <= 1e-6) continue;
    Block b;
    b.r = obj.pixel - lin.predicted;
    if (config.chi2_gating) {
      IndexList cols;
      append_range(cols, node.pose_offset(*k), 6);
      append_range(cols, node.landmark_offset(*j), 3);
      Eigen::Matrix<double, 3, 9> Hl;
      Hl << lin.wrt_pose, lin.wrt_point;
      const Eigen::Matrix3d C = Hl * node.cov(cols, cols) * Hl.transpose() + config.object_noise;
      const double gamma = b.r.dot(C.ldlt().solve(b.r));
      if (!(gamma <= chi2_threshold(3, config.chi2_confidence))) {
        ++d.objects_gated;
        continue;
      }
    }
    b.H = Eigen::MatrixXd::Zero(3, D);
    b.H.block(0, node.pose_offset(*k), 3, 6) = lin.wrt_pose;
    b.H.block(0, node.landmark_offset(*j), 3, 3) = lin.wrt_point;
    b.V = config.object_noise;
    b.S = Eigen::MatrixXd::Zero(D, 3);
    d.object_rows += 3;
    blocks.push_back(std::move(b));
  }

  if (blocks.empty()) return node;

  Index rows = 0;
  for (const auto& b : blocks) rows += b.r.size();
  Eigen::VectorXd r(rows);
  Eigen::MatrixXd H(rows, D);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(rows, rows);
  Eigen::MatrixXd S;
  if (correlated) S = Eigen::MatrixXd::Zero(D, rows);
  Index at = 0;
  for (const auto& b : blocks) {
    const Index m = b.r.size();
    r.segment(at, m) = b.r;
    H.middleRows(at, m) = b.H;
    V.block(at, at, m, m) = b.V;
    if (correlated) S.middleCols(at, m) = b.S;
    at += m;
  }

  if (config.compress_rows && !correlated && rows > D) {
    // Thin QR of H; the discarded rows carry no state information.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(H);
    const Eigen::MatrixXd Q1 = qr.householderQ() * Eigen::MatrixXd::Identity(rows, D);
    Eigen::MatrixXd VQ1(rows, D);
    at = 0;
    for (const auto& b : blocks) {
      const Index m = b.r.size();
      VQ1.middleRows(at, m) = b.V * Q1.middleRows(at, m);
      at += m;
    }
    const Eigen::MatrixXd Hc = qr.matrixQR().topRows(D).triangularView<Eigen::Upper>();
    return apply_correlated_update(node, Q1.transpose() * r, Hc, symmetrize(Q1.transpose() * VQ1),
                                   Eigen::MatrixXd(), config, diag);
  }
  return apply_correlated_update(node, r, H, V, S, config, diag);
}

std::optional<NodeState> initialize_landmark(const NodeState& node, LandmarkId id,
                                             std::span<const ObjectObservation> observations,
                                             const CameraModel& cam, const FilterConfig& config,
                                             UpdateDiagnostics* diag) {
  if (node.find_landmark(id)) {
    throw InvalidArgument("initialize_landmark: landmark " + std::to_string(id) + " already in state");
  }
  std::vector<std::size_t> pose_idx;
  std::vector<Pose> poses;
  std::vector<StereoPixel> pixels;
  for (const auto& o : observations) {
    if (o.id != id) throw InvalidArgument("initialize_landmark: observation of a different landmark");
    const auto k = node.find_stamp(o.timestep);
    if (!k) continue;
    pose_idx.push_back(*k);
    poses.push_back(node.poses[*k]);
    pixels.push_back(o.pixel);
  }
  if (pixels.size() < 2) return std::nullopt;

  Triangulation tri;
  try {
    tri = triangulate(poses, pixels, cam, config);
  } catch (const LowParallax&) {
    return std::nullopt;
  }

  const Index n = static_cast<Index>(pixels.size());
  const Index D = node.dim();
  Eigen::MatrixXd Hs = Eigen::MatrixXd::Zero(3 * n, D);
  Eigen::MatrixXd Hp(3 * n, 3);
  Eigen::VectorXd r(3 * n);
  for (Index k = 0; k < n; ++k) {
    const auto lin = linearize_observation(cam, poses[static_cast<std::size_t>(k)], tri.point);
    Hs.block(3 * k, node.pose_offset(pose_idx[static_cast<std::size_t>(k)]), 3, 6) = lin.wrt_pose;
    Hp.block<3, 3>(3 * k, 0) = lin.wrt_point;
    r.segment<3>(3 * k) = pixels[static_cast<std::size_t>(k)] - lin.predicted;
  }

  // Split rows into the part that determines the landmark and the part that
  // does not. V_o is the same for every observation, so with isotropic V_o
  // the two parts have independent noise.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Hp);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, 3 * n);
  const Eigen::Matrix3d R1 = qr.matrixQR().topRows<3>().triangularView<Eigen::Upper>();
  if (R1.diagonal().cwiseAbs().minCoeff() < 1e-12 * std::max(1.0, R1.cwiseAbs().maxCoeff())) {
    return std::nullopt;
  }
  const Eigen::MatrixXd Q1 = Q.leftCols(3);
  const Eigen::MatrixXd Q2 = Q.rightCols(3 * n - 3);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  for (Index k = 0; k < n; ++k) V.block<3, 3>(3 * k, 3 * k) = config.object_noise;

  const Eigen::MatrixXd Hs1 = Q1.transpose() * Hs;
  const Eigen::Vector3d r1 = Q1.transpose() * r;
  const Eigen::Matrix3d V1 = Q1.transpose() * V * Q1;
  const Eigen::Matrix3d R1inv = R1.inverse();

  const Eigen::Vector3d p = tri.point + R1inv * r1;
  const Eigen::MatrixXd cross = -node.cov * Hs1.transpose() * R1inv.transpose();  // D x 3
  const Eigen::Matrix3d Sp =
      symmetrize(R1inv * (Hs1 * node.cov * Hs1.transpose() + V1) * R1inv.transpose());
  if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(Sp).eigenvalues().maxCoeff() >
      config.max_init_sigma_m * config.max_init_sigma_m) {
    return std::nullopt;
  }

  // Insert at the sorted position.
  const std::size_t slot = static_cast<std::size_t>(
      std::lower_bound(node.landmark_ids.begin(), node.landmark_ids.end(), id) - node.landmark_ids.begin());
  const Index ins = node.landmark_offset(slot);

  NodeState out;
  out.poses = node.poses;
  out.stamps = node.stamps;
  out.landmark_ids = node.landmark_ids;
  out.landmarks = node.landmarks;
  out.landmark_ids.insert(out.landmark_ids.begin() + static_cast<std::ptrdiff_t>(slot), id);
  out.landmarks.insert(out.landmarks.begin() + static_cast<std::ptrdiff_t>(slot), p);

  IndexList old_slots;  // where old variables land in the new layout
  append_range(old_slots, 0, ins);
  append_range(old_slots, ins + 3, D - ins);
  IndexList new_slot;
  append_range(new_slot, ins, 3);
  out.cov.resize(D + 3, D + 3);
  out.cov(old_slots, old_slots) = node.cov;
  out.cov(old_slots, new_slot) = cross;
  out.cov(new_slot, old_slots) = cross.transpose();
  out.cov(new_slot, new_slot) = Sp;
  out.cov = enforce_spd(out.cov, config, diag, "initialize_landmark");

  Eigen::MatrixXd H2 = Eigen::MatrixXd::Zero(3 * n - 3, D + 3);
  H2(Eigen::all, old_slots) = Q2.transpose() * Hs;
  const Eigen::VectorXd r2 = Q2.transpose() * r;
  const Eigen::MatrixXd V2 = symmetrize(Q2.transpose() * V * Q2);
  return apply_correlated_update(out, r2, H2, V2, Eigen::MatrixXd(), config, diag);
}

RobotFilter::RobotFilter(NodeState initial, CameraModel cam, FilterConfig config)
    : state_(std::move(initial)), cam_(cam), config_(std::move(config)) {
  state_.validate();
  cam_.validate();
  if (config_.window_size == 0) throw InvalidArgument("RobotFilter: window size must be positive");
}

void RobotFilter::absorb(const UpdateDiagnostics& d) {
  jitter_count_ += d.jitter_events;
  max_nullspace_residual_ = std::max(max_nullspace_residual_, d.max_nullspace_residual);
}

void RobotFilter::consensus(std::span<const LandmarkMessage> messages) {
  UpdateDiagnostics d;
  state_ = consensus_average(state_, messages, config_, &d);
  absorb(d);
}

void RobotFilter::propagate(const Pose& delta, const Matrix6d& odometry_cov, std::int64_t stamp) {
  state_ = dvislam::propagate(state_, delta, odometry_cov, stamp, config_.window_size);
}

void RobotFilter::update(std::int64_t stamp,
                         std::span<const std::pair<LandmarkId, StereoPixel>> geometric,
                         std::span<const ObjectObservation> objects) {
  for (const auto& [id, px] : geometric) tracks_[id].push_back({stamp, px});

  // A track is consumed when it was not seen this step or when its oldest
  // pose is the one the next propagation drops.
  const bool window_full = state_.poses.size() >= config_.window_size;
  std::vector<FeatureTrack> ready;
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    const auto& pts = it->second;
    const bool lost = pts.back().stamp != stamp;
    const bool expiring = window_full && pts.front().stamp <= state_.stamps.front();
    if (!lost && !expiring) {
      ++it;
      continue;
    }
    FeatureTrack track{it->first, {}};
    for (const auto& tp : pts) {
      if (const auto k = state_.find_stamp(tp.stamp)) track.observations.push_back({*k, tp.pixel});
    }
    if (track.observations.size() >= 2) ready.push_back(std::move(track));
    it = tracks_.erase(it);
  }

  std::vector<ObjectObservation> known;
  for (const auto& o : objects) {
    if (state_.find_landmark(o.id)) {
      known.push_back(o);
    } else {
      pending_[o.id].push_back(o);
    }
  }

  diag_ = UpdateDiagnostics{};
  state_ = msckf_update(state_, ready, known, cam_, config_, &diag_);
  absorb(diag_);
}

void RobotFilter::initialize() {
  for (auto it = pending_.begin(); it != pending_.end();) {
    auto& obs = it->second;
    std::erase_if(obs, [&](const ObjectObservation& o) { return !state_.find_stamp(o.timestep); });
    if (obs.empty()) {
      it = pending_.erase(it);
      continue;
    }
    UpdateDiagnostics d;
    auto next = initialize_landmark(state_, it->first, obs, cam_, config_, &d);
    absorb(d);
    if (next) {
      state_ = std::move(*next);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace dvislam
