#include "dvislam/dvi.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dvislam/errors.hpp"

namespace dvislam {

void LinearModel::validate() const {
  const Eigen::Index n = F.rows();
  if (F.cols() != n) throw DimensionMismatch("LinearModel: F must be square");
  if (G.rows() != n) throw DimensionMismatch("LinearModel: G rows must match the state");
  if (W.rows() != n || W.cols() != n) throw DimensionMismatch("LinearModel: W must be n x n");
  if (H.cols() != n) throw DimensionMismatch("LinearModel: H columns must match the state");
  if (V.rows() != H.rows() || V.cols() != H.rows()) {
    throw DimensionMismatch("LinearModel: V must match the observation dimension");
  }
  if (prior.dim() != n) throw DimensionMismatch("LinearModel: prior dimension");
  checked_cholesky(W, "LinearModel: W");
  if (H.rows() > 0) checked_cholesky(V, "LinearModel: V");
  checked_cholesky(prior.cov, "LinearModel: prior covariance");
}

LiftedModel::LiftedModel(LinearModel model, std::vector<Eigen::VectorXd> inputs,
                         std::vector<Eigen::VectorXd> observations)
    : model_(std::move(model)),
      horizon_(inputs.size()),
      inputs_(std::move(inputs)),
      observations_(std::move(observations)) {
  model_.validate();
  for (const auto& u : inputs_) {
    if (u.size() != model_.G.cols()) throw DimensionMismatch("LiftedModel: input size");
  }
  const Eigen::Index m = model_.H.rows();
  if (m == 0) {
    if (!observations_.empty() && observations_.size() != horizon_ + 1) {
      throw DimensionMismatch("LiftedModel: observation sequence length");
    }
    for (const auto& z : observations_) {
      if (z.size() != 0) throw DimensionMismatch("LiftedModel: observation size");
    }
    observations_.assign(horizon_ + 1, Eigen::VectorXd());
  } else {
    if (observations_.size() != horizon_ + 1) {
      throw DimensionMismatch("LiftedModel: need T+1 observations for T inputs");
    }
    for (const auto& z : observations_) {
      if (z.size() != m) throw DimensionMismatch("LiftedModel: observation size");
    }
  }
  assemble_information();
}

Eigen::VectorXd LiftedModel::apply_inverse_transition(const Eigen::VectorXd& x) const {
  const Eigen::Index n = state_dim();
  if (x.size() != lifted_dim()) throw DimensionMismatch("apply_inverse_transition");
  Eigen::VectorXd out = x;
  for (std::size_t t = 1; t <= horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    out.segment(r, n) -= model_.F * x.segment(r - n, n);
  }
  return out;
}

Eigen::VectorXd LiftedModel::apply_inverse_transition_transpose(const Eigen::VectorXd& x) const {
  const Eigen::Index n = state_dim();
  if (x.size() != lifted_dim()) throw DimensionMismatch("apply_inverse_transition_transpose");
  Eigen::VectorXd out = x;
  for (std::size_t t = 0; t < horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    out.segment(r, n) -= model_.F.transpose() * x.segment(r + n, n);
  }
  return out;
}

Eigen::VectorXd LiftedModel::driven_inputs() const {
  const Eigen::Index n = state_dim();
  Eigen::VectorXd out(lifted_dim());
  out.head(n) = model_.prior.mean;
  for (std::size_t t = 0; t < horizon_; ++t) {
    out.segment(static_cast<Eigen::Index>(t + 1) * n, n) = model_.G * inputs_[t];
  }
  return out;
}

Eigen::VectorXd LiftedModel::stacked_observations() const {
  const Eigen::Index m = model_.H.rows();
  Eigen::VectorXd out(m * static_cast<Eigen::Index>(horizon_ + 1));
  for (std::size_t t = 0; t <= horizon_; ++t) {
    out.segment(static_cast<Eigen::Index>(t) * m, m) = observations_[t];
  }
  return out;
}

Eigen::MatrixXd LiftedModel::inverse_transition_dense() const {
  const Eigen::Index n = state_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(lifted_dim(), lifted_dim());
  for (std::size_t t = 1; t <= horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    out.block(r, r - n, n, n) = -model_.F;
  }
  return out;
}

Eigen::MatrixXd LiftedModel::lifted_noise_dense() const {
  const Eigen::Index n = state_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(lifted_dim(), lifted_dim());
  out.topLeftCorner(n, n) = model_.prior.cov;
  for (std::size_t t = 1; t <= horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    out.block(r, r, n, n) = model_.W;
  }
  return out;
}

Eigen::MatrixXd LiftedModel::lifted_observation_dense() const {
  const Eigen::Index n = state_dim();
  const Eigen::Index m = model_.H.rows();
  const auto steps = static_cast<Eigen::Index>(horizon_ + 1);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m * steps, n * steps);
  for (Eigen::Index t = 0; t < steps; ++t) out.block(t * m, t * n, m, n) = model_.H;
  return out;
}

void LiftedModel::assemble_information() {
  const Eigen::Index n = state_dim();
  const Eigen::Index N = lifted_dim();
  const Eigen::MatrixXd prior_info = spd_inverse(model_.prior.cov, "LiftedModel: prior covariance");
  const Eigen::MatrixXd w_info = spd_inverse(model_.W, "LiftedModel: W");
  const Eigen::MatrixXd ft_winv = model_.F.transpose() * w_info;
  const Eigen::MatrixXd ft_winv_f = ft_winv * model_.F;

  // Block tridiagonal F̄^-T W̄^-1 F̄^-1.
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t t = 0; t <= horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    info.block(r, r, n, n) = (t == 0) ? prior_info : w_info;
    if (t < horizon_) {
      info.block(r, r, n, n) += ft_winv_f;
      info.block(r, r + n, n, n) = -ft_winv;
      info.block(r + n, r, n, n) = -ft_winv.transpose();
    }
  }

  // W̄^-1 Ḡ u, then F̄^-T.
  Eigen::VectorXd weighted(N);
  const Eigen::VectorXd driven = driven_inputs();
  weighted.head(n) = prior_info * driven.head(n);
  for (std::size_t t = 1; t <= horizon_; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
    weighted.segment(r, n) = w_info * driven.segment(r, n);
  }
  Eigen::VectorXd vec = apply_inverse_transition_transpose(weighted);

  if (model_.H.rows() > 0) {
    const Eigen::MatrixXd v_info = spd_inverse(model_.V, "LiftedModel: V");
    const Eigen::MatrixXd ht_vinv = model_.H.transpose() * v_info;
    const Eigen::MatrixXd ht_vinv_h = ht_vinv * model_.H;
    for (std::size_t t = 0; t <= horizon_; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(t) * n;
      info.block(r, r, n, n) += ht_vinv_h;
      vec.segment(r, n) += ht_vinv * observations_[t];
    }
  }
  information_ = InfoGaussian(std::move(vec), symmetrize(info));
}

LiftedModel build_lifted(const LinearModel& model, std::vector<Eigen::VectorXd> inputs,
                         std::vector<Eigen::VectorXd> observations) {
  return LiftedModel(model, std::move(inputs), std::move(observations));
}

Gaussian batch_solution(const LiftedModel& m) { return to_moment(m.information()); }

namespace {

DviNode step_node(std::size_t i, std::span<const DviNode> nodes,
                  std::span<const InfoGaussian> shared_marginals, const LiftedModel& lifted,
                  const CommGraph& graph, std::size_t k) {
  const DviNode& node = nodes[i];
  try {
    std::vector<WeightedInfo> terms;
    for (std::size_t j : graph.neighbors(i)) {
      if (shared_marginals[j].dim() != shared_marginals[i].dim()) {
        throw DimensionMismatch("dvi_round: common block dimensions differ between nodes");
      }
      terms.push_back({graph.weight(i, j), shared_marginals[j]});
    }
    const Gaussian averaged_y = to_moment(info_average(terms));
    const InfoGaussian averaged = to_info(reconstruct_joint(node.belief, node.common, averaged_y));
    const InfoGaussian current = to_info(node.belief);
    const InfoGaussian& target = lifted.information();
    if (target.dim() != current.dim()) {
      throw DimensionMismatch("dvi_round: lifted model does not match the belief");
    }
    const double alpha = node.steps.at(k);
    InfoGaussian next(averaged.info_vec + alpha * (target.info_vec - current.info_vec),
                      symmetrize(averaged.info_mat + alpha * (target.info_mat - current.info_mat)));
    DviNode out = node;
    out.belief = to_moment(next);
    return out;
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite("dvi_round: node " + std::to_string(i) + ", iteration " +
                                  std::to_string(k) + ": " + e.what(),
                              e.minor_index());
  }
}

}  // namespace

std::vector<DviNode> dvi_round(std::span<const DviNode> nodes, std::span<const LiftedModel> lifted,
                               const CommGraph& graph, std::size_t k,
                               std::span<const std::size_t> evaluation_order) {
  if (lifted.size() != nodes.size() || graph.size() != nodes.size()) {
    throw DimensionMismatch("dvi_round: nodes, lifted models and graph disagree in size");
  }
  std::vector<InfoGaussian> shared;
  shared.reserve(nodes.size());
  for (const auto& node : nodes) shared.push_back(to_info(marginal(node.belief, node.common)));

  std::vector<std::size_t> order(nodes.size());
  if (evaluation_order.empty()) {
    std::iota(order.begin(), order.end(), 0);
  } else {
    if (evaluation_order.size() != nodes.size()) throw InvalidArgument("dvi_round: bad order");
    order.assign(evaluation_order.begin(), evaluation_order.end());
  }

  std::vector<DviNode> next(nodes.begin(), nodes.end());
  for (std::size_t i : order) next.at(i) = step_node(i, nodes, shared, lifted[i], graph, k);
  return next;
}

DviResult run_dvi(std::vector<DviNode> nodes, std::span<const LiftedModel> lifted,
                  const CommGraph& graph, const DviConfig& config) {
  DviResult result;
  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    auto next = dvi_round(nodes, lifted, graph, k);
    double max_kl = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      max_kl = std::max(max_kl, kl_divergence(next[i].belief, nodes[i].belief));
    }
    nodes = std::move(next);
    result.iterations = k + 1;
    result.last_max_kl = max_kl;
    if (max_kl < config.kl_tolerance) {
      result.converged = true;
      break;
    }
  }
  result.nodes = std::move(nodes);
  return result;
}

double kl_divergence(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) throw DimensionMismatch("kl_divergence");
  auto llt_q = checked_cholesky(q.cov, "kl_divergence: q");
  auto llt_p = checked_cholesky(p.cov, "kl_divergence: p");
  const Eigen::VectorXd d = q.mean - p.mean;
  const double trace = llt_q.solve(p.cov).trace();
  const double maha = d.dot(llt_q.solve(d));
  const double logdet_q = 2.0 * llt_q.matrixLLT().diagonal().array().log().sum();
  const double logdet_p = 2.0 * llt_p.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (trace + maha - static_cast<double>(p.dim()) + logdet_q - logdet_p);
}

}  // namespace dvislam
