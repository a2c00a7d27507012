#pragma once

// Distributed variational inference for linear-Gaussian models.
//
// Each node holds a Gaussian belief over its lifted trajectory s = [s_0..s_T]
// and a BlockIndex marking the common block y shared with its neighbours. One
// round averages the neighbours' y-marginals in information form, rebuilds the
// joint keeping the private conditional x | y, and takes a mirror-descent step
// of size alpha towards the node's own lifted posterior.

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "dvislam/gaussian.hpp"
#include "dvislam/network.hpp"

namespace dvislam {

/// s_{t+1} = F s_t + G u_t + w,  z_t = H s_t + v,  s_0 ~ prior.
/// H may have zero rows (no observations).
struct LinearModel {
  Eigen::MatrixXd F, G, W, H, V;
  Gaussian prior;

  Eigen::Index state_dim() const { return F.rows(); }
  void validate() const;
};

/// Trajectory-level form of a LinearModel over horizon T. The inverse
/// transition operator (identity on the block diagonal, -F on the block
/// subdiagonal) is applied blockwise and never densified.
class LiftedModel {
 public:
  LiftedModel(LinearModel model, std::vector<Eigen::VectorXd> inputs,
               std::vector<Eigen::VectorXd> observations);

  const LinearModel& model() const { return model_; }
  std::size_t horizon() const { return horizon_; }
  Eigen::Index state_dim() const { return model_.state_dim(); }
  Eigen::Index lifted_dim() const { return state_dim() * static_cast<Eigen::Index>(horizon_ + 1); }

  /// F̄^-1 x
  Eigen::VectorXd apply_inverse_transition(const Eigen::VectorXd& x) const;
  /// F̄^-T x
  Eigen::VectorXd apply_inverse_transition_transpose(const Eigen::VectorXd& x) const;
  /// Stacked Ḡ u = [mu_0; G u_0; ...; G u_{T-1}].
  Eigen::VectorXd driven_inputs() const;
  /// Stacked observations z.
  Eigen::VectorXd stacked_observations() const;

  /// Dense views for inspection and test oracles.
  Eigen::MatrixXd inverse_transition_dense() const;
  Eigen::MatrixXd lifted_noise_dense() const;        // W̄
  Eigen::MatrixXd lifted_observation_dense() const;  // H̄

  /// (F̄^-T W̄^-1 F̄^-1 + H̄^T V̄^-1 H̄,  F̄^-T W̄^-1 Ḡ u + H̄^T V̄^-1 z).
  const InfoGaussian& information() const { return information_; }

 private:
  void assemble_information();

  LinearModel model_;
  std::size_t horizon_;
  std::vector<Eigen::VectorXd> inputs_;
  std::vector<Eigen::VectorXd> observations_;
  InfoGaussian information_;
};

LiftedModel build_lifted(const LinearModel& model, std::vector<Eigen::VectorXd> inputs,
                         std::vector<Eigen::VectorXd> observations);

/// Centralized posterior of a single lifted model.
Gaussian batch_solution(const LiftedModel& m);

/// Step sizes alpha_k; iterations past the end of `values` use `fallback`.
struct StepSchedule {
  std::vector<double> values;
  double fallback = 1.0;

  double at(std::size_t k) const { return k < values.size() ? values[k] : fallback; }
};

struct DviNode {
  Gaussian belief;
  BlockIndex common;
  StepSchedule steps;
};

/// One synchronous round for every node. All k-iterate marginals are read
/// before any (k+1)-iterate is produced; `evaluation_order`, if given, is the
/// order nodes are processed in and does not affect the result.
std::vector<DviNode> dvi_round(std::span<const DviNode> nodes, std::span<const LiftedModel> lifted,
                               const CommGraph& graph, std::size_t k,
                               std::span<const std::size_t> evaluation_order = {});

struct DviConfig {
  std::size_t max_iterations = 100;
  /// Stop once every node's KL(q^{k+1} || q^k) is below this.
  double kl_tolerance = 1e-10;
};

struct DviResult {
  std::vector<DviNode> nodes;
  std::size_t iterations = 0;
  bool converged = false;
  double last_max_kl = 0.0;
};

DviResult run_dvi(std::vector<DviNode> nodes, std::span<const LiftedModel> lifted,
                  const CommGraph& graph, const DviConfig& config = {});

/// KL(p || q) between Gaussians of equal dimension.
double kl_divergence(const Gaussian& p, const Gaussian& q);

}  // namespace dvislam
