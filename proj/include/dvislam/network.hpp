#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvislam/rng.hpp"

namespace dvislam {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected communication graph with a symmetric doubly stochastic weight
/// matrix. A(i, j) > 0 iff (i, j) is an edge or i == j.
class CommGraph {
 public:
  CommGraph() = default;

  std::size_t size() const { return n_; }
  /// Edges as (i, j) with i < j, sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  double weight(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  bool connected() const { return connected_; }
  /// Non-empty when construction found a problem that is allowed (disconnected graph).
  const std::string& warning() const { return warning_; }

  /// One-hop neighbours of i including i itself, ascending.
  std::vector<std::size_t> neighbors(std::size_t i) const;
  std::size_t degree(std::size_t i) const;

 private:
  friend CommGraph metropolis_weights(std::vector<Edge> edges, std::size_t n);

  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  Eigen::MatrixXd weights_;
  bool connected_ = true;
  std::string warning_;
};

/// A(i,j) = 1 / (1 + max(deg_i, deg_j)) on edges, self-weight absorbs the rest.
CommGraph metropolis_weights(std::vector<Edge> edges, std::size_t n);
CommGraph complete_graph(std::size_t n);

/// Drops every edge independently with probability `loss_rate` and recomputes
/// Metropolis weights on the surviving edges.
CommGraph sample_round(const CommGraph& g, double loss_rate, Rng& rng);

/// Message delivered to a node in one exchange round.
template <class Payload>
struct Delivery {
  std::size_t from;
  double weight;
  Payload payload;
};

/// Synchronous one-hop exchange. Node i receives (A_ij, extract(nodes[j], j, i))
/// from every j in N_i, itself included. All reads complete before the result
/// is returned, so callers can write node state afterwards.
template <class Node, class Extract>
auto exchange(std::span<const Node> nodes, const CommGraph& g, Extract&& extract) {
  using Payload = std::decay_t<decltype(extract(nodes[0], std::size_t{0}, std::size_t{0}))>;
  std::vector<std::vector<Delivery<Payload>>> inbox(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j : g.neighbors(i)) {
      inbox[i].push_back(Delivery<Payload>{j, g.weight(i, j), extract(nodes[j], j, i)});
    }
  }
  return inbox;
}

/// Bytes on the wire for an information-form marginal over `dim` variables
/// tagged with `n_ids` 64-bit landmark ids: ids + vector + packed lower triangle.
std::size_t info_payload_bytes(std::size_t n_ids, std::size_t dim);

/// Sum of `bytes(payload)` over all deliveries that crossed an edge (self
/// deliveries are free).
template <class Payload, class Bytes>
std::size_t exchanged_bytes(const std::vector<std::vector<Delivery<Payload>>>& inbox, Bytes&& bytes) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < inbox.size(); ++i) {
    for (const auto& d : inbox[i]) {
      if (d.from != i) total += bytes(d.payload);
    }
  }
  return total;
}

}  // namespace dvislam
