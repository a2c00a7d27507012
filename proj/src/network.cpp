#include "dvislam/network.hpp"

#include <algorithm>
#include <numeric>

#include "dvislam/errors.hpp"

namespace dvislam {

std::vector<std::size_t> CommGraph::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j) {
    if (j == i || weight(i, j) > 0.0) out.push_back(j);
  }
  return out;
}

std::size_t CommGraph::degree(std::size_t i) const { return neighbors(i).size() - 1; }

CommGraph metropolis_weights(std::vector<Edge> edges, std::size_t n) {
  for (auto& e : edges) {
    if (e.first == e.second) throw InvalidArgument("metropolis_weights: self-loop");
    if (e.first >= n || e.second >= n) throw InvalidArgument("metropolis_weights: node out of range");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw InvalidArgument("metropolis_weights: duplicate edge");
  }

  std::vector<std::size_t> deg(n, 0);
  for (const auto& [a, b] : edges) {
    ++deg[a];
    ++deg[b];
  }

  CommGraph g;
  g.n_ = n;
  g.edges_ = std::move(edges);
  g.weights_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& [a, b] : g.edges_) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[a], deg[b])));
    g.weights_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = w;
    g.weights_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = w;
  }
  for (Eigen::Index i = 0; i < g.weights_.rows(); ++i) {
    // Sum in a fixed order so the self-weight is reproducible bit for bit.
    double off = 0.0;
    for (Eigen::Index j = 0; j < g.weights_.cols(); ++j) {
      if (j != i) off += g.weights_(i, j);
    }
    g.weights_(i, i) = 1.0 - off;
  }

  // Connectivity by union-find.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : g.edges_) parent[find(a)] = find(b);
  for (std::size_t i = 1; i < n; ++i) {
    if (find(i) != find(0)) {
      g.connected_ = false;
      g.warning_ = "graph is disconnected";
      break;
    }
  }
  return g;
}

CommGraph complete_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  }
  return metropolis_weights(std::move(edges), n);
}

CommGraph sample_round(const CommGraph& g, double loss_rate, Rng& rng) {
  if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) {
    throw InvalidArgument("sample_round: loss rate must lie in [0, 1]");
  }
  std::vector<Edge> kept;
  for (const auto& e : g.edges()) {
    // One draw per edge regardless of the rate keeps streams aligned across rates.
    const double u = rng.uniform();
    if (u >= loss_rate) kept.push_back(e);
  }
  return metropolis_weights(std::move(kept), g.size());
}

std::size_t info_payload_bytes(std::size_t n_ids, std::size_t dim) {
  return sizeof(std::int64_t) * n_ids + sizeof(double) * (dim + dim * (dim + 1) / 2);
}

}  // namespace dvislam
