#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign::test {

/// Grid with the given generators; every other node a consumer.
inline NetworkTopology tagged_grid(int w, const std::vector<int>& generators, bool diagonals = true) {
  auto grid = build_grid_network(w, diagonals);
  std::vector<NodeRole> roles(grid.node_count(), NodeRole::consumer);
  for (int g : generators) roles[static_cast<std::size_t>(g)] = NodeRole::generator;
  return grid.with_roles(roles);
}

inline LoadModel uniform_consumer_load(const NetworkTopology& topology, double mean, double stddev) {
  LoadModel load = LoadModel::zeros(topology.node_count());
  for (int c : topology.consumers()) {
    load.mean(c) = mean;
    load.stddev(c) = stddev;
  }
  return load;
}

/// Two nodes joined by `count` parallel edges; node 0 is the generator.
inline NetworkTopology parallel_edges(int count) {
  std::vector<Node> nodes{{0, {0, 0}, NodeRole::generator}, {1, {1, 0}, NodeRole::consumer}};
  std::vector<Edge> edges;
  for (int i = 0; i < count; ++i) edges.push_back({i, 0, 1, 1.0, EdgeKind::real});
  return NetworkTopology(nodes, edges, ParallelEdges::allow);
}

/// Moment of the deterministic injection (1, -1) on two nodes.
inline CurrentMoment unit_pair_moment() {
  Eigen::VectorXd b(2);
  b << 1.0, -1.0;
  return CurrentMoment::from_injection(b);
}

inline ConductanceVector random_conductances(std::size_t m, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ConductanceVector theta(static_cast<Eigen::Index>(m));
  for (Eigen::Index l = 0; l < theta.size(); ++l) theta(l) = u(rng);
  return theta;
}

/// Central differences, written independently of the library helpers.
template <class F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double relative_max_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace netdesign::test
