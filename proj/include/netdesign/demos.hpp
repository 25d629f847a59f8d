#pragma once

// Reference configurations: the grid demos with the copper cost constants and
// the tiny seeded instances used against the exhaustive oracle.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign::demos {

/// A network ready to design: topology, moment and costs, already augmented
/// with a virtual generator when there are several generators.
struct DesignProblem {
  std::string name;
  NetworkTopology topology;
  LoadModel load;
  CurrentMoment moment;
  CostModel costs;
  std::vector<int> virtual_edges;
};

/// Mean draw -1 and standard deviation 1/3 on every consumer.
inline LoadModel standard_load(const NetworkTopology& topology, double mean = -1.0, double stddev = 1.0 / 3.0) {
  LoadModel load = LoadModel::zeros(topology.node_count());
  for (int c : topology.consumers()) {
    load.mean(c) = mean;
    load.stddev(c) = stddev;
  }
  return load;
}

/// alpha = s^2 and beta = s, so 1 on axis edges and 2 and sqrt(2) on diagonals.
inline DesignProblem make_problem(std::string name, const NetworkTopology& topology, const LoadModel& load,
                                  double alpha_scale = 1.0, double beta_scale = 1.0) {
  load.validate(topology);
  const auto costs = CostModel::from_lengths(topology, alpha_scale, beta_scale);
  if (topology.generators().size() == 1)
    return {std::move(name), topology, load, single_generator_moment(topology, load), costs, {}};
  auto aug = augment_virtual_generator(topology, load);
  auto ext = extend_costs_to_virtual(costs, aug.topology);
  return {std::move(name), aug.topology, aug.load, aug.moment, ext, aug.virtual_edges};
}

inline NetworkTopology grid_with_roles(int w, const std::vector<int>& generators, bool boundary_consumers_only = false) {
  auto grid = build_grid_network(w, true);
  std::vector<NodeRole> roles(grid.node_count(), NodeRole::consumer);
  if (boundary_consumers_only)
    for (int r = 1; r + 1 < w; ++r)
      for (int c = 1; c + 1 < w; ++c) roles[static_cast<std::size_t>(r * w + c)] = NodeRole::transmission;
  for (int g : generators) roles[static_cast<std::size_t>(g)] = NodeRole::generator;
  return grid.with_roles(roles);
}

/// 9x9, generator in the corner, every other node a consumer.
inline DesignProblem corner_generator() {
  auto topo = grid_with_roles(9, {0});
  return make_problem("corner_generator", topo, standard_load(topo));
}

/// 9x9, generator at the center.
inline DesignProblem center_generator() {
  auto topo = grid_with_roles(9, {40});
  return make_problem("center_generator", topo, standard_load(topo));
}

/// 9x9, central generator, consumers on the boundary, transmission inside.
inline DesignProblem boundary_consumers() {
  auto topo = grid_with_roles(9, {40}, true);
  return make_problem("boundary_consumers", topo, standard_load(topo));
}

/// 10x10 with four generators at (2,2), (2,7), (7,2), (7,7).
inline DesignProblem four_generators() {
  auto topo = grid_with_roles(10, {22, 27, 72, 77});
  return make_problem("four_generators", topo, standard_load(topo));
}

inline std::vector<DesignProblem> grid_demos() {
  return {corner_generator(), center_generator(), boundary_consumers(), four_generators()};
}

/// Square 0-1-2-3 with the diagonal 0-2; node 0 generates.
inline NetworkTopology diamond() {
  std::vector<Node> nodes{{0, {0, 0}, NodeRole::generator},
                          {1, {1, 0}, NodeRole::consumer},
                          {2, {1, 1}, NodeRole::consumer},
                          {3, {0, 1}, NodeRole::consumer}};
  std::vector<Edge> edges{{0, 0, 1, 1.0, EdgeKind::real},
                          {1, 1, 2, 1.0, EdgeKind::real},
                          {2, 2, 3, 1.0, EdgeKind::real},
                          {3, 3, 0, 1.0, EdgeKind::real},
                          {4, 0, 2, std::sqrt(2.0), EdgeKind::real}};
  return NetworkTopology(nodes, edges);
}

/// Ten seeded diamond instances with random loads and copper cost constants.
inline std::vector<DesignProblem> tiny_oracle_suite(std::uint64_t seed = 2024) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto topo = diamond();
  std::vector<DesignProblem> out;
  for (int i = 0; i < 10; ++i) {
    LoadModel load = LoadModel::zeros(topo.node_count());
    for (int c : topo.consumers()) {
      load.mean(c) = -(0.5 + unit(rng));
      load.stddev(c) = 0.5 * unit(rng);
    }
    // Copper costs: random price per conductance and fixed charge per length.
    const double price = 0.5 + 1.5 * unit(rng);
    const double charge = 2.0 * unit(rng);
    const CostModel costs = CostModel::from_lengths(topo, price, charge);
    out.push_back({"diamond_" + std::to_string(i), topo, load, single_generator_moment(topo, load), costs, {}});
  }
  return out;
}

}  // namespace netdesign::demos
