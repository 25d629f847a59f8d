#pragma once

// Candidate network, node roles, load statistics and cost coefficients.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "netdesign/errors.hpp"

namespace netdesign {

enum class NodeRole { consumer, transmission, generator, virtual_generator };
enum class EdgeKind { real, virtual_line };

inline const char* to_string(NodeRole role) {
  switch (role) {
    case NodeRole::consumer: return "consumer";
    case NodeRole::transmission: return "transmission";
    case NodeRole::generator: return "generator";
    case NodeRole::virtual_generator: return "virtual_generator";
  }
  return "?";
}

inline const char* to_string(EdgeKind kind) {
  return kind == EdgeKind::real ? "real" : "virtual";
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Node {
  int id = 0;
  Point2 position;
  NodeRole role = NodeRole::transmission;
};

struct Edge {
  int id = 0;
  int u = 0;
  int v = 0;
  double length = 1.0;
  EdgeKind kind = EdgeKind::real;
};

enum class ParallelEdges { reject, allow };

/// Undirected candidate network. Node and edge ids are dense indices 0..n-1
/// and 0..m-1 matching their position in the containers.
class NetworkTopology {
 public:
  NetworkTopology() = default;

  NetworkTopology(std::vector<Node> nodes, std::vector<Edge> edges,
                  ParallelEdges parallel = ParallelEdges::reject)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    validate(parallel);
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const Edge& edge(int id) const { return edges_.at(static_cast<std::size_t>(id)); }

  std::vector<int> nodes_with_role(NodeRole role) const {
    std::vector<int> out;
    for (const auto& n : nodes_)
      if (n.role == role) out.push_back(n.id);
    return out;
  }

  std::vector<int> generators() const { return nodes_with_role(NodeRole::generator); }
  std::vector<int> consumers() const { return nodes_with_role(NodeRole::consumer); }

  std::optional<int> virtual_generator() const {
    for (const auto& n : nodes_)
      if (n.role == NodeRole::virtual_generator) return n.id;
    return std::nullopt;
  }

  std::vector<bool> real_edge_mask() const {
    std::vector<bool> mask(edges_.size());
    for (const auto& e : edges_) mask[static_cast<std::size_t>(e.id)] = e.kind == EdgeKind::real;
    return mask;
  }

  /// Dense node-by-edge incidence matrix, column l = e_u - e_v.
  Eigen::MatrixXd incidence() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nodes_.size()),
                                              static_cast<Eigen::Index>(edges_.size()));
    for (const auto& e : edges_) {
      a(e.u, e.id) = 1.0;
      a(e.v, e.id) = -1.0;
    }
    return a;
  }

  /// Same network with node roles replaced.
  NetworkTopology with_roles(const std::vector<NodeRole>& roles) const {
    if (roles.size() != nodes_.size()) throw ValidationError("role vector size mismatch");
    auto nodes = nodes_;
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i].role = roles[i];
    NetworkTopology out;
    out.nodes_ = std::move(nodes);
    out.edges_ = edges_;
    out.validate(ParallelEdges::allow);
    return out;
  }

 private:
  void validate(ParallelEdges parallel) const {
    const int n = static_cast<int>(nodes_.size());
    int virtual_count = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].id != static_cast<int>(i))
        throw ValidationError("node ids must be dense and ordered; node " + std::to_string(i) +
                              " has id " + std::to_string(nodes_[i].id));
      if (nodes_[i].role == NodeRole::virtual_generator) ++virtual_count;
    }
    if (virtual_count > 1) throw ValidationError("at most one virtual generator is allowed");

    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      const std::string tag = "edge " + std::to_string(i);
      if (e.id != static_cast<int>(i)) throw ValidationError(tag + ": edge ids must be dense and ordered");
      if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
        throw ValidationError(tag + ": endpoint references a missing node");
      if (e.u == e.v) throw ValidationError(tag + ": self-loop");
      if (!(e.length > 0.0) || !std::isfinite(e.length))
        throw ValidationError(tag + ": length must be positive and finite");
      const auto key = std::minmax(e.u, e.v);
      if (!seen.insert(key).second && parallel == ParallelEdges::reject)
        throw ValidationError(tag + ": duplicate edge between nodes " + std::to_string(key.first) +
                              " and " + std::to_string(key.second));
      const bool touches_virtual = nodes_[static_cast<std::size_t>(e.u)].role == NodeRole::virtual_generator ||
                                   nodes_[static_cast<std::size_t>(e.v)].role == NodeRole::virtual_generator;
      if (e.kind == EdgeKind::virtual_line) {
        const NodeRole ru = nodes_[static_cast<std::size_t>(e.u)].role;
        const NodeRole rv = nodes_[static_cast<std::size_t>(e.v)].role;
        const bool ok = (ru == NodeRole::virtual_generator && rv == NodeRole::generator) ||
                        (rv == NodeRole::virtual_generator && ru == NodeRole::generator);
        if (!ok) throw ValidationError(tag + ": a virtual edge must join the virtual generator to a generator");
      } else if (touches_virtual) {
        throw ValidationError(tag + ": real edges may not touch the virtual generator");
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

/// w x w unit grid, row-major node ids, all nodes transmission. Edges are
/// emitted horizontal, vertical, then (optionally) both diagonals per cell.
inline NetworkTopology build_grid_network(int w, bool include_diagonals) {
  if (w < 1) throw ValidationError("grid width must be >= 1");
  std::vector<Node> nodes;
  nodes.reserve(static_cast<std::size_t>(w * w));
  for (int r = 0; r < w; ++r)
    for (int c = 0; c < w; ++c)
      nodes.push_back({r * w + c, {static_cast<double>(c), static_cast<double>(r)}, NodeRole::transmission});

  std::vector<Edge> edges;
  auto add = [&edges](int u, int v, double len) {
    edges.push_back({static_cast<int>(edges.size()), u, v, len, EdgeKind::real});
  };
  for (int r = 0; r < w; ++r)
    for (int c = 0; c + 1 < w; ++c) add(r * w + c, r * w + c + 1, 1.0);
  for (int r = 0; r + 1 < w; ++r)
    for (int c = 0; c < w; ++c) add(r * w + c, (r + 1) * w + c, 1.0);
  if (include_diagonals) {
    const double diag = std::sqrt(2.0);
    for (int r = 0; r + 1 < w; ++r)
      for (int c = 0; c + 1 < w; ++c) {
        add(r * w + c, (r + 1) * w + c + 1, diag);
        add(r * w + c + 1, (r + 1) * w + c, diag);
      }
  }
  return NetworkTopology(std::move(nodes), std::move(edges));
}

/// Per-node load statistics. Means are <= 0 at consumers; generators and
/// transmission nodes carry zero mean and zero deviation.
struct LoadModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  // Optional full covariance over all nodes; generator rows/columns must be zero.
  std::optional<Eigen::MatrixXd> covariance;

  static LoadModel zeros(std::size_t n) {
    const auto size = static_cast<Eigen::Index>(n);
    return {Eigen::VectorXd::Zero(size), Eigen::VectorXd::Zero(size), std::nullopt};
  }

  Eigen::MatrixXd covariance_matrix() const {
    if (covariance) return *covariance;
    return stddev.array().square().matrix().asDiagonal();
  }

  void validate(const NetworkTopology& topology) const {
    const auto n = static_cast<Eigen::Index>(topology.node_count());
    if (mean.size() != n || stddev.size() != n) throw ValidationError("load vectors must have one entry per node");
    for (const auto& node : topology.nodes()) {
      const double m = mean(node.id);
      const double s = stddev(node.id);
      if (!std::isfinite(m) || !std::isfinite(s) || s < 0.0)
        throw ValidationError("node " + std::to_string(node.id) + ": invalid load statistics");
      if (node.role != NodeRole::consumer && (m != 0.0 || s != 0.0))
        throw ValidationError("node " + std::to_string(node.id) + ": only consumers may carry load");
    }
    if (covariance) {
      const auto& cov = *covariance;
      if (cov.rows() != n || cov.cols() != n) throw ValidationError("covariance must be n x n");
      if (!cov.isApprox(cov.transpose(), 1e-12)) throw ValidationError("covariance must be symmetric");
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(cov(i, i) - stddev(i) * stddev(i)) > 1e-9 * std::max(1.0, cov(i, i)))
          throw ValidationError("covariance diagonal must equal squared standard deviations");
    }
  }
};

/// Second moment B = <b b^T> of the injected currents.
class CurrentMoment {
 public:
  CurrentMoment() = default;

  explicit CurrentMoment(Eigen::MatrixXd b) : b_(std::move(b)) {
    if (b_.rows() != b_.cols()) throw ValidationError("current moment must be square");
    const double scale = std::max(1.0, b_.cwiseAbs().maxCoeff());
    if ((b_ - b_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ValidationError("current moment must be symmetric");
    if (b_.size() > 0 && b_.rowwise().sum().cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ValidationError("current moment rows must sum to zero");
  }

  /// Deterministic injection: B = b b^T.
  static CurrentMoment from_injection(const Eigen::VectorXd& b) { return CurrentMoment(b * b.transpose()); }

  const Eigen::MatrixXd& matrix() const { return b_; }
  Eigen::Index size() const { return b_.rows(); }

  /// Nodes with a nonzero diagonal entry, i.e. nodes that inject or draw current.
  std::vector<bool> loaded_nodes() const {
    std::vector<bool> out(static_cast<std::size_t>(b_.rows()), false);
    if (b_.size() == 0) return out;
    const double scale = b_.diagonal().cwiseAbs().maxCoeff();
    if (scale == 0.0) return out;
    for (Eigen::Index i = 0; i < b_.rows(); ++i) out[static_cast<std::size_t>(i)] = std::abs(b_(i, i)) > 1e-14 * scale;
    return out;
  }

 private:
  Eigen::MatrixXd b_;
};

/// Moment for a single source `generator` that balances every other node:
/// b = T b_c with T = I - e_g 1^T, hence B = T (mean mean^T + Sigma) T^T.
inline CurrentMoment single_generator_moment(const LoadModel& load, int generator) {
  const Eigen::Index n = load.mean.size();
  if (generator < 0 || generator >= n) throw ValidationError("generator index out of range");
  Eigen::VectorXd mean = load.mean;
  Eigen::MatrixXd sigma = load.covariance_matrix();
  mean(generator) = 0.0;
  sigma.row(generator).setZero();
  sigma.col(generator).setZero();
  Eigen::MatrixXd second = mean * mean.transpose() + sigma;

  Eigen::MatrixXd t = Eigen::MatrixXd::Identity(n, n);
  t.row(generator).setConstant(-1.0);
  t(generator, generator) = 0.0;
  Eigen::MatrixXd b = t * second * t.transpose();
  b = 0.5 * (b + b.transpose());
  return CurrentMoment(std::move(b));
}

inline CurrentMoment single_generator_moment(const NetworkTopology& topology, const LoadModel& load) {
  load.validate(topology);
  const auto gens = topology.generators();
  if (gens.size() != 1)
    throw ValidationError("single-generator moment needs exactly one generator, found " +
                          std::to_string(gens.size()));
  return single_generator_moment(load, gens.front());
}

/// Network with a virtual source wired to every real generator.
struct AugmentedNetwork {
  NetworkTopology topology;
  LoadModel load;
  CurrentMoment moment;
  int virtual_node = -1;
  std::vector<int> virtual_edges;
};

inline AugmentedNetwork augment_virtual_generator(const NetworkTopology& topology, const LoadModel& load) {
  load.validate(topology);
  if (topology.virtual_generator()) throw ValidationError("network already has a virtual generator");
  const auto gens = topology.generators();
  if (gens.empty()) throw ValidationError("augmentation needs at least one generator");

  auto nodes = topology.nodes();
  auto edges = topology.edges();
  const int vnode = static_cast<int>(nodes.size());
  Point2 centroid;
  for (int g : gens) {
    centroid.x += nodes[static_cast<std::size_t>(g)].position.x / static_cast<double>(gens.size());
    centroid.y += nodes[static_cast<std::size_t>(g)].position.y / static_cast<double>(gens.size());
  }
  nodes.push_back({vnode, centroid, NodeRole::virtual_generator});

  AugmentedNetwork out;
  out.virtual_node = vnode;
  for (int g : gens) {
    const int id = static_cast<int>(edges.size());
    edges.push_back({id, vnode, g, 1.0, EdgeKind::virtual_line});
    out.virtual_edges.push_back(id);
  }
  out.topology = NetworkTopology(std::move(nodes), std::move(edges), ParallelEdges::reject);

  const Eigen::Index n = static_cast<Eigen::Index>(topology.node_count());
  LoadModel aug = LoadModel::zeros(topology.node_count() + 1);
  aug.mean.head(n) = load.mean;
  aug.stddev.head(n) = load.stddev;
  if (load.covariance) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n + 1, n + 1);
    cov.topLeftCorner(n, n) = *load.covariance;
    aug.covariance = std::move(cov);
  }
  out.load = aug;
  out.moment = single_generator_moment(aug, vnode);
  return out;
}

/// Linear conductance cost alpha, fixed charge beta, trade-off lambda.
struct CostModel {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  double lambda = 1.0;

  /// alpha folded with lambda, the coefficient the optimizers see.
  Eigen::VectorXd effective_alpha() const { return lambda * alpha; }

  /// Copper model alpha_l = (c/g) s_l^2 and beta_l = beta_per_length * s_l.
  static CostModel from_lengths(const NetworkTopology& topology, double price_over_conductivity,
                                double beta_per_length) {
    const auto m = static_cast<Eigen::Index>(topology.edge_count());
    CostModel out{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), 1.0};
    for (const auto& e : topology.edges()) {
      out.alpha(e.id) = price_over_conductivity * e.length * e.length;
      out.beta(e.id) = beta_per_length * e.length;
    }
    return out;
  }

  void validate(const NetworkTopology& topology) const {
    const auto m = static_cast<Eigen::Index>(topology.edge_count());
    if (alpha.size() != m || beta.size() != m) throw ValidationError("cost vectors must have one entry per edge");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be positive");
    for (Eigen::Index l = 0; l < m; ++l) {
      if (!(alpha(l) >= 0.0) || !std::isfinite(alpha(l))) throw ValidationError("alpha must be >= 0");
      if (!(beta(l) >= 0.0) || !std::isfinite(beta(l))) throw ValidationError("beta must be >= 0");
      if (topology.edge(static_cast<int>(l)).kind == EdgeKind::virtual_line && beta(l) != 0.0)
        throw ValidationError("virtual edges carry no fixed charge");
    }
  }
};

inline constexpr double kVirtualAlphaRatio = 1e-6;

/// Extends real-edge costs to an augmented network: virtual edges get
/// alpha = 1e-6 * min real alpha and beta = 0.
inline CostModel extend_costs_to_virtual(const CostModel& real, const NetworkTopology& augmented) {
  const auto m = static_cast<Eigen::Index>(augmented.edge_count());
  const auto m_real = real.alpha.size();
  if (m_real > m) throw ValidationError("augmented network has fewer edges than the cost model");
  double min_alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index l = 0; l < m_real; ++l)
    if (real.alpha(l) > 0.0) min_alpha = std::min(min_alpha, real.alpha(l));
  if (!std::isfinite(min_alpha)) min_alpha = 1.0;
  CostModel out{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), real.lambda};
  out.alpha.head(m_real) = real.alpha;
  out.beta.head(m_real) = real.beta;
  for (Eigen::Index l = m_real; l < m; ++l) out.alpha(l) = kVirtualAlphaRatio * min_alpha;
  return out;
}

}  // namespace netdesign
