#pragma once

// Conductance matrix, regularized potential solves, expected loss and its
// analytic derivatives, and the DC-approximation loss of AC flow.
//
// Notation used in comments: M = K(theta) + 1 1^T, X = M^{-1} A.
//   L(theta)        = Tr(M^{-1} B)
//   dL/dtheta_l     = -a_l^T M^{-1} B M^{-1} a_l            = -(X^T B X)_ll
//   d2L/dtheta_l dk = 2 (a_l^T M^{-1} a_k)(a_l^T M^{-1} B M^{-1} a_k)

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"

namespace netdesign {

using ConductanceVector = Eigen::VectorXd;

/// Condition guard on the regularized conductance matrix (pivot ratio).
inline constexpr double kMaxConditionEstimate = 1e12;

inline void check_conductances(const NetworkTopology& topology, const ConductanceVector& theta) {
  if (theta.size() != static_cast<Eigen::Index>(topology.edge_count()))
    throw ValidationError("conductance vector has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(topology.edge_count()));
  for (Eigen::Index l = 0; l < theta.size(); ++l)
    if (!(theta(l) >= 0.0) || !std::isfinite(theta(l)))
      throw ValidationError("conductance " + std::to_string(l) + " must be finite and >= 0");
}

/// K = A Diag(theta) A^T.
inline Eigen::MatrixXd conductance_matrix(const NetworkTopology& topology, const ConductanceVector& theta) {
  check_conductances(topology, theta);
  const auto n = static_cast<Eigen::Index>(topology.node_count());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : topology.edges()) {
    const double t = theta(e.id);
    k(e.u, e.u) += t;
    k(e.v, e.v) += t;
    k(e.u, e.v) -= t;
    k(e.v, e.u) -= t;
  }
  return k;
}

/// Cholesky factor of K + 1 1^T. Throws DisconnectedNetwork when the
/// factorization fails or the pivot ratio exceeds kMaxConditionEstimate.
class RegularizedLaplacian {
 public:
  explicit RegularizedLaplacian(const Eigen::MatrixXd& k) {
    if (k.rows() != k.cols()) throw ValidationError("conductance matrix must be square");
    const Eigen::Index n = k.rows();
    Eigen::MatrixXd m = k;
    m.array() += 1.0;
    llt_.compute(m);
    if (llt_.info() != Eigen::Success) throw DisconnectedNetwork("regularized conductance matrix is singular");
    if (n > 0) {
      const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal().array().square();
      const double lo = pivots.minCoeff();
      const double hi = pivots.maxCoeff();
      if (!(lo > 0.0) || hi / lo > kMaxConditionEstimate)
        throw DisconnectedNetwork("regularized conductance matrix is numerically singular (pivot ratio " +
                                  std::to_string(hi / lo) + ")");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd inverse() const {
    const auto n = llt_.matrixLLT().rows();
    return llt_.solve(Eigen::MatrixXd::Identity(n, n));
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// u = (K + 1 1^T)^{-1} b, the zero-mean potential solving K u = b.
inline Eigen::VectorXd solve_potentials(const Eigen::MatrixXd& k, const Eigen::VectorXd& b) {
  if (b.size() != k.rows()) throw ValidationError("injection vector size mismatch");
  if (std::abs(b.sum()) > 1e-9 * b.norm())
    throw ValidationError("injections must sum to zero");
  return RegularizedLaplacian(k).solve(b);
}

enum class DerivativeOrder { value, gradient, hessian };

struct LossDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;  // empty when not requested
  Eigen::MatrixXd hessian;   // empty when not requested
};

namespace detail {

inline void check_moment(const NetworkTopology& topology, const CurrentMoment& moment) {
  if (moment.size() != static_cast<Eigen::Index>(topology.node_count()))
    throw ValidationError("current moment dimension does not match the network");
}

// M^{-1} A, one column per edge.
inline Eigen::MatrixXd inverse_times_incidence(const NetworkTopology& topology, const Eigen::MatrixXd& m_inv) {
  Eigen::MatrixXd x(m_inv.rows(), static_cast<Eigen::Index>(topology.edge_count()));
  for (const auto& e : topology.edges()) x.col(e.id) = m_inv.col(e.u) - m_inv.col(e.v);
  return x;
}

// A^T Y for Y with one column per edge.
inline Eigen::MatrixXd incidence_transpose_times(const NetworkTopology& topology, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(topology.edge_count()), y.cols());
  for (const auto& e : topology.edges()) g.row(e.id) = y.row(e.u) - y.row(e.v);
  return g;
}

}  // namespace detail

/// Loss and (optionally) its derivatives in one factorization.
inline LossDerivatives evaluate_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                                     const CurrentMoment& moment, DerivativeOrder order) {
  detail::check_moment(topology, moment);
  const RegularizedLaplacian factor(conductance_matrix(topology, theta));
  const Eigen::MatrixXd& b = moment.matrix();
  const Eigen::MatrixXd m_inv = factor.inverse();

  LossDerivatives out;
  out.value = m_inv.cwiseProduct(b).sum();
  if (order == DerivativeOrder::value) return out;

  const Eigen::MatrixXd x = detail::inverse_times_incidence(topology, m_inv);
  const Eigen::MatrixXd bx = b * x;
  out.gradient = -(x.cwiseProduct(bx)).colwise().sum().transpose();
  if (order == DerivativeOrder::gradient) return out;

  const Eigen::MatrixXd g = detail::incidence_transpose_times(topology, x);
  Eigen::MatrixXd h = x.transpose() * bx;
  out.hessian = 2.0 * g.cwiseProduct(h);
  out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
  return out;
}

/// Tr((K + 1 1^T)^{-1} B).
inline double expected_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                            const CurrentMoment& moment) {
  return evaluate_loss(topology, theta, moment, DerivativeOrder::value).value;
}

inline Eigen::VectorXd loss_gradient(const NetworkTopology& topology, const ConductanceVector& theta,
                                     const CurrentMoment& moment) {
  return evaluate_loss(topology, theta, moment, DerivativeOrder::gradient).gradient;
}

inline Eigen::MatrixXd loss_hessian(const NetworkTopology& topology, const ConductanceVector& theta,
                                    const CurrentMoment& moment) {
  return evaluate_loss(topology, theta, moment, DerivativeOrder::hessian).hessian;
}

/// Phases of the lossless DC flow: phi = (K/mu + 1 1^T)^{-1} p.
inline Eigen::VectorXd dc_phases(const NetworkTopology& topology, const ConductanceVector& theta,
                                 const Eigen::VectorXd& p, double mu) {
  if (!(mu > 0.0)) throw ValidationError("mu must be positive");
  const Eigen::MatrixXd susceptance = conductance_matrix(topology, theta) / mu;
  return solve_potentials(susceptance, p);
}

/// Leading-order AC loss 1/2 p^T Kt^+ K Kt^+ p with Kt = K/mu.
inline double ac_dc_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                         const Eigen::VectorXd& p, double mu) {
  if (p.size() != static_cast<Eigen::Index>(topology.node_count()))
    throw ValidationError("power vector size mismatch");
  const Eigen::MatrixXd k = conductance_matrix(topology, theta);
  const Eigen::VectorXd phi = dc_phases(topology, theta, p, mu);
  return 0.5 * phi.dot(k * phi);
}

/// A problem restricted to a subset of edges: the component carrying every
/// loaded node, re-indexed densely.
struct SubProblem {
  NetworkTopology topology;
  CurrentMoment moment;
  std::vector<int> edge_map;  // sub edge -> full edge
  std::vector<int> node_map;  // sub node -> full node
};

/// Connected components over the edges selected by `mask`; returns a
/// component label per node.
inline std::vector<int> component_labels(const NetworkTopology& topology, const std::vector<bool>& mask) {
  const std::size_t n = topology.node_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  for (const auto& e : topology.edges()) {
    if (!mask[static_cast<std::size_t>(e.id)]) continue;
    const int a = find(e.u);
    const int b = find(e.v);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::vector<int> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = find(static_cast<int>(i));
  return label;
}

/// nullopt when the selected edges leave loaded nodes in different components.
inline std::optional<SubProblem> restrict_problem(const NetworkTopology& topology, const CurrentMoment& moment,
                                                  const std::vector<bool>& edge_mask) {
  detail::check_moment(topology, moment);
  if (edge_mask.size() != topology.edge_count()) throw ValidationError("edge mask size mismatch");
  const auto loaded = moment.loaded_nodes();
  const auto label = component_labels(topology, edge_mask);

  int root = -1;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (!loaded[i]) continue;
    if (root < 0) root = label[i];
    else if (label[i] != root) return std::nullopt;
  }

  SubProblem sub;
  std::vector<int> full_to_sub(topology.node_count(), -1);
  std::vector<Node> nodes;
  if (root >= 0) {
    for (const auto& node : topology.nodes()) {
      if (label[static_cast<std::size_t>(node.id)] != root) continue;
      full_to_sub[static_cast<std::size_t>(node.id)] = static_cast<int>(nodes.size());
      sub.node_map.push_back(node.id);
      nodes.push_back({static_cast<int>(nodes.size()), node.position, node.role});
    }
  }
  std::vector<Edge> edges;
  for (const auto& e : topology.edges()) {
    if (!edge_mask[static_cast<std::size_t>(e.id)]) continue;
    const int su = full_to_sub[static_cast<std::size_t>(e.u)];
    const int sv = full_to_sub[static_cast<std::size_t>(e.v)];
    if (su < 0 || sv < 0) continue;
    sub.edge_map.push_back(e.id);
    edges.push_back({static_cast<int>(edges.size()), su, sv, e.length, e.kind});
  }
  sub.topology = NetworkTopology(std::move(nodes), std::move(edges), ParallelEdges::allow);

  const auto ns = static_cast<Eigen::Index>(sub.node_map.size());
  Eigen::MatrixXd b(ns, ns);
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < ns; ++j)
      b(i, j) = moment.matrix()(sub.node_map[static_cast<std::size_t>(i)], sub.node_map[static_cast<std::size_t>(j)]);
  sub.moment = CurrentMoment(std::move(b));
  return sub;
}

/// Loss over the support of theta (entries > 0) only, ignoring unloaded
/// islands. Derivatives are scattered back to the full edge index with zeros
/// off the loaded component. nullopt if loaded nodes are disconnected.
inline std::optional<LossDerivatives> evaluate_loss_on_support(const NetworkTopology& topology,
                                                               const ConductanceVector& theta,
                                                               const CurrentMoment& moment, DerivativeOrder order) {
  check_conductances(topology, theta);
  std::vector<bool> mask(topology.edge_count());
  for (std::size_t l = 0; l < mask.size(); ++l) mask[l] = theta(static_cast<Eigen::Index>(l)) > 0.0;
  const auto sub = restrict_problem(topology, moment, mask);
  if (!sub) return std::nullopt;

  const auto ms = static_cast<Eigen::Index>(sub->edge_map.size());
  ConductanceVector sub_theta(ms);
  for (Eigen::Index l = 0; l < ms; ++l) sub_theta(l) = theta(sub->edge_map[static_cast<std::size_t>(l)]);

  LossDerivatives out;
  if (sub->topology.node_count() == 0) {
    out.value = 0.0;
  } else {
    out = evaluate_loss(sub->topology, sub_theta, sub->moment, order);
  }
  const auto m = theta.size();
  if (order != DerivativeOrder::value) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
    for (Eigen::Index l = 0; l < ms && out.gradient.size() > 0; ++l)
      grad(sub->edge_map[static_cast<std::size_t>(l)]) = out.gradient(l);
    out.gradient = std::move(grad);
  }
  if (order == DerivativeOrder::hessian) {
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < ms && out.hessian.size() > 0; ++i)
      for (Eigen::Index j = 0; j < ms; ++j)
        hess(sub->edge_map[static_cast<std::size_t>(i)], sub->edge_map[static_cast<std::size_t>(j)]) = out.hessian(i, j);
    out.hessian = std::move(hess);
  }
  return out;
}

/// Expected power loss Tr((K(theta) + 1 1^T)^{-1} B) as an objective for the
/// barrier solver.
class ExpectedLoss {
 public:
  ExpectedLoss(NetworkTopology topology, CurrentMoment moment)
      : topology_(std::move(topology)), moment_(std::move(moment)) {
    detail::check_moment(topology_, moment_);
  }

  const NetworkTopology& topology() const { return topology_; }
  const CurrentMoment& moment() const { return moment_; }
  std::size_t edge_count() const { return topology_.edge_count(); }

  double value(const ConductanceVector& theta) const { return expected_loss(topology_, theta, moment_); }

  LossDerivatives derivatives(const ConductanceVector& theta, DerivativeOrder order = DerivativeOrder::hessian) const {
    return evaluate_loss(topology_, theta, moment_, order);
  }

  /// Loss on the sub-network spanned by `mask`; nullopt when infeasible.
  std::optional<ExpectedLoss> restricted(const std::vector<bool>& mask, std::vector<int>& edge_map) const {
    auto sub = restrict_problem(topology_, moment_, mask);
    if (!sub) return std::nullopt;
    edge_map = sub->edge_map;
    return ExpectedLoss(std::move(sub->topology), std::move(sub->moment));
  }

 private:
  NetworkTopology topology_;
  CurrentMoment moment_;
};

}  // namespace netdesign
