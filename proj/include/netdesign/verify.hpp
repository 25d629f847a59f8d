#pragma once

// Independent oracles: exhaustive subgraph search, finite differences, and
// the optimal generation dispatch solved as an equality-constrained quadratic.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "netdesign/connectivity.hpp"
#include "netdesign/convex_solver.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign {

inline constexpr std::size_t kMaxBruteForceEdges = 16;

enum class EnumerationOrder { ascending, descending };

struct BruteForceResult {
  double value = std::numeric_limits<double>::infinity();
  std::uint32_t mask = 0;  // bit l set = edge l built
  std::vector<bool> support;
  ConductanceVector theta;
  int feasible_subsets = 0;
};

namespace detail {

struct SubsetSolve {
  bool feasible = false;
  double value = 0.0;
  ConductanceVector theta;
};

inline SubsetSolve solve_subset(const NetworkTopology& topology, const CurrentMoment& moment, const CostModel& costs,
                                const BarrierSettings& barrier, std::uint32_t mask) {
  const auto m = topology.edge_count();
  std::vector<bool> built(m);
  double step = 0.0;
  for (std::size_t l = 0; l < m; ++l) {
    built[l] = (mask >> l) & 1U;
    if (built[l]) step += costs.beta(static_cast<Eigen::Index>(l));
  }
  SubsetSolve out;
  const auto sub = restrict_problem(topology, moment, built);
  if (!sub) return out;
  out.theta = ConductanceVector::Zero(static_cast<Eigen::Index>(m));
  out.feasible = true;
  if (sub->edge_map.empty()) {
    // Nothing loaded: an empty (or useless) network costs only its fixed charge.
    out.value = step;
    return out;
  }
  const Eigen::VectorXd alpha = costs.effective_alpha();
  Eigen::VectorXd sub_alpha(static_cast<Eigen::Index>(sub->edge_map.size()));
  for (std::size_t l = 0; l < sub->edge_map.size(); ++l)
    sub_alpha(static_cast<Eigen::Index>(l)) = alpha(sub->edge_map[l]);
  const auto r = solve_convex(sub->topology, sub->moment, sub_alpha, barrier);
  for (std::size_t l = 0; l < sub->edge_map.size(); ++l)
    out.theta(sub->edge_map[l]) = r.theta(static_cast<Eigen::Index>(l));
  out.value = r.objective + step;
  return out;
}

}  // namespace detail

/// Global optimum over all 2^m edge subsets, each solved as a convex problem.
/// Ties go to the numerically smallest mask whatever the visiting order.
inline BruteForceResult brute_force_design(const NetworkTopology& topology, const CurrentMoment& moment,
                                           const CostModel& costs, BarrierSettings barrier = {},
                                           EnumerationOrder order = EnumerationOrder::ascending) {
  const auto m = topology.edge_count();
  if (m > kMaxBruteForceEdges)
    throw ValidationError("brute force is limited to " + std::to_string(kMaxBruteForceEdges) + " edges, got " +
                          std::to_string(m));
  costs.validate(topology);
  barrier.zeta_min = std::min(barrier.zeta_min, 1e-8);
  barrier.validate();

  BruteForceResult best;
  const std::uint32_t count = 1U << m;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t mask = order == EnumerationOrder::ascending ? i : count - 1 - i;
    const auto s = detail::solve_subset(topology, moment, costs, barrier, mask);
    if (!s.feasible) continue;
    ++best.feasible_subsets;
    if (s.value < best.value || (s.value == best.value && mask < best.mask)) {
      best.value = s.value;
      best.mask = mask;
      best.theta = s.theta;
    }
  }
  best.support.assign(m, false);
  for (std::size_t l = 0; l < m; ++l) best.support[l] = (best.mask >> l) & 1U;
  return best;
}

struct OracleReport {
  std::string instance;
  double oracle_value = 0.0;
  std::vector<bool> oracle_support;
  double heuristic_value = 0.0;
  std::vector<bool> heuristic_support;
  double relative_gap = 0.0;
  bool support_match = false;
};

inline OracleReport make_oracle_report(std::string instance, const BruteForceResult& oracle, double heuristic_value,
                                       std::vector<bool> heuristic_support) {
  OracleReport r;
  r.instance = std::move(instance);
  r.oracle_value = oracle.value;
  r.oracle_support = oracle.support;
  r.heuristic_value = heuristic_value;
  r.heuristic_support = std::move(heuristic_support);
  r.relative_gap = (heuristic_value - oracle.value) / std::max(std::abs(oracle.value), 1e-12);
  r.support_match = r.heuristic_support == r.oracle_support;
  return r;
}

/// Central differences with absolute step h; theta must stay above h.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const ConductanceVector&)>& f,
                                                  const ConductanceVector& theta, double h = 1e-4) {
  if (!(h > 0.0)) throw ValidationError("finite difference step must be positive");
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index l = 0; l < theta.size(); ++l) {
    if (!(theta(l) > h)) throw ValidationError("theta[" + std::to_string(l) + "] is within h of the boundary");
    ConductanceVector up = theta, down = theta;
    up(l) += h;
    down(l) -= h;
    g(l) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

/// Loss under the best generation split: b^T K^+ b minimized over generator
/// injections subject to 1^T b = 0, as a quadratic form in the other nodes'
/// injections. Row/column order of `form` follows `others`.
struct DispatchOracle {
  std::vector<int> generators;
  std::vector<int> others;
  Eigen::MatrixXd form;      // S: minimized loss = b_o^T S b_o
  Eigen::MatrixXd dispatch;  // b_g = P b_o
};

inline DispatchOracle dispatch_oracle(const NetworkTopology& topology, const ConductanceVector& theta,
                                      const std::vector<int>& generators) {
  if (generators.empty()) throw ValidationError("dispatch oracle needs at least one generator");
  const auto n = static_cast<Eigen::Index>(topology.node_count());
  const Eigen::MatrixXd q = RegularizedLaplacian(conductance_matrix(topology, theta)).inverse();

  DispatchOracle out;
  out.generators = generators;
  std::vector<bool> is_gen(static_cast<std::size_t>(n), false);
  for (int g : generators) {
    if (g < 0 || g >= n || is_gen[static_cast<std::size_t>(g)]) throw ValidationError("invalid generator set");
    is_gen[static_cast<std::size_t>(g)] = true;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!is_gen[static_cast<std::size_t>(i)]) out.others.push_back(static_cast<int>(i));
  const auto ng = static_cast<Eigen::Index>(generators.size());
  const auto no = static_cast<Eigen::Index>(out.others.size());

  // KKT of min (b_o, b_g)^T Q (b_o, b_g) s.t. 1^T b_g = -1^T b_o.
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(ng + 1, ng + 1);
  Eigen::MatrixXd rhs(ng + 1, no);
  for (Eigen::Index a = 0; a < ng; ++a) {
    for (Eigen::Index b = 0; b < ng; ++b) kkt(a, b) = 2.0 * q(generators[a], generators[b]);
    kkt(a, ng) = kkt(ng, a) = 1.0;
    for (Eigen::Index c = 0; c < no; ++c) rhs(a, c) = -2.0 * q(generators[a], out.others[static_cast<std::size_t>(c)]);
  }
  rhs.row(ng).setConstant(-1.0);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) throw DisconnectedNetwork("dispatch KKT system is singular");
  out.dispatch = lu.solve(rhs).topRows(ng);

  Eigen::MatrixXd t(n, no);
  for (Eigen::Index c = 0; c < no; ++c) t.row(out.others[static_cast<std::size_t>(c)]) = Eigen::RowVectorXd::Unit(no, c);
  for (Eigen::Index a = 0; a < ng; ++a) t.row(generators[a]) = out.dispatch.row(a);
  out.form = t.transpose() * q * t;
  out.form = 0.5 * (out.form + out.form.transpose()).eval();
  return out;
}

/// Minimized loss for deterministic non-generator injections b_c (full node
/// vector; generator entries ignored).
inline double optimal_dispatch_oracle(const NetworkTopology& topology, const ConductanceVector& theta,
                                      const Eigen::VectorXd& b_c, const std::vector<int>& generators) {
  if (b_c.size() != static_cast<Eigen::Index>(topology.node_count())) throw ValidationError("load vector size mismatch");
  const auto oracle = dispatch_oracle(topology, theta, generators);
  Eigen::VectorXd bo(static_cast<Eigen::Index>(oracle.others.size()));
  for (std::size_t c = 0; c < oracle.others.size(); ++c) bo(static_cast<Eigen::Index>(c)) = b_c(oracle.others[c]);
  return bo.dot(oracle.form * bo);
}

/// Expected minimized loss for random loads: Tr(S E[b_c b_c^T]).
inline double optimal_dispatch_oracle(const NetworkTopology& topology, const ConductanceVector& theta,
                                      const LoadModel& load, const std::vector<int>& generators) {
  load.validate(topology);
  const auto oracle = dispatch_oracle(topology, theta, generators);
  const Eigen::MatrixXd second = load.mean * load.mean.transpose() + load.covariance_matrix();
  const auto no = static_cast<Eigen::Index>(oracle.others.size());
  Eigen::MatrixXd sub(no, no);
  for (Eigen::Index a = 0; a < no; ++a)
    for (Eigen::Index b = 0; b < no; ++b)
      sub(a, b) = second(oracle.others[static_cast<std::size_t>(a)], oracle.others[static_cast<std::size_t>(b)]);
  return oracle.form.cwiseProduct(sub).sum();
}

/// Exhaustive check: every set of at most k failable active edges leaves each
/// consumer connected to generation. Exponential; for small graphs only.
inline bool survives_all_failures(const NetworkTopology& topology, const std::vector<bool>& active, int k,
                                  std::vector<bool> failable = {}) {
  const auto m = topology.edge_count();
  if (failable.empty()) failable.assign(m, true);
  std::vector<int> pool;
  for (std::size_t l = 0; l < m; ++l)
    if (active[l] && failable[l]) pool.push_back(static_cast<int>(l));
  if (pool.size() > 24) throw ValidationError("too many failable edges for exhaustive checking");
  std::vector<int> sources;
  if (auto v = topology.virtual_generator()) sources = {*v};
  else sources = topology.generators();
  const std::uint32_t count = 1U << pool.size();
  for (std::uint32_t subset = 0; subset < count; ++subset) {
    if (std::popcount(subset) > k) continue;
    std::vector<bool> alive = active;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if ((subset >> i) & 1U) alive[static_cast<std::size_t>(pool[i])] = false;
    const auto label = component_labels(topology, alive);
    for (int c : topology.consumers()) {
      bool reached = false;
      for (int s : sources) reached = reached || label[static_cast<std::size_t>(c)] == label[static_cast<std::size_t>(s)];
      if (!reached) return false;
    }
  }
  return true;
}

}  // namespace netdesign
