#pragma once

// Structure selection: minimize L(theta) + alpha^T theta + beta^T step(theta).
// The step is smoothed to t / (t + gamma); gamma is annealed from large
// (convex) to small (near-combinatorial), and every gamma stage is solved by
// majorization-minimization, i.e. repeated convex solves with the reweighted
// linear cost alpha + beta * gamma / (gamma + theta)^2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "netdesign/convex_solver.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign {

inline double smoothed_step(double t, double gamma) {
  if (!(t >= 0.0) || !(gamma > 0.0)) throw ValidationError("smoothed_step needs t >= 0 and gamma > 0");
  return t / (t + gamma);
}

/// Linear cost of the MM surrogate: alpha + beta * gamma / (gamma + theta)^2.
inline Eigen::VectorXd mm_reweight(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double gamma,
                                   const ConductanceVector& theta_prev) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  if (alpha.size() != beta.size() || alpha.size() != theta_prev.size())
    throw ValidationError("mm_reweight: size mismatch");
  if ((theta_prev.array() < 0.0).any()) throw ValidationError("mm_reweight: theta must be >= 0");
  return alpha.array() + beta.array() * gamma / (gamma + theta_prev.array()).square();
}

struct AnnealSchedule {
  std::optional<double> gamma_init;  // default: largest real-edge conductance of the convex solution
  double gamma_decay = 0.7;
  std::optional<double> gamma_min;  // default: 1e-4 * gamma_init
  double perturbation = 1e-3;
  std::uint64_t seed = 0;
  double mm_tol = 1e-7;
  int max_mm_iters = 100;
  int max_perturbations_per_stage = 2;
  double prune_ratio = 1e-5;

  void validate() const {
    if (gamma_init && !(*gamma_init > 0.0)) throw ValidationError("anneal: gamma_init must be positive");
    if (gamma_min && !(*gamma_min > 0.0)) throw ValidationError("anneal: gamma_min must be positive");
    if (gamma_init && gamma_min && *gamma_min > *gamma_init) throw ValidationError("anneal: gamma_min > gamma_init");
    if (!(gamma_decay > 0.0 && gamma_decay < 1.0)) throw ValidationError("anneal: gamma_decay must lie in (0,1)");
    if (!(perturbation >= 0.0)) throw ValidationError("anneal: perturbation must be >= 0");
    if (!(mm_tol > 0.0) || max_mm_iters < 1) throw ValidationError("anneal: invalid MM stopping rule");
    if (max_perturbations_per_stage < 0) throw ValidationError("anneal: negative perturbation budget");
    if (!(prune_ratio > 0.0 && prune_ratio < 1.0)) throw ValidationError("anneal: prune_ratio must lie in (0,1)");
  }
};

/// One MM iterate. `objective` is the function MM descends on:
/// L + alpha^T theta + beta^T step_gamma(theta) - zeta * sum(log theta).
struct MMRecord {
  int stage = 0;  // 0 is the convex (gamma = infinity) solve
  double gamma = std::numeric_limits<double>::infinity();
  double objective = 0.0;
  double smoothed = 0.0;  // same without the barrier term
  double loss = 0.0;
  double worst_case = std::numeric_limits<double>::quiet_NaN();  // robust runs only
  int newton_iterations = 0;
  bool perturbed = false;  // theta was randomly perturbed before this record
  bool converged = true;
};

struct TrueObjective {
  double loss = 0.0;
  double linear_cost = 0.0;
  double step_cost = 0.0;
  double total = 0.0;
  bool feasible = false;
};

struct SparseDesignResult {
  ConductanceVector theta;           // final MM iterate
  ConductanceVector polished_theta;  // convex re-solve with the original alpha on the active support (0 off it)
  std::vector<bool> active;
  std::vector<int> active_edges;
  std::vector<MMRecord> trace;
  std::vector<double> gamma_trace;
  ConvexSolveResult initial;
  TrueObjective true_objective;
  int perturbations = 0;
  bool converged = true;
};

/// Smoothed objective pieces at theta.
template <LossModel Loss>
MMRecord smoothed_objective(const Loss& loss, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                            double gamma, double zeta, const ConductanceVector& theta) {
  MMRecord r;
  r.gamma = gamma;
  r.loss = loss.value(theta);
  double step = 0.0;
  if (std::isfinite(gamma))
    for (Eigen::Index l = 0; l < theta.size(); ++l) step += beta(l) * smoothed_step(theta(l), gamma);
  r.smoothed = r.loss + alpha.dot(theta) + step;
  r.objective = r.smoothed - zeta * log_barrier(theta);
  return r;
}

namespace detail {

// True when the barrier-smoothed objective has negative curvature at theta,
// i.e. an MM fixed point that is not a local minimum.
template <LossModel Loss>
bool has_negative_curvature(const Loss& loss, const Eigen::VectorXd& beta, double gamma, double zeta,
                            const ConductanceVector& theta) {
  Eigen::MatrixXd h = loss.derivatives(theta, DerivativeOrder::hessian).hessian;
  const Eigen::ArrayXd t = theta.array();
  h.diagonal().array() += zeta / t.square() - 2.0 * beta.array() * gamma / (t + gamma).cube();
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  return llt.info() != Eigen::Success;
}

inline double max_over(const ConductanceVector& theta, const std::vector<bool>& mask) {
  double out = 0.0;
  for (Eigen::Index l = 0; l < theta.size(); ++l)
    if (mask[static_cast<std::size_t>(l)]) out = std::max(out, theta(l));
  return out;
}

}  // namespace detail

using RecordAnnotator = std::function<void(const ConductanceVector&, MMRecord&)>;

/// MM at a fixed gamma, warm-started from theta_start; appends one record per
/// iterate to `trace` (the first record is the starting point).
template <LossModel Loss>
ConductanceVector mm_stage(const Loss& loss, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double gamma,
                           const ConductanceVector& theta_start, const BarrierSettings& barrier,
                           const AnnealSchedule& schedule, std::mt19937_64& rng, std::vector<MMRecord>& trace,
                           int stage = 1, const RecordAnnotator& annotate = {}) {
  if ((theta_start.array() <= 0.0).any()) throw ValidationError("mm_stage: theta_start must be > 0");
  const double zeta = barrier.zeta_min;
  const BarrierSettings fixed = barrier.fixed_at_min();
  ConductanceVector theta = theta_start;

  auto record = [&](const ConductanceVector& t, int newton, bool perturbed, bool converged) {
    MMRecord r = smoothed_objective(loss, alpha, beta, gamma, zeta, t);
    r.stage = stage;
    r.newton_iterations = newton;
    r.perturbed = perturbed;
    r.converged = converged;
    if (annotate) annotate(t, r);
    trace.push_back(r);
    return r.objective;
  };

  double previous = record(theta, 0, false, true);
  int perturbations = 0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int iter = 0; iter < schedule.max_mm_iters; ++iter) {
    const Eigen::VectorXd reweighted = mm_reweight(alpha, beta, gamma, theta);
    const auto solve = minimize_with_barrier(loss, reweighted, fixed, theta);
    theta = solve.theta;
    const double current = record(theta, solve.iterations, false, solve.converged);
    const double change = std::abs(previous - current) / std::max(1.0, std::abs(previous));
    previous = current;
    if (change > schedule.mm_tol) continue;

    if (perturbations >= schedule.max_perturbations_per_stage || schedule.perturbation == 0.0 ||
        beta.isZero() || !detail::has_negative_curvature(loss, beta, gamma, zeta, theta))
      break;
    // Saddle: leave it along a small random multiplicative perturbation.
    for (Eigen::Index l = 0; l < theta.size(); ++l) theta(l) *= 1.0 + schedule.perturbation * unit(rng);
    ++perturbations;
    previous = record(theta, 0, true, true);
  }
  return theta;
}

/// Convex re-solve with the original alpha on the active support, scoring the
/// exact step cost. Edges off the support get conductance 0.
template <LossModel Loss>
TrueObjective polish_on_support(const Loss& loss, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                const std::vector<bool>& active, const ConductanceVector& start,
                                const BarrierSettings& barrier, ConductanceVector& polished) {
  TrueObjective out;
  polished = ConductanceVector::Zero(start.size());
  std::vector<int> edge_map;
  const auto sub = loss.restricted(active, edge_map);
  for (Eigen::Index l = 0; l < beta.size(); ++l)
    if (active[static_cast<std::size_t>(l)]) out.step_cost += beta(l);
  if (!sub) {
    out.loss = out.total = std::numeric_limits<double>::infinity();
    return out;
  }
  const auto ms = static_cast<Eigen::Index>(edge_map.size());
  Eigen::VectorXd sub_alpha(ms);
  ConductanceVector sub_start(ms);
  for (Eigen::Index l = 0; l < ms; ++l) {
    sub_alpha(l) = alpha(edge_map[static_cast<std::size_t>(l)]);
    sub_start(l) = start(edge_map[static_cast<std::size_t>(l)]);
  }
  const auto solve = minimize_with_barrier(*sub, sub_alpha, barrier.fixed_at_min(), sub_start);
  for (Eigen::Index l = 0; l < ms; ++l) polished(edge_map[static_cast<std::size_t>(l)]) = solve.theta(l);
  out.loss = solve.loss;
  out.linear_cost = solve.cost;
  out.total = out.loss + out.linear_cost + out.step_cost;
  out.feasible = true;
  return out;
}

/// Full pipeline: convex solve, then MM stages for gamma = gamma_init,
/// gamma_init * decay, ... >= gamma_min, each warm-started from the last.
template <LossModel Loss>
SparseDesignResult design_sparse_with(const Loss& loss, const CostModel& costs, const AnnealSchedule& schedule,
                                      const BarrierSettings& barrier, const RecordAnnotator& annotate = {}) {
  schedule.validate();
  barrier.validate();
  const NetworkTopology& topology = loss.topology();
  costs.validate(topology);
  const Eigen::VectorXd alpha = costs.effective_alpha();
  const Eigen::VectorXd& beta = costs.beta;
  const auto real = topology.real_edge_mask();

  SparseDesignResult result;
  result.initial = minimize_with_barrier(loss, alpha, barrier);
  result.converged = result.initial.converged;
  ConductanceVector theta = result.initial.theta;
  {
    MMRecord r = smoothed_objective(loss, alpha, beta, std::numeric_limits<double>::infinity(), barrier.zeta_min, theta);
    r.stage = 0;
    r.newton_iterations = result.initial.iterations;
    r.converged = result.initial.converged;
    if (annotate) annotate(theta, r);
    result.trace.push_back(r);
  }

  const double theta_scale = detail::max_over(theta, real);
  const double gamma_init = schedule.gamma_init.value_or(theta_scale > 0.0 ? theta_scale : 1.0);
  const double gamma_min = schedule.gamma_min.value_or(1e-4 * gamma_init);
  if (gamma_min > gamma_init) throw ValidationError("anneal: gamma_min exceeds gamma_init");

  std::mt19937_64 rng(schedule.seed);
  int stage = 1;
  for (double gamma = gamma_init; gamma >= gamma_min * (1.0 - 1e-12); gamma *= schedule.gamma_decay, ++stage) {
    result.gamma_trace.push_back(gamma);
    theta = mm_stage(loss, alpha, beta, gamma, theta, barrier, schedule, rng, result.trace, stage, annotate);
  }
  for (const auto& r : result.trace) {
    result.perturbations += r.perturbed ? 1 : 0;
    result.converged = result.converged && r.converged;
  }

  result.theta = theta;
  const double threshold = schedule.prune_ratio * detail::max_over(theta, real);
  result.active.assign(static_cast<std::size_t>(theta.size()), false);
  for (Eigen::Index l = 0; l < theta.size(); ++l)
    if (theta(l) >= threshold) {
      result.active[static_cast<std::size_t>(l)] = true;
      result.active_edges.push_back(static_cast<int>(l));
    }
  result.true_objective = polish_on_support(loss, alpha, beta, result.active, theta, barrier, result.polished_theta);
  return result;
}

inline SparseDesignResult design_sparse(const NetworkTopology& topology, const CurrentMoment& moment,
                                        const CostModel& costs, const AnnealSchedule& schedule = {},
                                        const BarrierSettings& barrier = {}) {
  return design_sparse_with(ExpectedLoss(topology, moment), costs, schedule, barrier);
}

/// Exact objective L + alpha^T theta + beta^T step(theta), evaluating the loss
/// on the support of theta. Infinite when loaded nodes are cut off.
inline TrueObjective true_objective(const NetworkTopology& topology, const CurrentMoment& moment,
                                    const CostModel& costs, const ConductanceVector& theta) {
  TrueObjective out;
  const Eigen::VectorXd alpha = costs.effective_alpha();
  out.linear_cost = alpha.dot(theta);
  for (Eigen::Index l = 0; l < theta.size(); ++l)
    if (theta(l) > 0.0) out.step_cost += costs.beta(l);
  const auto d = evaluate_loss_on_support(topology, theta, moment, DerivativeOrder::value);
  if (!d) {
    out.loss = out.total = std::numeric_limits<double>::infinity();
    return out;
  }
  out.loss = d->value;
  out.total = out.loss + out.linear_cost + out.step_cost;
  out.feasible = true;
  return out;
}

}  // namespace netdesign
