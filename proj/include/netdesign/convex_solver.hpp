#pragma once

// Minimizes L(theta) + alpha^T theta over theta >= 0 with a log-barrier
// continuation: each stage runs damped Newton on
//   L(theta) + alpha^T theta - zeta * sum(log theta)
// and zeta shrinks geometrically down to zeta_min.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign {

/// Anything the barrier solver can minimize: a smooth convex loss over the
/// edge conductances. `value` may throw DisconnectedNetwork, which the line
/// search treats as +infinity.
template <class F>
concept LossModel = requires(const F& f, const ConductanceVector& theta, DerivativeOrder order) {
  { f.edge_count() } -> std::convertible_to<std::size_t>;
  { f.value(theta) } -> std::convertible_to<double>;
  { f.derivatives(theta, order) } -> std::same_as<LossDerivatives>;
};

struct BarrierSettings {
  double zeta_init = 1.0;
  double zeta_min = 1e-6;
  double zeta_decay = 0.2;
  double newton_tol = 1e-9;  // on decrement^2 / 2
  int max_newton_iters = 50;
  double armijo = 0.25;
  double shrink = 0.5;
  double restart_factor = 1e3;
  int max_restarts = 4;

  void validate() const {
    if (!(zeta_min > 0.0) || !(zeta_init >= zeta_min)) throw ValidationError("barrier: need 0 < zeta_min <= zeta_init");
    if (!(zeta_decay > 0.0 && zeta_decay < 1.0)) throw ValidationError("barrier: zeta_decay must lie in (0,1)");
    if (!(newton_tol > 0.0)) throw ValidationError("barrier: newton_tol must be positive");
    if (max_newton_iters < 1) throw ValidationError("barrier: max_newton_iters must be >= 1");
    if (!(armijo > 0.0 && armijo < 0.5)) throw ValidationError("barrier: armijo constant must lie in (0,0.5)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ValidationError("barrier: shrink factor must lie in (0,1)");
    if (!(restart_factor > 1.0) || max_restarts < 0) throw ValidationError("barrier: invalid restart policy");
  }

  /// Same settings pinned at zeta_min, for warm-started re-solves.
  BarrierSettings fixed_at_min() const {
    BarrierSettings s = *this;
    s.zeta_init = zeta_min;
    return s;
  }
};

struct BarrierStage {
  double zeta = 0.0;
  double objective = 0.0;          // L + alpha^T theta at the stage solution
  double barrier_objective = 0.0;  // including -zeta * sum(log theta)
  int newton_iterations = 0;
  bool converged = false;
};

struct ConvexSolveResult {
  ConductanceVector theta;
  double objective = 0.0;
  double barrier_objective = 0.0;
  double loss = 0.0;
  double cost = 0.0;
  int iterations = 0;
  int restarts = 0;
  double final_zeta = 0.0;
  bool converged = false;
  std::vector<BarrierStage> stages;
};

inline double log_barrier(const ConductanceVector& theta) { return theta.array().log().sum(); }

namespace detail {

// Solves (H) dx = rhs for symmetric H, adding Levenberg damping when the
// Cholesky factorization fails.
inline Eigen::VectorXd solve_newton_system(Eigen::MatrixXd h, const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  const auto m = h.rows();
  double damping = 1e-8 * std::max(h.trace(), 1e-300) / static_cast<double>(std::max<Eigen::Index>(m, 1));
  for (int attempt = 0; attempt < 12; ++attempt, damping *= 10.0) {
    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += damping;
    llt.compute(damped);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  return ldlt.solve(rhs);
}

// Relative decrement^2 accepted when the line search can no longer make
// representable progress.
inline constexpr double kStallDecrement = 1e-8;

struct NewtonOutcome {
  int iterations = 0;
  bool converged = false;
};

template <LossModel Loss>
double barrier_value(const Loss& loss, const ConductanceVector& theta, const Eigen::VectorXd& alpha, double zeta) {
  if ((theta.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
  try {
    return loss.value(theta) + alpha.dot(theta) - zeta * log_barrier(theta);
  } catch (const DisconnectedNetwork&) {
    return std::numeric_limits<double>::infinity();
  }
}

// Damped Newton at fixed zeta, starting from a strictly positive theta whose
// barrier value is finite. Accepted steps never increase the barrier value.
template <LossModel Loss>
NewtonOutcome newton_stage(const Loss& loss, const Eigen::VectorXd& alpha, double zeta,
                           const BarrierSettings& settings, ConductanceVector& theta) {
  NewtonOutcome out;
  double f0 = barrier_value(loss, theta, alpha, zeta);
  if (!std::isfinite(f0)) return out;
  for (int iter = 0; iter < settings.max_newton_iters; ++iter) {
    LossDerivatives d;
    try {
      d = loss.derivatives(theta, DerivativeOrder::hessian);
    } catch (const DisconnectedNetwork&) {
      return out;
    }
    const Eigen::ArrayXd inv = theta.array().inverse();
    const Eigen::VectorXd grad = d.gradient + alpha - (zeta * inv).matrix();
    Eigen::MatrixXd h = std::move(d.hessian);
    h.diagonal().array() += zeta * inv.square();
    const Eigen::VectorXd step = solve_newton_system(std::move(h), -grad);
    const double decrement2 = -grad.dot(step);
    if (!std::isfinite(decrement2)) return out;
    if (decrement2 / 2.0 <= settings.newton_tol) {
      out.converged = true;
      return out;
    }
    if (decrement2 < 0.0) return out;

    double t = 1.0;
    for (Eigen::Index l = 0; l < step.size(); ++l)
      if (step(l) < 0.0) t = std::min(t, -0.99 * theta(l) / step(l));

    bool progressed = false;
    while (t > 1e-20) {
      const ConductanceVector trial = theta + t * step;
      const double f1 = barrier_value(loss, trial, alpha, zeta);
      if (f1 <= f0 - settings.armijo * t * decrement2) {
        theta = trial;
        progressed = f0 - f1 > 1e-15 * std::max(1.0, std::abs(f0));
        f0 = f1;
        break;
      }
      t *= settings.shrink;
    }
    ++out.iterations;
    if (!progressed) {
      // The decrease is lost in the rounding of the loss (ill-conditioned K):
      // accept if the decrement is small relative to the objective.
      out.converged = decrement2 <= kStallDecrement * std::max(1.0, std::abs(f0));
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Default interior start: uniform conductance with alpha^T theta = 1.
inline ConductanceVector default_initial_conductance(const Eigen::VectorXd& alpha) {
  const double total = alpha.sum();
  const double level = total > 0.0 ? 1.0 / total : 1.0;
  return ConductanceVector::Constant(alpha.size(), level);
}

/// Barrier continuation from settings.zeta_init down to settings.zeta_min.
/// On Newton failure the stage restarts from restart_factor * zeta.
template <LossModel Loss>
ConvexSolveResult minimize_with_barrier(const Loss& loss, const Eigen::VectorXd& alpha,
                                        const BarrierSettings& settings,
                                        const std::optional<ConductanceVector>& theta_init = std::nullopt) {
  settings.validate();
  const auto m = static_cast<Eigen::Index>(loss.edge_count());
  if (alpha.size() != m) throw ValidationError("alpha has the wrong length");
  if ((alpha.array() < 0.0).any()) throw ValidationError("alpha must be >= 0");

  ConductanceVector theta = theta_init ? *theta_init : default_initial_conductance(alpha);
  if (theta.size() != m || (theta.array() <= 0.0).any())
    throw ValidationError("initial conductances must be strictly positive");

  ConvexSolveResult result;
  ConductanceVector best = theta;
  double zeta = settings.zeta_init;
  bool last_converged = false;

  if (m == 0) {
    result.theta = theta;
    result.loss = loss.value(theta);
    result.objective = result.barrier_objective = result.loss;
    result.final_zeta = settings.zeta_min;
    result.converged = true;
    return result;
  }

  while (true) {
    ConductanceVector trial = theta;
    const auto outcome = detail::newton_stage(loss, alpha, zeta, settings, trial);
    result.iterations += outcome.iterations;

    if (!outcome.converged && result.restarts < settings.max_restarts) {
      ++result.restarts;
      // Keep the progress made so far if it is a valid interior point.
      if (std::isfinite(detail::barrier_value(loss, trial, alpha, zeta))) theta = trial;
      zeta *= settings.restart_factor;
      continue;
    }

    theta = trial;
    best = theta;
    last_converged = outcome.converged;
    BarrierStage stage;
    stage.zeta = zeta;
    stage.newton_iterations = outcome.iterations;
    stage.converged = outcome.converged;
    const double l = loss.value(theta);
    stage.objective = l + alpha.dot(theta);
    stage.barrier_objective = stage.objective - zeta * log_barrier(theta);
    result.stages.push_back(stage);

    if (zeta <= settings.zeta_min * (1.0 + 1e-12) || !outcome.converged) break;
    zeta = std::max(zeta * settings.zeta_decay, settings.zeta_min);
  }

  result.theta = best;
  result.loss = loss.value(best);
  result.cost = alpha.dot(best);
  result.objective = result.loss + result.cost;
  result.final_zeta = zeta;
  result.barrier_objective = result.objective - zeta * log_barrier(best);
  result.converged = last_converged;
  return result;
}

/// Convex design on a fixed network: minimize expected loss plus alpha^T theta.
inline ConvexSolveResult solve_convex(const NetworkTopology& topology, const CurrentMoment& moment,
                                      const Eigen::VectorXd& alpha, const BarrierSettings& settings = {},
                                      const std::optional<ConductanceVector>& theta_init = std::nullopt) {
  return minimize_with_barrier(ExpectedLoss(topology, moment), alpha, settings, theta_init);
}

}  // namespace netdesign
