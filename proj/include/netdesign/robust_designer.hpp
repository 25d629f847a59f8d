#pragma once

// Robustness to k edge failures. The worst case over failure scenarios is
// smoothed by a log-sum-exp at temperature tau:
//   L_tau(theta) = tau log sum_z exp(L((1 - z) o theta) / tau).
// Each scenario is a low-rank downdate of M = K + 1 1^T, so scenario losses
// and derivatives come from one factorization via Woodbury. With
// C = (D^{-1} - G_SS)^{-1}, Q = G[:, S], R = H[:, S]:
//   L_z = L + Tr(C H_SS)
//   G_z = G + Q C Q^T
//   H_z = H + Q C R^T + R C Q^T + Q (C H_SS C) Q^T
// where G = A^T M^{-1} A and H = X^T B X.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "netdesign/connectivity.hpp"
#include "netdesign/convex_solver.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"
#include "netdesign/sparse_designer.hpp"

namespace netdesign {

/// Loss assigned to scenarios that cut a loaded node off.
inline constexpr double kDisconnectedLoss = 1e12;

enum class FailableEdges { lines, virtual_lines, all };

inline std::string to_string(FailableEdges f) {
  switch (f) {
    case FailableEdges::lines: return "lines";
    case FailableEdges::virtual_lines: return "virtual_lines";
    case FailableEdges::all: return "all";
  }
  return "?";
}

struct RobustSettings {
  int k = 1;
  double tau = 0.01;
  FailableEdges failable = FailableEdges::lines;

  void validate() const {
    if (k < 0 || k > 2) throw ValidationError("robust: k must be 0, 1 or 2");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("robust: tau must be positive");
  }
};

inline std::vector<bool> failable_mask(const NetworkTopology& topology, FailableEdges which) {
  std::vector<bool> mask(topology.edge_count());
  for (const auto& e : topology.edges()) {
    const bool is_virtual = e.kind == EdgeKind::virtual_line;
    mask[static_cast<std::size_t>(e.id)] =
        which == FailableEdges::all || (which == FailableEdges::virtual_lines) == is_virtual;
  }
  return mask;
}

struct FailureScenario {
  std::vector<int> failed;  // ascending edge ids

  std::vector<bool> indicator(std::size_t m) const {
    std::vector<bool> z(m, false);
    for (int l : failed) z[static_cast<std::size_t>(l)] = true;
    return z;
  }
};

/// All k-subsets of the failable edges, in lexicographic order of edge ids.
inline std::vector<FailureScenario> enumerate_scenarios(const std::vector<bool>& failable, int k) {
  if (k < 0) throw ValidationError("k must be >= 0");
  std::vector<int> pool;
  for (std::size_t l = 0; l < failable.size(); ++l)
    if (failable[l]) pool.push_back(static_cast<int>(l));
  if (static_cast<std::size_t>(k) > pool.size())
    throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(pool.size()) +
                          " failable edges");
  std::vector<FailureScenario> out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  while (true) {
    FailureScenario s;
    for (auto i : idx) s.failed.push_back(pool[i]);
    out.push_back(std::move(s));
    // Advance to the next combination.
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == pool.size() - static_cast<std::size_t>(k - pos)) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (auto i = static_cast<std::size_t>(pos) + 1; i < idx.size(); ++i) idx[i] = idx[i - 1] + 1;
  }
  return out;
}

/// Loss with the failed edges removed; kDisconnectedLoss (zero derivatives)
/// when that separates loaded nodes.
inline LossDerivatives scenario_derivatives(const NetworkTopology& topology, const ConductanceVector& theta,
                                            const CurrentMoment& moment, const FailureScenario& scenario,
                                            DerivativeOrder order) {
  ConductanceVector reduced = theta;
  for (int l : scenario.failed) reduced(l) = 0.0;
  std::optional<LossDerivatives> d;
  try {
    d = evaluate_loss_on_support(topology, reduced, moment, order);
  } catch (const DisconnectedNetwork&) {
    d.reset();
  }
  const auto m = theta.size();
  if (!d) {
    LossDerivatives out;
    out.value = kDisconnectedLoss;
    if (order != DerivativeOrder::value) out.gradient = Eigen::VectorXd::Zero(m);
    if (order == DerivativeOrder::hessian) out.hessian = Eigen::MatrixXd::Zero(m, m);
    return out;
  }
  return *d;
}

inline double scenario_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                            const CurrentMoment& moment, const FailureScenario& scenario) {
  return scenario_derivatives(topology, theta, moment, scenario, DerivativeOrder::value).value;
}

struct WorstCase {
  double loss = 0.0;
  FailureScenario scenario;
};

struct SoftmaxEvaluation {
  double value = 0.0;
  double worst_case = 0.0;
  std::size_t worst_index = 0;  // first maximizer in enumeration order
  std::vector<double> scenario_losses;
  std::vector<double> weights;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Soft-max of scenario losses as a LossModel.
class SoftmaxLoss {
 public:
  /// Below this normalized eigenvalue of I - D^{1/2} G_SS D^{1/2} the scenario
  /// is (nearly) a cut and is evaluated directly instead of by Woodbury.
  static constexpr double kWoodburyFloor = 1e-6;
  /// Scenarios with smaller weight are left out of the Hessian sum.
  static constexpr double kHessianWeightFloor = 1e-15;

  SoftmaxLoss(NetworkTopology topology, CurrentMoment moment, int k, double tau, std::vector<bool> failable)
      : topology_(std::move(topology)), moment_(std::move(moment)), k_(k), tau_(tau), failable_(std::move(failable)) {
    detail::check_moment(topology_, moment_);
    RobustSettings{k_, tau_, FailableEdges::all}.validate();
    if (failable_.size() != topology_.edge_count()) throw ValidationError("failable mask size mismatch");
    scenarios_ = enumerate_scenarios(failable_, k_);
  }

  SoftmaxLoss(NetworkTopology topology, CurrentMoment moment, const RobustSettings& settings)
      : SoftmaxLoss(topology, std::move(moment), settings.k, settings.tau, failable_mask(topology, settings.failable)) {}

  const NetworkTopology& topology() const { return topology_; }
  const CurrentMoment& moment() const { return moment_; }
  std::size_t edge_count() const { return topology_.edge_count(); }
  int k() const { return k_; }
  double tau() const { return tau_; }
  const std::vector<bool>& failable() const { return failable_; }
  const std::vector<FailureScenario>& scenarios() const { return scenarios_; }

  double value(const ConductanceVector& theta) const { return evaluate(theta, DerivativeOrder::value).value; }

  LossDerivatives derivatives(const ConductanceVector& theta, DerivativeOrder order = DerivativeOrder::hessian) const {
    auto e = evaluate(theta, order);
    return {e.value, std::move(e.gradient), std::move(e.hessian)};
  }

  std::optional<SoftmaxLoss> restricted(const std::vector<bool>& mask, std::vector<int>& edge_map) const {
    auto sub = restrict_problem(topology_, moment_, mask);
    if (!sub) return std::nullopt;
    std::vector<bool> sub_failable;
    for (int l : sub->edge_map) sub_failable.push_back(failable_[static_cast<std::size_t>(l)]);
    const auto count = static_cast<int>(std::count(sub_failable.begin(), sub_failable.end(), true));
    edge_map = sub->edge_map;
    return SoftmaxLoss(std::move(sub->topology), std::move(sub->moment), std::min(k_, count), tau_,
                       std::move(sub_failable));
  }

  SoftmaxEvaluation evaluate(const ConductanceVector& theta, DerivativeOrder order) const {
    check_conductances(topology_, theta);
    const auto m = theta.size();
    if (k_ == 0) {
      // Single scenario: exactly the expected loss.
      auto d = evaluate_loss(topology_, theta, moment_, order);
      SoftmaxEvaluation out;
      out.value = out.worst_case = d.value;
      out.scenario_losses = {d.value};
      out.weights = {1.0};
      out.gradient = std::move(d.gradient);
      out.hessian = std::move(d.hessian);
      return out;
    }

    std::vector<LossDerivatives> per(scenarios_.size());
    const bool want_grad = order != DerivativeOrder::value;
    const bool want_hess = order == DerivativeOrder::hessian;

    std::optional<Base> base;
    if ((theta.array() > 0.0).all()) {
      try {
        base = make_base(theta);
      } catch (const DisconnectedNetwork&) {
        base.reset();
      }
    }
    // Scenario Hessians are formed lazily (below) so small weights can skip them.
    const DerivativeOrder first_pass = want_grad ? DerivativeOrder::gradient : DerivativeOrder::value;
    std::vector<bool> woodbury(scenarios_.size(), false);
    for (std::size_t s = 0; s < scenarios_.size(); ++s) {
      if (base && woodbury_scenario(*base, theta, scenarios_[s], first_pass, per[s])) {
        woodbury[s] = true;
        continue;
      }
      per[s] = scenario_derivatives(topology_, theta, moment_, scenarios_[s], first_pass);
    }

    SoftmaxEvaluation out;
    out.scenario_losses.resize(scenarios_.size());
    for (std::size_t s = 0; s < scenarios_.size(); ++s) {
      out.scenario_losses[s] = per[s].value;
      if (s == 0 || per[s].value > out.worst_case) {
        out.worst_case = per[s].value;
        out.worst_index = s;
      }
    }
    double total = 0.0;
    out.weights.resize(scenarios_.size());
    for (std::size_t s = 0; s < scenarios_.size(); ++s) {
      out.weights[s] = std::exp((per[s].value - out.worst_case) / tau_);
      total += out.weights[s];
    }
    for (double& w : out.weights) w /= total;
    out.value = out.worst_case + tau_ * std::log(total);
    if (!want_grad) return out;

    out.gradient = Eigen::VectorXd::Zero(m);
    for (std::size_t s = 0; s < scenarios_.size(); ++s) out.gradient += out.weights[s] * per[s].gradient;
    if (!want_hess) return out;

    out.hessian = Eigen::MatrixXd::Zero(m, m);
    // Spread of scenario gradients, as one product of sqrt(w / tau)-scaled deviations.
    Eigen::MatrixXd spread(m, static_cast<Eigen::Index>(scenarios_.size()));
    Eigen::Index used = 0;
    for (std::size_t s = 0; s < scenarios_.size(); ++s) {
      const double w = out.weights[s];
      if (w < kHessianWeightFloor) continue;
      if (woodbury[s]) {
        add_woodbury_hessian(*base, theta, scenarios_[s], w, out.hessian);
      } else {
        out.hessian += w * scenario_derivatives(topology_, theta, moment_, scenarios_[s], DerivativeOrder::hessian).hessian;
      }
      spread.col(used++) = std::sqrt(w / tau_) * (per[s].gradient - out.gradient);
    }
    out.hessian.noalias() += spread.leftCols(used) * spread.leftCols(used).transpose();
    out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
    return out;
  }

 private:
  struct Base {
    double loss = 0.0;
    Eigen::MatrixXd g;  // A^T M^{-1} A
    Eigen::MatrixXd h;  // X^T B X
  };

  Base make_base(const ConductanceVector& theta) const {
    const RegularizedLaplacian factor(conductance_matrix(topology_, theta));
    const Eigen::MatrixXd m_inv = factor.inverse();
    const Eigen::MatrixXd x = detail::inverse_times_incidence(topology_, m_inv);
    Base b;
    b.loss = m_inv.cwiseProduct(moment_.matrix()).sum();
    b.g = detail::incidence_transpose_times(topology_, x);
    b.h = x.transpose() * (moment_.matrix() * x);
    return b;
  }

  struct Update {
    Eigen::MatrixXd hss;
    Eigen::MatrixXd c;    // (D^{-1} - G_SS)^{-1}
    Eigen::MatrixXd chc;  // C H_SS C
    Eigen::MatrixXd q, r;
  };

  // False when the downdate is too close to a cut for Woodbury.
  static bool make_update(const Base& base, const ConductanceVector& theta, const FailureScenario& scenario, Update& u) {
    const auto s = static_cast<Eigen::Index>(scenario.failed.size());
    Eigen::VectorXd root(s);
    Eigen::MatrixXd gss(s, s);
    u.hss.resize(s, s);
    for (Eigen::Index a = 0; a < s; ++a) {
      const int la = scenario.failed[static_cast<std::size_t>(a)];
      root(a) = std::sqrt(theta(la));
      for (Eigen::Index b = 0; b < s; ++b) {
        const int lb = scenario.failed[static_cast<std::size_t>(b)];
        gss(a, b) = base.g(la, lb);
        u.hss(a, b) = base.h(la, lb);
      }
    }
    const Eigen::MatrixXd normalized =
        Eigen::MatrixXd::Identity(s, s) - root.asDiagonal() * gss * root.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized);
    if (!(eig.eigenvalues().minCoeff() >= kWoodburyFloor)) return false;
    const Eigen::MatrixXd n_inv =
        eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    u.c = root.asDiagonal() * n_inv * root.asDiagonal();
    u.c = 0.5 * (u.c + u.c.transpose()).eval();
    u.chc = u.c * u.hss * u.c;
    u.chc = 0.5 * (u.chc + u.chc.transpose()).eval();
    u.q.resize(base.g.rows(), s);
    u.r.resize(base.h.rows(), s);
    for (Eigen::Index a = 0; a < s; ++a) {
      u.q.col(a) = base.g.col(scenario.failed[static_cast<std::size_t>(a)]);
      u.r.col(a) = base.h.col(scenario.failed[static_cast<std::size_t>(a)]);
    }
    return true;
  }

  bool woodbury_scenario(const Base& base, const ConductanceVector& theta, const FailureScenario& scenario,
                         DerivativeOrder order, LossDerivatives& out) const {
    Update u;
    if (!make_update(base, theta, scenario, u)) return false;
    out.value = base.loss + (u.c * u.hss).trace();
    if (order == DerivativeOrder::value) return true;
    // diag(H_z) = diag(H) + 2 diag(Q C R^T) + diag(Q C H_SS C Q^T).
    const Eigen::MatrixXd qc = u.q * u.c;
    out.gradient = -(base.h.diagonal().array() + 2.0 * (qc.cwiseProduct(u.r)).rowwise().sum().array() +
                     ((u.q * u.chc).cwiseProduct(u.q)).rowwise().sum().array())
                        .matrix();
    for (int l : scenario.failed) out.gradient(l) = 0.0;
    return true;
  }

  // acc += weight * 2 G_z o H_z with the failed rows and columns left out,
  // without forming G_z or H_z.
  void add_woodbury_hessian(const Base& base, const ConductanceVector& theta, const FailureScenario& scenario,
                            double weight, Eigen::MatrixXd& acc) const {
    Update u;
    make_update(base, theta, scenario, u);
    const Eigen::MatrixXd qc = u.q * u.c;
    const Eigen::MatrixXd qchc = u.q * u.chc;
    const Eigen::Index m = acc.rows();
    const Eigen::Index s = u.c.rows();
    std::vector<bool> failed(static_cast<std::size_t>(m), false);
    for (int l : scenario.failed) failed[static_cast<std::size_t>(l)] = true;
    const double scale = 2.0 * weight;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (failed[static_cast<std::size_t>(j)]) continue;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (failed[static_cast<std::size_t>(i)]) continue;
        double gz = base.g(i, j), hz = base.h(i, j);
        for (Eigen::Index a = 0; a < s; ++a) {
          gz += qc(i, a) * u.q(j, a);
          hz += qc(i, a) * u.r(j, a) + u.r(i, a) * qc(j, a) + qchc(i, a) * u.q(j, a);
        }
        acc(i, j) += scale * gz * hz;
      }
    }
  }

  NetworkTopology topology_;
  CurrentMoment moment_;
  int k_;
  double tau_;
  std::vector<bool> failable_;
  std::vector<FailureScenario> scenarios_;
};

inline WorstCase worst_case_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                                 const CurrentMoment& moment, int k,
                                 FailableEdges failable = FailableEdges::all) {
  const auto scenarios = enumerate_scenarios(failable_mask(topology, failable), k);
  WorstCase out;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const double v = scenario_loss(topology, theta, moment, scenarios[s]);
    if (s == 0 || v > out.loss) {
      out.loss = v;
      out.scenario = scenarios[s];
    }
  }
  return out;
}

inline double softmax_loss(const NetworkTopology& topology, const ConductanceVector& theta,
                           const CurrentMoment& moment, int k, double tau,
                           FailableEdges failable = FailableEdges::all) {
  return SoftmaxLoss(topology, moment, k, tau, failable_mask(topology, failable)).value(theta);
}

/// The sparse pipeline with the expected loss replaced by the soft-max robust
/// loss. Records carry the worst case so the soft-max gap can be audited.
inline SparseDesignResult design_robust(const NetworkTopology& topology, const CurrentMoment& moment,
                                        const CostModel& costs, const RobustSettings& robust,
                                        const AnnealSchedule& schedule = {}, const BarrierSettings& barrier = {}) {
  robust.validate();
  const auto failable = failable_mask(topology, robust.failable);
  const auto cert = connectivity_certify(topology, {}, robust.k, failable);
  if (!cert.certified)
    throw InfeasibleRobustness("consumer " + std::to_string(*cert.violating_consumer) + " has fewer than " +
                               std::to_string(robust.k + 1) + " edge-disjoint paths to generation");
  const SoftmaxLoss loss(topology, moment, robust.k, robust.tau, failable);
  if (robust.k == 0) return design_sparse_with(loss, costs, schedule, barrier);
  return design_sparse_with(loss, costs, schedule, barrier, [&loss](const ConductanceVector& theta, MMRecord& r) {
    r.worst_case = loss.evaluate(theta, DerivativeOrder::value).worst_case;
  });
}

}  // namespace netdesign
