#pragma once

// End-to-end runs for the command line: scenario in, artifact out. Module
// errors become a structured failure record with the matching exit code.

#include <chrono>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "netdesign/connectivity.hpp"
#include "netdesign/convex_solver.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/io/json_writer.hpp"
#include "netdesign/io/scenario.hpp"
#include "netdesign/robust_designer.hpp"
#include "netdesign/sparse_designer.hpp"
#include "netdesign/verify.hpp"

namespace netdesign::io {

inline constexpr int kArtifactSchemaVersion = 1;

enum ExitCode : int { exit_ok = 0, exit_failed_check = 1, exit_validation = 2, exit_not_converged = 3, exit_infeasible = 4 };

struct RunOptions {
  bool timings = false;  // wall-clock times break byte-identity, so they are opt-in
};

struct DesignArtifact {
  std::string input_hash;
  std::string scenario_name;
  DesignMode mode = DesignMode::sparse;
  std::string status = "ok";  // ok | not_converged | error
  std::string error_type;
  std::string error_message;
  int exit_code = exit_ok;

  NetworkTopology topology;  // as designed, including any virtual generator
  ConductanceVector theta;
  std::vector<bool> active;
  TrueObjective objective;
  ConnectivityCertificate certificate;
  int certified_k = 0;
  bool converged = false;

  std::vector<BarrierStage> barrier_stages;
  std::vector<MMRecord> trace;
  std::vector<double> gamma_trace;
  int perturbations = 0;
  std::optional<double> seconds;
};

/// Hash of the canonical scenario text, so CLI overrides are included.
inline std::string scenario_hash(const ScenarioFile& s) { return "fnv1a64:" + fnv1a_hex(to_json_string(scenario_to_json(s), -1)); }

namespace detail {

/// Edges at or above ratio * (largest real-edge conductance).
inline std::vector<bool> significant_edges(const NetworkTopology& topology, const ConductanceVector& theta,
                                           double ratio) {
  double top = 0.0;
  for (const auto& e : topology.edges())
    if (e.kind == EdgeKind::real) top = std::max(top, theta(e.id));
  std::vector<bool> out(topology.edge_count(), false);
  for (const auto& e : topology.edges())
    out[static_cast<std::size_t>(e.id)] = theta(e.id) > 0.0 && theta(e.id) >= ratio * top;
  return out;
}

inline void run_mode(const ScenarioFile& s, const PreparedProblem& p, DesignArtifact& a) {
  a.topology = p.topology;
  std::vector<bool> failable;
  if (s.mode == DesignMode::convex) {
    const auto r = solve_convex(p.topology, p.moment, p.costs.effective_alpha(), s.barrier);
    a.theta = r.theta;
    a.active = significant_edges(p.topology, r.theta, s.anneal.prune_ratio);
    a.objective.loss = r.loss;
    a.objective.linear_cost = r.cost;
    for (std::size_t l = 0; l < a.active.size(); ++l)
      if (a.active[l]) a.objective.step_cost += p.costs.beta(static_cast<Eigen::Index>(l));
    a.objective.total = a.objective.loss + a.objective.linear_cost + a.objective.step_cost;
    a.objective.feasible = true;
    a.barrier_stages = r.stages;
    a.converged = r.converged;
  } else {
    const auto r = s.mode == DesignMode::sparse
                       ? design_sparse(p.topology, p.moment, p.costs, s.anneal, s.barrier)
                       : design_robust(p.topology, p.moment, p.costs, s.robust, s.anneal, s.barrier);
    a.theta = r.polished_theta;
    a.active = r.active;
    a.objective = r.true_objective;
    a.barrier_stages = r.initial.stages;
    a.trace = r.trace;
    a.gamma_trace = r.gamma_trace;
    a.perturbations = r.perturbations;
    a.converged = r.converged;
    if (s.mode == DesignMode::robust) {
      a.certified_k = s.robust.k;
      failable = failable_mask(p.topology, s.robust.failable);
    }
  }
  a.certificate = connectivity_certify(p.topology, a.active, a.certified_k, failable);
}

}  // namespace detail

inline DesignArtifact run_design(const ScenarioFile& s, const RunOptions& options = {}) {
  DesignArtifact a;
  a.input_hash = scenario_hash(s);
  a.scenario_name = s.name;
  a.mode = s.mode;
  const auto t0 = std::chrono::steady_clock::now();
  const auto fail = [&a](const char* type, const std::exception& e, int code) {
    a.status = "error";
    a.error_type = type;
    a.error_message = e.what();
    a.exit_code = code;
  };
  try {
    detail::run_mode(s, prepare_problem(s), a);
    if (!a.converged) {
      a.status = "not_converged";
      a.exit_code = exit_not_converged;
    }
  } catch (const InfeasibleRobustness& e) {
    fail("infeasible_robustness", e, exit_infeasible);
  } catch (const ValidationError& e) {
    fail("validation", e, exit_validation);
  } catch (const DisconnectedNetwork& e) {
    fail("disconnected_network", e, exit_validation);
  }
  if (options.timings) a.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

namespace detail {

inline Json mm_record_json(const MMRecord& r) {
  return {{"stage", r.stage},
          {"gamma", r.gamma},
          {"objective", r.objective},
          {"smoothed", r.smoothed},
          {"loss", r.loss},
          {"worst_case", r.worst_case},
          {"newton_iterations", r.newton_iterations},
          {"perturbed", r.perturbed},
          {"converged", r.converged}};
}

}  // namespace detail

inline Json artifact_to_json(const DesignArtifact& a) {
  Json j;
  j["schema_version"] = kArtifactSchemaVersion;
  j["scenario"] = a.scenario_name;
  j["input_hash"] = a.input_hash;
  j["mode"] = to_string(a.mode);
  j["status"] = a.status;
  if (a.status == "error") {
    j["error"] = {{"type", a.error_type}, {"message", a.error_message}, {"exit_code", a.exit_code}};
    if (a.seconds) j["timings"] = {{"seconds", *a.seconds}};
    return j;
  }
  Json theta = Json::array(), active = Json::array();
  for (Eigen::Index l = 0; l < a.theta.size(); ++l) {
    theta.push_back(a.theta(l));
    if (a.active[static_cast<std::size_t>(l)]) active.push_back(l);
  }
  Json result;
  result["theta"] = theta;
  result["active_edges"] = active;
  result["active_edge_count"] = active.size();
  result["loss"] = a.objective.loss;
  result["linear_cost"] = a.objective.linear_cost;
  result["step_cost"] = a.objective.step_cost;
  result["total"] = a.objective.total;
  result["converged"] = a.converged;
  result["virtual_edges"] = Json::array();
  for (const auto& e : a.topology.edges())
    if (e.kind == EdgeKind::virtual_line) result["virtual_edges"].push_back(e.id);
  Json cert;
  cert["k"] = a.certified_k;
  cert["certified"] = a.certificate.certified;
  cert["violating_consumer"] = a.certificate.violating_consumer ? Json(*a.certificate.violating_consumer) : Json();
  cert["cut_edges"] = a.certificate.cut_edges;
  result["connectivity"] = cert;
  j["result"] = result;

  Json diag;
  Json stages = Json::array();
  for (const auto& st : a.barrier_stages)
    stages.push_back({{"zeta", st.zeta},
                      {"objective", st.objective},
                      {"barrier_objective", st.barrier_objective},
                      {"newton_iterations", st.newton_iterations},
                      {"converged", st.converged}});
  diag["barrier_stages"] = stages;
  Json trace = Json::array();
  for (const auto& r : a.trace) trace.push_back(detail::mm_record_json(r));
  diag["mm_trace"] = trace;
  diag["gamma_trace"] = a.gamma_trace;
  diag["perturbations"] = a.perturbations;
  j["diagnostics"] = diag;
  if (a.seconds) j["timings"] = {{"seconds", *a.seconds}};
  return j;
}

inline std::string serialize_artifact(const DesignArtifact& a) { return to_json_string(artifact_to_json(a)); }

/// Oracle checks on one scenario: finite-difference gradient, the exhaustive
/// subgraph oracle when the network is small, and the dispatch oracle when
/// there are several generators.
struct VerifyReport {
  Json report;
  bool passed = true;
};

inline constexpr double kVerifyGradientTol = 1e-5;
inline constexpr double kVerifyGapTol = 0.10;
inline constexpr double kVerifyDispatchTol = 1e-3;

inline VerifyReport run_verify(const ScenarioFile& s) {
  VerifyReport out;
  Json& rep = out.report;
  rep["schema_version"] = kArtifactSchemaVersion;
  rep["scenario"] = s.name;
  rep["input_hash"] = scenario_hash(s);
  const auto p = prepare_problem(s);
  const auto m = static_cast<Eigen::Index>(p.topology.edge_count());
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.1, 2.0);

  {
    ConductanceVector theta(m);
    for (Eigen::Index l = 0; l < m; ++l) theta(l) = unit(rng);
    const auto f = [&](const ConductanceVector& t) { return expected_loss(p.topology, t, p.moment); };
    const Eigen::VectorXd fd = finite_difference_gradient(f, theta, 1e-5);
    const Eigen::VectorXd g = loss_gradient(p.topology, theta, p.moment);
    const double err = (g - fd).cwiseAbs().maxCoeff() / std::max(1e-12, fd.cwiseAbs().maxCoeff());
    const bool ok = err <= kVerifyGradientTol;
    rep["gradient"] = {{"relative_error", err}, {"tolerance", kVerifyGradientTol}, {"passed", ok}};
    out.passed = out.passed && ok;
  }

  if (p.topology.edge_count() <= kMaxBruteForceEdges) {
    const auto oracle = brute_force_design(p.topology, p.moment, p.costs, s.barrier);
    const auto heur = design_sparse(p.topology, p.moment, p.costs, s.anneal, s.barrier);
    const auto r = make_oracle_report(s.name, oracle, heur.true_objective.total, heur.active);
    const bool ok = r.relative_gap <= kVerifyGapTol;
    const auto mask_json = [](const std::vector<bool>& v) {
      Json a = Json::array();
      for (std::size_t l = 0; l < v.size(); ++l)
        if (v[l]) a.push_back(l);
      return a;
    };
    rep["oracle"] = {{"oracle_value", r.oracle_value},
                     {"oracle_support", mask_json(r.oracle_support)},
                     {"heuristic_value", r.heuristic_value},
                     {"heuristic_support", mask_json(r.heuristic_support)},
                     {"relative_gap", r.relative_gap},
                     {"support_match", r.support_match},
                     {"feasible_subsets", oracle.feasible_subsets},
                     {"gap_tolerance", kVerifyGapTol},
                     {"passed", ok}};
    out.passed = out.passed && ok;
  } else {
    rep["oracle"] = {{"skipped", "more than " + std::to_string(kMaxBruteForceEdges) + " edges"}};
  }

  if (!p.virtual_edges.empty()) {
    // Real lines at random conductances, virtual lines nearly free.
    const auto m_real = static_cast<Eigen::Index>(s.topology.edge_count());
    ConductanceVector real(m_real);
    for (Eigen::Index l = 0; l < m_real; ++l) real(l) = unit(rng);
    ConductanceVector aug(m);
    aug.head(m_real) = real;
    aug.tail(m - m_real).setConstant(1e8 * real.maxCoeff());
    const double augmented = expected_loss(p.topology, aug, p.moment);
    const double oracle = optimal_dispatch_oracle(s.topology, real, s.load, s.topology.generators());
    const double rel = std::abs(augmented - oracle) / std::max(1e-12, std::abs(oracle));
    const bool ok = rel <= kVerifyDispatchTol;
    rep["dispatch"] = {{"augmented_loss", augmented}, {"oracle_loss", oracle}, {"relative_error", rel},
                       {"tolerance", kVerifyDispatchTol}, {"passed", ok}};
    out.passed = out.passed && ok;
  }
  rep["passed"] = out.passed;
  return out;
}

}  // namespace netdesign::io
