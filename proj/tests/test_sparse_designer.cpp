#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "netdesign/sparse_designer.hpp"
#include "test_helpers.hpp"

using namespace netdesign;
using Catch::Approx;

namespace {

int forest_defect(const NetworkTopology& topo, const std::vector<bool>& active) {
  std::vector<bool> used(topo.node_count(), false);
  std::vector<bool> mask = active;
  int edges = 0;
  for (const auto& e : topo.edges())
    if (active[static_cast<std::size_t>(e.id)]) {
      used[static_cast<std::size_t>(e.u)] = used[static_cast<std::size_t>(e.v)] = true;
      ++edges;
    }
  const auto labels = component_labels(topo, mask);
  std::set<int> comps;
  int nodes = 0;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) {
      ++nodes;
      comps.insert(labels[i]);
    }
  return edges - (nodes - static_cast<int>(comps.size()));
}

// Non-increasing within each stage, perturbation records start a new baseline.
void check_descent(const std::vector<MMRecord>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].stage != trace[i - 1].stage || trace[i].perturbed) continue;
    CHECK(trace[i].objective <= trace[i - 1].objective + 1e-9 * std::max(1.0, std::abs(trace[i - 1].objective)));
  }
}

}  // namespace

TEST_CASE("smoothed step values") {
  CHECK(smoothed_step(0.0, 0.3) == 0.0);
  CHECK(smoothed_step(0.1, 0.1) == Approx(0.5));
  CHECK(smoothed_step(9.9, 0.1) == Approx(0.99));
  CHECK_THROWS_AS(smoothed_step(1.0, 0.0), ValidationError);
}

TEST_CASE("mm reweighting") {
  Eigen::VectorXd a(3), b(3), t(3);
  a << 1, 1, 2;
  b << 1, 0, 3;
  t << 0, 5, 1e9;
  const auto r = mm_reweight(a, b, 0.1, t);
  CHECK(r(0) == Approx(11.0));
  CHECK(r(1) == 1.0);
  CHECK(r(2) == Approx(2.0).margin(1e-15));
  CHECK(((r - a).array() >= 0.0).all());
}

TEST_CASE("majorization is a valid upper bound on random points") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = 0.01 + u(rng);
    const double prev = u(rng), next = u(rng), beta = u(rng);
    const double tangent = beta * smoothed_step(prev, gamma) + beta * gamma / ((gamma + prev) * (gamma + prev)) * (next - prev);
    CHECK(beta * smoothed_step(next, gamma) <= tangent + 1e-12);
  }
}

TEST_CASE("zero fixed cost stops after one MM iteration at the convex solution") {
  auto topo = test::tagged_grid(3, {0});
  auto moment = single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0));
  const auto costs = CostModel::from_lengths(topo, 1.0, 0.0);
  const ExpectedLoss loss(topo, moment);
  const auto convex = minimize_with_barrier(loss, costs.alpha, BarrierSettings{});
  std::mt19937_64 rng(0);
  std::vector<MMRecord> trace;
  const auto theta = mm_stage(loss, costs.alpha, costs.beta, 0.5, convex.theta, BarrierSettings{}, AnnealSchedule{}, rng,
                              trace);
  CHECK(trace.size() == 2);
  CHECK((theta - convex.theta).cwiseAbs().maxCoeff() <= 1e-6 * convex.theta.maxCoeff());
}

TEST_CASE("single edge keeps its line and pays the fixed cost") {
  // 1/theta + theta + 10 phi_gamma(theta): line is mandatory, theta* ~ 1.
  Eigen::VectorXd alpha(1), beta(1);
  alpha << 1.0;
  beta << 10.0;
  const ExpectedLoss loss(test::parallel_edges(1), test::unit_pair_moment());
  std::mt19937_64 rng(0);
  std::vector<MMRecord> trace;
  ConductanceVector start(1);
  start << 1.0;
  const auto theta = mm_stage(loss, alpha, beta, 1e-4, start, BarrierSettings{}, AnnealSchedule{}, rng, trace);
  CHECK(theta(0) == Approx(1.0).margin(2e-3));

  CostModel costs{alpha, beta, 1.0};
  const auto r = design_sparse(test::parallel_edges(1), test::unit_pair_moment(), costs);
  CHECK(r.active_edges == std::vector<int>{0});
  CHECK(r.true_objective.total == Approx(12.0).margin(1e-3));
  CHECK(r.true_objective.step_cost == 10.0);
}

TEST_CASE("parallel pair: expensive fixed cost line is dropped") {
  Eigen::VectorXd alpha(2), beta(2);
  alpha << 1.0, 1.0;
  beta << 1.0, 1.0;
  const auto r = design_sparse(test::parallel_edges(2), test::unit_pair_moment(), CostModel{alpha, beta, 1.0});
  CHECK(r.active_edges.size() == 1);
  CHECK(r.true_objective.total == Approx(3.0).margin(1e-3));
}

TEST_CASE("3x3 demo: MM trace descends and the result is a forest") {
  auto topo = test::tagged_grid(3, {0});
  auto moment = single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0));
  const auto costs = CostModel::from_lengths(topo, 1.0, 1.0);
  AnnealSchedule schedule;
  const auto r = design_sparse(topo, moment, costs, schedule);
  CHECK(r.converged);
  check_descent(r.trace);
  CHECK(forest_defect(topo, r.active) == 0);
  for (int c : topo.consumers()) {
    bool touched = false;
    for (int l : r.active_edges) touched = touched || topo.edge(l).u == c || topo.edge(l).v == c;
    CHECK(touched);
  }
  CHECK(r.true_objective.feasible);
  // Gamma stages from max theta down to 1e-4 of it.
  REQUIRE(!r.gamma_trace.empty());
  CHECK(r.gamma_trace.back() >= 1e-4 * r.gamma_trace.front() * (1 - 1e-12));
  CHECK(r.gamma_trace.back() * schedule.gamma_decay < 1e-4 * r.gamma_trace.front());
  for (std::size_t s = 1; s <= r.gamma_trace.size(); ++s) {
    int n = 0;
    for (const auto& rec : r.trace) n += rec.stage == static_cast<int>(s);
    CHECK(n <= schedule.max_mm_iters + 1 + schedule.max_perturbations_per_stage);
  }

  SECTION("same seed reproduces the run bit for bit") {
    const auto again = design_sparse(topo, moment, costs, schedule);
    CHECK(again.active_edges == r.active_edges);
    CHECK(again.true_objective.total == r.true_objective.total);
  }
  SECTION("the true objective matches a direct evaluation") {
    const auto direct = true_objective(topo, moment, costs, r.polished_theta);
    CHECK(direct.total == Approx(r.true_objective.total).epsilon(1e-6));
  }
}

TEST_CASE("active edge count is non-increasing in the fixed cost scale") {
  auto topo = test::tagged_grid(4, {0});
  auto moment = single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0));
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (double scale : {0.0, 0.25, 1.0}) {
    const auto r = design_sparse(topo, moment, CostModel::from_lengths(topo, 1.0, scale));
    CHECK(r.active_edges.size() <= previous);
    previous = r.active_edges.size();
  }
}

TEST_CASE("schedule validation") {
  AnnealSchedule s;
  s.gamma_decay = 1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.gamma_init = 1.0;
  s.gamma_min = 2.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
