#include <catch_amalgamated.hpp>

#include <random>

#include "netdesign/convex_solver.hpp"
#include "test_helpers.hpp"

using namespace netdesign;
using Catch::Approx;

TEST_CASE("single edge converges to the closed-form optimum") {
  // Objective 1/theta + 4 theta, minimized at theta = 1/2 with value 4.
  BarrierSettings settings;
  settings.zeta_min = 1e-8;
  Eigen::VectorXd alpha(1);
  alpha << 4.0;
  const auto r = solve_convex(test::parallel_edges(1), test::unit_pair_moment(), alpha, settings);
  CHECK(r.converged);
  CHECK(r.theta(0) == Approx(0.5).margin(1e-4));
  CHECK(r.objective == Approx(4.0).margin(1e-3));
  CHECK(r.loss == Approx(2.0).margin(1e-3));
  CHECK(r.cost == Approx(2.0).margin(1e-3));
}

TEST_CASE("cheaper parallel edge takes all the conductance") {
  BarrierSettings settings;
  settings.zeta_min = 1e-8;
  Eigen::VectorXd alpha(2);
  alpha << 1.0, 4.0;
  const auto r = solve_convex(test::parallel_edges(2), test::unit_pair_moment(), alpha, settings);
  CHECK(r.converged);
  CHECK(r.theta(0) == Approx(1.0).margin(1e-3));
  CHECK(r.theta(1) < 1e-6);
  CHECK(r.objective == Approx(2.0).margin(1e-3));
}

TEST_CASE("no load means no network") {
  auto topo = test::tagged_grid(3, {0});
  const CurrentMoment zero(Eigen::MatrixXd::Zero(9, 9));
  const auto alpha = CostModel::from_lengths(topo, 1.0, 0.0).alpha;
  BarrierSettings settings;
  const auto r = solve_convex(topo, zero, alpha, settings);
  CHECK(r.converged);
  // The decrement test pins the floor only to ~sqrt(2 tol / (zeta m)) relative.
  for (Eigen::Index l = 0; l < alpha.size(); ++l)
    CHECK(r.theta(l) == Approx(settings.zeta_min / alpha(l)).epsilon(0.02));
}

TEST_CASE("barrier stages are monotone and the solution is interior") {
  auto topo = test::tagged_grid(4, {0});
  auto moment = single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0));
  const auto alpha = CostModel::from_lengths(topo, 1.0, 0.0).alpha;
  const auto r = solve_convex(topo, moment, alpha);
  REQUIRE(r.converged);
  CHECK((r.theta.array() > 0.0).all());
  for (std::size_t s = 1; s < r.stages.size(); ++s)
    CHECK(r.stages[s].objective <= r.stages[s - 1].objective + 1e-9 * std::abs(r.stages[s - 1].objective));
  // Duality gap of the barrier problem is m * zeta.
  CHECK(r.stages.back().zeta == Approx(1e-6));

  SECTION("KKT conditions of the barrier problem hold to the Newton tolerance") {
    const auto d = ExpectedLoss(topo, moment).derivatives(r.theta, DerivativeOrder::hessian);
    const double zeta = r.final_zeta;
    const Eigen::VectorXd residual = d.gradient + alpha - (zeta * r.theta.array().inverse()).matrix();
    Eigen::MatrixXd h = d.hessian;
    h.diagonal().array() += zeta * r.theta.array().inverse().square();
    // Decrement^2 = r^T H^{-1} r <= 2 tol bounds each |r_l| by sqrt(2 tol H_ll).
    const double decrement2 = residual.dot(h.llt().solve(residual));
    CHECK(decrement2 / 2.0 <= BarrierSettings{}.newton_tol);
    for (Eigen::Index l = 0; l < residual.size(); ++l)
      CHECK(std::abs(residual(l)) <= std::sqrt(2.0 * BarrierSettings{}.newton_tol * h(l, l)) * (1.0 + 1e-9));
  }

  SECTION("warm start from a perturbed optimum reconverges") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    ConductanceVector start = r.theta;
    for (Eigen::Index l = 0; l < start.size(); ++l) start(l) *= 1.0 + u(rng);
    const auto again = solve_convex(topo, moment, alpha, BarrierSettings{}.fixed_at_min(), start);
    REQUIRE(again.converged);
    const double scale = r.theta.cwiseAbs().maxCoeff();
    CHECK((again.theta - r.theta).cwiseAbs().maxCoeff() <= 1e-6 * scale);
  }

  SECTION("suboptimality against the true problem is bounded by m * zeta_min") {
    BarrierSettings tight;
    tight.zeta_min = 1e-10;
    const auto ref = solve_convex(topo, moment, alpha, tight);
    CHECK(r.objective - ref.objective <= static_cast<double>(alpha.size()) * 1e-6 + 1e-8);
  }
}

TEST_CASE("accepted Newton steps never increase the barrier objective") {
  auto topo = test::tagged_grid(3, {4});
  auto moment = single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 0.3));
  const ExpectedLoss loss(topo, moment);
  const auto alpha = CostModel::from_lengths(topo, 1.0, 0.0).alpha;
  BarrierSettings one_step;
  one_step.max_newton_iters = 1;
  ConductanceVector theta = default_initial_conductance(alpha);
  const double zeta = 0.01;
  double previous = detail::barrier_value(loss, theta, alpha, zeta);
  for (int i = 0; i < 40; ++i) {
    const auto outcome = detail::newton_stage(loss, alpha, zeta, one_step, theta);
    const double now = detail::barrier_value(loss, theta, alpha, zeta);
    CHECK(now <= previous);
    previous = now;
    if (outcome.converged) break;
  }
}

TEST_CASE("settings validation") {
  BarrierSettings bad;
  bad.zeta_decay = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.zeta_min = 2.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  Eigen::VectorXd alpha(1);
  alpha << -1.0;
  CHECK_THROWS_AS(solve_convex(test::parallel_edges(1), test::unit_pair_moment(), alpha), ValidationError);
  alpha << 1.0;
  ConductanceVector zero_start(1);
  zero_start << 0.0;
  CHECK_THROWS_AS(solve_convex(test::parallel_edges(1), test::unit_pair_moment(), alpha, {}, zero_start),
                  ValidationError);
}
