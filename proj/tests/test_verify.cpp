#include <catch_amalgamated.hpp>

#include <random>

#include "netdesign/demos.hpp"
#include "netdesign/sparse_designer.hpp"
#include "netdesign/verify.hpp"
#include "test_helpers.hpp"

using namespace netdesign;
using Catch::Approx;

TEST_CASE("brute force on a single edge: 1/theta + theta + 10") {
  Eigen::VectorXd one(1), ten(1);
  one << 1.0;
  ten << 10.0;
  const auto r = brute_force_design(test::parallel_edges(1), test::unit_pair_moment(), CostModel{one, ten, 1.0});
  CHECK(r.value == Approx(12.0).margin(1e-6));
  CHECK(r.mask == 1U);
  CHECK(r.feasible_subsets == 1);
  CHECK(r.theta(0) == Approx(1.0).margin(1e-4));
  CHECK_THROWS_AS(brute_force_design(build_grid_network(4, false).with_roles(std::vector<NodeRole>(16, NodeRole::consumer)),
                                     CurrentMoment(Eigen::MatrixXd::Zero(16, 16)),
                                     CostModel::from_lengths(build_grid_network(4, false), 1.0, 1.0)),
                  ValidationError);
}

TEST_CASE("brute force with no fixed charges is the convex optimum") {
  const auto topo = demos::diamond();
  const auto load = demos::standard_load(topo);
  const auto moment = single_generator_moment(topo, load);
  const auto costs = CostModel::from_lengths(topo, 1.0, 0.0);
  const auto r = brute_force_design(topo, moment, costs);
  BarrierSettings tight;
  tight.zeta_min = 1e-8;
  const auto convex = solve_convex(topo, moment, costs.alpha, tight);
  // Zeroing an edge is a limit point of the full problem, so the full set wins or ties.
  CHECK(r.value == Approx(convex.objective).epsilon(1e-6));
}

TEST_CASE("brute force result does not depend on the enumeration order") {
  for (const auto& p : demos::tiny_oracle_suite()) {
    const auto up = brute_force_design(p.topology, p.moment, p.costs, {}, EnumerationOrder::ascending);
    const auto down = brute_force_design(p.topology, p.moment, p.costs, {}, EnumerationOrder::descending);
    CHECK(up.value == down.value);
    CHECK(up.mask == down.mask);
  }
}

TEST_CASE("oracle lower-bounds the heuristic on the tiny suite") {
  for (const auto& p : demos::tiny_oracle_suite()) {
    const auto oracle = brute_force_design(p.topology, p.moment, p.costs);
    const auto heuristic = design_sparse(p.topology, p.moment, p.costs);
    const auto report = make_oracle_report(p.name, oracle, heuristic.true_objective.total, heuristic.active);
    CHECK(report.relative_gap >= -1e-6);
  }
}

TEST_CASE("finite differences") {
  const auto pair = test::parallel_edges(1);
  const auto b = test::unit_pair_moment();
  ConductanceVector theta(1);
  theta << 2.0;
  const auto g = finite_difference_gradient([&](const ConductanceVector& t) { return expected_loss(pair, t, b); }, theta);
  CHECK(g(0) == Approx(-0.25).margin(1e-6));

  Eigen::VectorXd alpha(3);
  alpha << 0.5, -2.0, 3.0;
  ConductanceVector x(3);
  x << 1.0, 2.0, 3.0;
  const auto lin = finite_difference_gradient([&](const ConductanceVector& t) { return alpha.dot(t); }, x, 0.5);
  CHECK((lin - alpha).cwiseAbs().maxCoeff() <= 1e-14);

  CHECK_THROWS_AS(finite_difference_gradient([](const ConductanceVector&) { return 0.0; }, x, 1.5), ValidationError);

  auto topo = test::tagged_grid(3, {0});
  const auto moment = single_generator_moment(topo, demos::standard_load(topo));
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = test::random_conductances(topo.edge_count(), rng);
    const auto fd = finite_difference_gradient([&](const ConductanceVector& s) { return expected_loss(topo, s, moment); }, t);
    CHECK(test::relative_max_error(loss_gradient(topo, t, moment), fd) <= 1e-5);
  }
}

TEST_CASE("dispatch oracle") {
  SECTION("one generator: the dispatch is forced") {
    auto topo = test::tagged_grid(3, {4});
    const auto load = demos::standard_load(topo);
    std::mt19937_64 rng(1);
    const auto theta = test::random_conductances(topo.edge_count(), rng);
    CHECK(optimal_dispatch_oracle(topo, theta, load, {4}) ==
          Approx(expected_loss(topo, theta, single_generator_moment(topo, load))).epsilon(1e-10));
  }
  SECTION("symmetric two-generator path splits generation equally") {
    // g - c - g with unit lines and a single consumer in the middle.
    std::vector<Node> nodes{{0, {0, 0}, NodeRole::generator}, {1, {1, 0}, NodeRole::consumer},
                            {2, {2, 0}, NodeRole::generator}};
    NetworkTopology topo(nodes, {{0, 0, 1, 1.0, EdgeKind::real}, {1, 1, 2, 1.0, EdgeKind::real}});
    ConductanceVector theta(2);
    theta << 1.0, 1.0;
    const auto oracle = dispatch_oracle(topo, theta, {0, 2});
    CHECK(oracle.dispatch(0, 0) == Approx(-0.5));
    CHECK(oracle.dispatch(1, 0) == Approx(-0.5));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
    b(1) = -1.0;
    // Two half-unit currents through unit resistors.
    CHECK(optimal_dispatch_oracle(topo, theta, b, {0, 2}) == Approx(0.5));
  }
  SECTION("augmented network with stiff virtual lines matches the oracle") {
    auto topo = test::tagged_grid(2, {0, 3});
    const auto load = demos::standard_load(topo);
    std::mt19937_64 rng(13);
    const auto theta = test::random_conductances(topo.edge_count(), rng);
    const auto aug = augment_virtual_generator(topo, load);
    ConductanceVector theta_aug(aug.topology.edge_count());
    theta_aug << theta, ConductanceVector::Constant(2, 1e6);
    CHECK(expected_loss(aug.topology, theta_aug, aug.moment) ==
          Approx(optimal_dispatch_oracle(topo, theta, load, {0, 3})).epsilon(1e-4));
  }
  SECTION("disconnected network") {
    std::vector<Node> nodes{{0, {0, 0}, NodeRole::generator}, {1, {1, 0}, NodeRole::consumer},
                            {2, {2, 0}, NodeRole::generator}};
    NetworkTopology topo(nodes, {{0, 0, 1, 1.0, EdgeKind::real}, {1, 1, 2, 1.0, EdgeKind::real}});
    ConductanceVector theta(2);
    theta << 1.0, 0.0;
    CHECK_THROWS_AS(dispatch_oracle(topo, theta, {0, 2}), DisconnectedNetwork);
  }
}

TEST_CASE("connectivity certificate examples") {
  // Path 0 - 1 - 2 - 3 with the generator at 0, then closed into a cycle.
  std::vector<Node> nodes;
  for (int i = 0; i < 4; ++i) nodes.push_back({i, {double(i), 0}, i == 0 ? NodeRole::generator : NodeRole::consumer});
  std::vector<Edge> edges{{0, 0, 1, 1.0, EdgeKind::real}, {1, 1, 2, 1.0, EdgeKind::real},
                          {2, 2, 3, 1.0, EdgeKind::real}, {3, 3, 0, 1.0, EdgeKind::real}};
  NetworkTopology cycle(nodes, edges);
  std::vector<bool> tree{true, true, true, false};
  CHECK(connectivity_certify(cycle, tree, 0).certified);
  const auto fail = connectivity_certify(cycle, tree, 1);
  CHECK_FALSE(fail.certified);
  REQUIRE(fail.violating_consumer);
  CHECK(fail.cut_edges.size() == 1);
  CHECK(connectivity_certify(cycle, {}, 1).certified);
  CHECK_FALSE(connectivity_certify(cycle, {}, 2).certified);
}

TEST_CASE("connectivity certificate agrees with exhaustive removal") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto base = test::tagged_grid(3, {0}, false);  // 12 edges
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<bool> active(base.edge_count()), failable(base.edge_count());
    for (std::size_t l = 0; l < active.size(); ++l) {
      active[l] = u(rng) < 0.8;
      failable[l] = u(rng) < 0.8;
    }
    for (int k = 0; k <= 2; ++k) {
      const bool flow = connectivity_certify(base, active, k, failable).certified;
      CHECK(flow == survives_all_failures(base, active, k, failable));
    }
  }
  // With a virtual generator as the source.
  auto two = test::tagged_grid(3, {0, 8}, false);
  const auto aug = augment_virtual_generator(two, demos::standard_load(two));
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<bool> active(aug.topology.edge_count());
    for (std::size_t l = 0; l < active.size(); ++l) active[l] = u(rng) < 0.75;
    for (int k = 0; k <= 1; ++k)
      CHECK(connectivity_certify(aug.topology, active, k).certified == survives_all_failures(aug.topology, active, k));
  }
}
