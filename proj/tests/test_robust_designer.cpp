#include <catch_amalgamated.hpp>

#include <random>

#include "netdesign/robust_designer.hpp"
#include "test_helpers.hpp"

using namespace netdesign;
using Catch::Approx;

namespace {

ConductanceVector vec(std::initializer_list<double> v) {
  ConductanceVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Instance {
  NetworkTopology topology;
  CurrentMoment moment;
};

Instance small_grid(int w) {
  auto grid = build_grid_network(w, true);
  std::vector<NodeRole> roles(grid.node_count(), NodeRole::consumer);
  roles[0] = NodeRole::generator;
  auto topo = grid.with_roles(roles);
  return {topo, single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0))};
}

Instance two_by_three() {
  std::vector<Node> nodes;
  for (int i = 0; i < 6; ++i)
    nodes.push_back({i, {static_cast<double>(i % 3), static_cast<double>(i / 3)},
                     i == 0 ? NodeRole::generator : NodeRole::consumer});
  std::vector<Edge> edges{{0, 0, 1, 1.0, EdgeKind::real}, {1, 1, 2, 1.0, EdgeKind::real},
                          {2, 3, 4, 1.0, EdgeKind::real}, {3, 4, 5, 1.0, EdgeKind::real},
                          {4, 0, 3, 1.0, EdgeKind::real}, {5, 1, 4, 1.0, EdgeKind::real},
                          {6, 2, 5, 1.0, EdgeKind::real}, {7, 0, 4, std::sqrt(2.0), EdgeKind::real},
                          {8, 1, 5, std::sqrt(2.0), EdgeKind::real}};
  NetworkTopology topo(nodes, edges);
  return {topo, single_generator_moment(topo, test::uniform_consumer_load(topo, -1.0, 1.0 / 3.0))};
}

}  // namespace

TEST_CASE("scenario enumeration") {
  std::vector<bool> failable{true, false, true, true};
  const auto one = enumerate_scenarios(failable, 1);
  REQUIRE(one.size() == 3);
  CHECK(one[0].failed == std::vector<int>{0});
  CHECK(one[2].failed == std::vector<int>{3});
  const auto two = enumerate_scenarios(failable, 2);
  REQUIRE(two.size() == 3);
  CHECK(two[0].failed == std::vector<int>{0, 2});
  CHECK(two[1].failed == std::vector<int>{0, 3});
  CHECK(two[2].failed == std::vector<int>{2, 3});
  CHECK(enumerate_scenarios(failable, 0).size() == 1);
  CHECK_THROWS_AS(enumerate_scenarios(failable, 4), ValidationError);
  CHECK(enumerate_scenarios(std::vector<bool>(20, true), 2).size() == 190);
}

TEST_CASE("scenario losses on parallel edges") {
  const auto pair = test::parallel_edges(2);
  const auto b = test::unit_pair_moment();
  const auto theta = vec({1.0, 1.0});
  CHECK(scenario_loss(pair, theta, b, {}) == Approx(0.5));
  CHECK(scenario_loss(pair, theta, b, {{0}}) == Approx(1.0));
  CHECK(scenario_loss(pair, theta, b, {{1}}) == Approx(1.0));

  const auto wc = worst_case_loss(pair, theta, b, 1);
  CHECK(wc.loss == Approx(1.0));
  CHECK(wc.scenario.failed == std::vector<int>{0});
  CHECK(worst_case_loss(pair, theta, b, 0).loss == Approx(expected_loss(pair, theta, b)));

  const auto single = test::parallel_edges(1);
  CHECK(scenario_loss(single, vec({1.0}), b, {{0}}) == kDisconnectedLoss);

  const auto triple = test::parallel_edges(3);
  const auto wc3 = worst_case_loss(triple, vec({2.0, 1.0, 1.0}), b, 1);
  CHECK(wc3.loss == Approx(0.5));
  CHECK(wc3.scenario.failed == std::vector<int>{0});
}

TEST_CASE("soft-max of equal scenarios adds tau log N") {
  const auto triple = test::parallel_edges(3);
  const auto theta = vec({1.0, 1.0, 1.0});
  const double tau = 0.05;
  CHECK(softmax_loss(triple, theta, test::unit_pair_moment(), 1, tau) == Approx(0.5 + tau * std::log(3.0)));
  const auto pair = test::parallel_edges(2);
  for (double t : {1e-1, 1e-2, 1e-4}) {
    const double v = softmax_loss(pair, vec({1.0, 1.0}), test::unit_pair_moment(), 1, t);
    CHECK(v - 1.0 >= -1e-12);
    CHECK(v - 1.0 <= t * std::log(2.0) + 1e-12);
  }
}

TEST_CASE("Woodbury scenario losses agree with direct evaluation") {
  auto inst = small_grid(3);
  std::mt19937_64 rng(21);
  for (int k : {1, 2}) {
    const SoftmaxLoss loss(inst.topology, inst.moment, k, 0.1, std::vector<bool>(inst.topology.edge_count(), true));
    for (int trial = 0; trial < 3; ++trial) {
      const auto theta = test::random_conductances(inst.topology.edge_count(), rng);
      const auto e = loss.evaluate(theta, DerivativeOrder::gradient);
      for (std::size_t s = 0; s < loss.scenarios().size(); ++s) {
        const auto direct = scenario_derivatives(inst.topology, theta, inst.moment, loss.scenarios()[s],
                                                 DerivativeOrder::gradient);
        CHECK(e.scenario_losses[s] == Approx(direct.value).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("soft-max derivatives match finite differences on a 2x3 grid") {
  auto inst = two_by_three();
  const SoftmaxLoss loss(inst.topology, inst.moment, 1, 0.05, std::vector<bool>(inst.topology.edge_count(), true));
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto theta = test::random_conductances(inst.topology.edge_count(), rng);
    const auto d = loss.derivatives(theta, DerivativeOrder::hessian);
    const auto fd = test::central_difference([&](const Eigen::VectorXd& t) { return loss.value(t); }, theta, 1e-4);
    CHECK(test::relative_max_error(d.gradient, fd) <= 1e-5);
    Eigen::MatrixXd fd_hess(theta.size(), theta.size());
    for (Eigen::Index l = 0; l < theta.size(); ++l)
      fd_hess.col(l) = test::central_difference(
          [&](const Eigen::VectorXd& t) { return loss.derivatives(t, DerivativeOrder::gradient).gradient(l); }, theta,
          1e-4);
    CHECK(test::relative_max_error(d.hessian, fd_hess) <= 1e-4);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d.hessian);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * eig.eigenvalues().cwiseAbs().maxCoeff());
  }
}

TEST_CASE("soft-max properties: sandwich, weights, convexity") {
  auto inst = small_grid(3);
  const auto m = inst.topology.edge_count();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double tau : {0.01, 0.3}) {
    const SoftmaxLoss loss(inst.topology, inst.moment, 1, tau, std::vector<bool>(m, true));
    const double log_count = std::log(static_cast<double>(loss.scenarios().size()));
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = test::random_conductances(m, rng);
      const auto b = test::random_conductances(m, rng);
      const auto e = loss.evaluate(a, DerivativeOrder::value);
      CHECK(e.value - e.worst_case >= 0.0);
      CHECK(e.value - e.worst_case <= tau * log_count + 1e-12 * e.worst_case);
      double total = 0.0;
      for (double w : e.weights) {
        CHECK(w >= 0.0);
        total += w;
      }
      CHECK(total == Approx(1.0).margin(1e-12));
      const double mid = loss.value(0.5 * (a + b));
      CHECK(mid <= 0.5 * (e.value + loss.value(b)) + 1e-9);
    }
  }
}

TEST_CASE("an unsurvivable failure pushes the soft-max to the disconnection loss") {
  auto inst = small_grid(2);
  // Drop everything but a path: any line failure disconnects a consumer.
  std::vector<bool> path(inst.topology.edge_count(), false);
  path[0] = path[3] = path[1] = true;
  std::vector<int> map;
  const SoftmaxLoss loss(inst.topology, inst.moment, 1, 0.01, std::vector<bool>(inst.topology.edge_count(), true));
  const auto sub = loss.restricted(path, map);
  REQUIRE(sub);
  const auto v = sub->value(ConductanceVector::Ones(static_cast<Eigen::Index>(map.size())));
  CHECK(v >= kDisconnectedLoss);
}

TEST_CASE("k = 0 robust design is the sparse design") {
  auto inst = small_grid(3);
  const auto costs = CostModel::from_lengths(inst.topology, 1.0, 1.0);
  const auto sparse = design_sparse(inst.topology, inst.moment, costs);
  const auto robust = design_robust(inst.topology, inst.moment, costs, RobustSettings{0, 0.01, FailableEdges::lines});
  CHECK(robust.active_edges == sparse.active_edges);
  CHECK(robust.theta == sparse.theta);
  CHECK(robust.true_objective.total == sparse.true_objective.total);
}

TEST_CASE("robust design on a small grid is two-edge-connected") {
  auto inst = small_grid(3);
  const auto costs = CostModel::from_lengths(inst.topology, 1.0, 1.0);
  const RobustSettings robust{1, 0.01, FailableEdges::lines};
  const auto r = design_robust(inst.topology, inst.moment, costs, robust);
  CHECK(connectivity_certify(inst.topology, r.active, 1).certified);
  CHECK(r.true_objective.total < kDisconnectedLoss);
  const double log_count = std::log(static_cast<double>(inst.topology.edge_count()));
  for (const auto& rec : r.trace) {
    CHECK(rec.loss - rec.worst_case >= 0.0);
    CHECK(rec.loss - rec.worst_case <= robust.tau * log_count + 1e-12 * rec.worst_case);
  }
  const auto sparse = design_sparse(inst.topology, inst.moment, costs);
  CHECK(r.active_edges.size() > sparse.active_edges.size());
}

TEST_CASE("infeasible robustness is reported") {
  const auto pair = test::parallel_edges(1);
  CHECK_THROWS_AS(design_robust(pair, test::unit_pair_moment(), CostModel{vec({1.0}), vec({1.0}), 1.0},
                                RobustSettings{1, 0.01, FailableEdges::lines}),
                  InfeasibleRobustness);
  CHECK_THROWS_AS(RobustSettings({3, 0.1, FailableEdges::all}).validate(), ValidationError);
}
