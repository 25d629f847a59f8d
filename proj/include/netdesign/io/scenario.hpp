#pragma once

// Scenario files: JSON in, validated model out, and a canonical serializer
// that writes every default explicitly. The schema is described in README.md.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "netdesign/convex_solver.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/io/json_writer.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/robust_designer.hpp"
#include "netdesign/sparse_designer.hpp"

namespace netdesign::io {

inline constexpr int kScenarioSchemaVersion = 1;

enum class DesignMode { convex, sparse, robust };

inline const char* to_string(DesignMode mode) {
  switch (mode) {
    case DesignMode::convex: return "convex";
    case DesignMode::sparse: return "sparse";
    case DesignMode::robust: return "robust";
  }
  return "?";
}

inline DesignMode parse_mode(const std::string& s, const std::string& where = "mode") {
  if (s == "convex") return DesignMode::convex;
  if (s == "sparse") return DesignMode::sparse;
  if (s == "robust") return DesignMode::robust;
  throw ValidationError(where + ": unknown mode '" + s + "' (expected convex, sparse or robust)");
}

struct GridSpec {
  int w = 0;
  bool diagonals = true;
};

/// Either the copper rule (alpha = price * s^2, beta = charge * s) or
/// explicit per-edge vectors. Applies to real edges only.
struct CostSpec {
  bool rule = true;
  double price = 1.0;
  double charge = 1.0;
  double lambda = 1.0;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;

  CostModel resolve(const NetworkTopology& topology) const {
    CostModel c = rule ? CostModel::from_lengths(topology, price, charge) : CostModel{alpha, beta, 1.0};
    c.lambda = lambda;
    c.validate(topology);
    return c;
  }
};

struct ScenarioFile {
  int schema_version = kScenarioSchemaVersion;
  std::string name;
  std::uint64_t seed = 0;
  DesignMode mode = DesignMode::sparse;
  std::optional<GridSpec> grid;  // set when the topology came from the grid generator
  NetworkTopology topology;       // real network with roles, never augmented
  LoadModel load;
  CostSpec cost_spec;
  BarrierSettings barrier;
  AnnealSchedule anneal;  // seed mirrors the scenario seed
  RobustSettings robust;

  CostModel costs() const { return cost_spec.resolve(topology); }
};

/// Topology, moment and costs ready for the designers; several generators
/// are merged through a virtual generator.
struct PreparedProblem {
  NetworkTopology topology;
  CurrentMoment moment;
  CostModel costs;
  std::vector<int> virtual_edges;
};

inline PreparedProblem prepare_problem(const ScenarioFile& s) {
  const auto costs = s.costs();
  const auto gens = s.topology.generators();
  if (gens.empty()) throw ValidationError("scenario has no generator");
  if (gens.size() == 1) return {s.topology, single_generator_moment(s.topology, s.load), costs, {}};
  auto aug = augment_virtual_generator(s.topology, s.load);
  return {aug.topology, aug.moment, extend_costs_to_virtual(costs, aug.topology), aug.virtual_edges};
}

namespace detail {

inline std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
inline std::string child(const std::string& path, std::size_t i) { return path + "/" + std::to_string(i); }

inline void only_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ValidationError(child(path, it.key()) + ": unknown field");
}

inline const Json& need(const Json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ValidationError(child(path, key) + ": missing required field");
  return j.at(key);
}

inline double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ValidationError(path + ": must be finite");
  return x;
}

inline long long as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path + ": expected an integer");
  return j.get<long long>();
}

inline bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ValidationError(path + ": expected true or false");
  return j.get<bool>();
}

inline std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path + ": expected a string");
  return j.get<std::string>();
}

inline Eigen::VectorXd as_vector(const Json& j, const std::string& path, std::size_t size) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array");
  if (j.size() != size)
    throw ValidationError(path + ": expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < size; ++i) v(static_cast<Eigen::Index>(i)) = as_double(j[i], child(path, i));
  return v;
}

inline double get_or(const Json& j, const std::string& path, const char* key, double fallback) {
  return j.contains(key) ? as_double(j.at(key), child(path, key)) : fallback;
}

inline int get_or(const Json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = as_int(j.at(key), child(path, key));
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ValidationError(child(path, key) + ": out of range");
  return static_cast<int>(v);
}

inline NodeRole parse_role(const std::string& s, const std::string& path) {
  if (s == "consumer") return NodeRole::consumer;
  if (s == "transmission") return NodeRole::transmission;
  if (s == "generator") return NodeRole::generator;
  throw ValidationError(path + ": unknown role '" + s + "' (expected consumer, transmission or generator)");
}

inline int node_index(const Json& j, const std::string& path, std::size_t n) {
  const auto v = as_int(j, path);
  if (v < 0 || v >= static_cast<long long>(n)) throw ValidationError(path + ": node " + std::to_string(v) + " out of range");
  return static_cast<int>(v);
}

inline NetworkTopology parse_topology(const Json& j, const std::string& path, std::optional<GridSpec>& grid) {
  only_keys(j, path, {"grid", "nodes", "edges"});
  if (j.contains("grid")) {
    if (j.contains("nodes") || j.contains("edges"))
      throw ValidationError(path + ": give either a grid or explicit nodes and edges, not both");
    const std::string gp = child(path, "grid");
    const Json& g = j.at("grid");
    only_keys(g, gp, {"w", "diagonals"});
    GridSpec spec;
    const auto w = as_int(need(g, gp, "w"), child(gp, "w"));
    if (w < 2 || w > 200) throw ValidationError(child(gp, "w") + ": grid width must lie in [2, 200]");
    spec.w = static_cast<int>(w);
    if (g.contains("diagonals")) spec.diagonals = as_bool(g.at("diagonals"), child(gp, "diagonals"));
    grid = spec;
    return build_grid_network(spec.w, spec.diagonals);
  }
  grid.reset();
  const std::string np = child(path, "nodes"), ep = child(path, "edges");
  const Json& jn = need(j, path, "nodes");
  const Json& je = need(j, path, "edges");
  if (!jn.is_array() || jn.empty()) throw ValidationError(np + ": expected a non-empty array");
  if (!je.is_array()) throw ValidationError(ep + ": expected an array");
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string p = child(np, i);
    only_keys(jn[i], p, {"x", "y"});
    nodes.push_back({static_cast<int>(i),
                     {get_or(jn[i], p, "x", 0.0), get_or(jn[i], p, "y", 0.0)},
                     NodeRole::transmission});
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < je.size(); ++i) {
    const std::string p = child(ep, i);
    only_keys(je[i], p, {"u", "v", "length"});
    const int u = node_index(need(je[i], p, "u"), child(p, "u"), nodes.size());
    const int v = node_index(need(je[i], p, "v"), child(p, "v"), nodes.size());
    const auto& a = nodes[static_cast<std::size_t>(u)].position;
    const auto& b = nodes[static_cast<std::size_t>(v)].position;
    const double euclid = std::hypot(a.x - b.x, a.y - b.y);
    const double len = je[i].contains("length") ? as_double(je[i].at("length"), child(p, "length")) : euclid;
    if (!(len > 0.0)) throw ValidationError(child(p, "length") + ": must be positive (coincident endpoints need a length)");
    edges.push_back({static_cast<int>(i), u, v, len, EdgeKind::real});
  }
  try {
    return NetworkTopology(std::move(nodes), std::move(edges));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::vector<NodeRole> parse_roles(const Json& j, const std::string& path, std::size_t n) {
  std::vector<NodeRole> roles(n, NodeRole::consumer);
  if (j.is_array()) {
    if (j.size() != n) throw ValidationError(path + ": expected one role per node (" + std::to_string(n) + ")");
    for (std::size_t i = 0; i < n; ++i) roles[i] = parse_role(as_string(j[i], child(path, i)), child(path, i));
    return roles;
  }
  only_keys(j, path, {"default", "generator", "transmission", "consumer"});
  const NodeRole fallback =
      j.contains("default") ? parse_role(as_string(j.at("default"), child(path, "default")), child(path, "default"))
                            : NodeRole::consumer;
  roles.assign(n, fallback);
  std::vector<bool> assigned(n, false);
  for (const char* key : {"generator", "transmission", "consumer"}) {
    if (!j.contains(key)) continue;
    const std::string p = child(path, key);
    const Json& list = j.at(key);
    if (!list.is_array()) throw ValidationError(p + ": expected an array of node ids");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const int id = node_index(list[i], child(p, i), n);
      if (assigned[static_cast<std::size_t>(id)])
        throw ValidationError(child(p, i) + ": node " + std::to_string(id) + " is given two roles");
      assigned[static_cast<std::size_t>(id)] = true;
      roles[static_cast<std::size_t>(id)] = parse_role(key, p);
    }
  }
  return roles;
}

inline LoadModel parse_loads(const Json& j, const std::string& path, const NetworkTopology& topology) {
  const std::size_t n = topology.node_count();
  LoadModel load = LoadModel::zeros(n);
  only_keys(j, path, {"mean", "stddev", "default", "nodes"});
  const bool arrays = j.contains("mean") || j.contains("stddev");
  if (arrays) {
    if (j.contains("default") || j.contains("nodes"))
      throw ValidationError(path + ": give either mean/stddev arrays or default/nodes, not both");
    load.mean = as_vector(need(j, path, "mean"), child(path, "mean"), n);
    load.stddev = as_vector(need(j, path, "stddev"), child(path, "stddev"), n);
  } else {
    std::vector<bool> has(n, false);
    if (j.contains("default")) {
      const std::string p = child(path, "default");
      const Json& d = j.at("default");
      only_keys(d, p, {"mean", "stddev"});
      const double mean = as_double(need(d, p, "mean"), child(p, "mean"));
      const double sd = get_or(d, p, "stddev", 0.0);
      for (int c : topology.consumers()) {
        load.mean(c) = mean;
        load.stddev(c) = sd;
        has[static_cast<std::size_t>(c)] = true;
      }
    }
    if (j.contains("nodes")) {
      const std::string p = child(path, "nodes");
      const Json& list = j.at("nodes");
      if (!list.is_array()) throw ValidationError(p + ": expected an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string q = child(p, i);
        only_keys(list[i], q, {"node", "mean", "stddev"});
        const int id = node_index(need(list[i], q, "node"), child(q, "node"), n);
        load.mean(id) = as_double(need(list[i], q, "mean"), child(q, "mean"));
        load.stddev(id) = get_or(list[i], q, "stddev", 0.0);
        has[static_cast<std::size_t>(id)] = true;
      }
    }
    for (int c : topology.consumers())
      if (!has[static_cast<std::size_t>(c)])
        throw ValidationError(path + ": consumer node " + std::to_string(c) + " has no load");
  }
  try {
    load.validate(topology);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return load;
}

inline CostSpec parse_costs(const Json& j, const std::string& path, std::size_t m) {
  CostSpec c;
  if (j.is_null()) return c;
  only_keys(j, path, {"rule", "price", "charge", "alpha", "beta", "lambda"});
  c.lambda = get_or(j, path, "lambda", 1.0);
  if (!(c.lambda > 0.0)) throw ValidationError(child(path, "lambda") + ": must be positive");
  const bool explicit_costs = j.contains("alpha") || j.contains("beta");
  if (explicit_costs) {
    if (j.contains("rule") || j.contains("price") || j.contains("charge"))
      throw ValidationError(path + ": give either a cost rule or explicit alpha/beta, not both");
    c.rule = false;
    c.alpha = as_vector(need(j, path, "alpha"), child(path, "alpha"), m);
    c.beta = as_vector(need(j, path, "beta"), child(path, "beta"), m);
    return c;
  }
  if (j.contains("rule")) {
    const auto r = as_string(j.at("rule"), child(path, "rule"));
    if (r != "copper") throw ValidationError(child(path, "rule") + ": unknown cost rule '" + r + "' (expected copper)");
  }
  c.price = get_or(j, path, "price", 1.0);
  c.charge = get_or(j, path, "charge", 1.0);
  if (c.price < 0.0 || c.charge < 0.0) throw ValidationError(path + ": price and charge must be >= 0");
  return c;
}

inline BarrierSettings parse_barrier(const Json& j, const std::string& path) {
  BarrierSettings b;
  if (j.is_null()) return b;
  only_keys(j, path, {"zeta_init", "zeta_min", "zeta_decay", "newton_tol", "max_newton_iters", "armijo", "shrink",
                      "restart_factor", "max_restarts"});
  b.zeta_init = get_or(j, path, "zeta_init", b.zeta_init);
  b.zeta_min = get_or(j, path, "zeta_min", b.zeta_min);
  b.zeta_decay = get_or(j, path, "zeta_decay", b.zeta_decay);
  b.newton_tol = get_or(j, path, "newton_tol", b.newton_tol);
  b.max_newton_iters = get_or(j, path, "max_newton_iters", b.max_newton_iters);
  b.armijo = get_or(j, path, "armijo", b.armijo);
  b.shrink = get_or(j, path, "shrink", b.shrink);
  b.restart_factor = get_or(j, path, "restart_factor", b.restart_factor);
  b.max_restarts = get_or(j, path, "max_restarts", b.max_restarts);
  try {
    b.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return b;
}

inline std::optional<double> optional_double(const Json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return as_double(j.at(key), child(path, key));
}

inline AnnealSchedule parse_anneal(const Json& j, const std::string& path) {
  AnnealSchedule a;
  if (j.is_null()) return a;
  only_keys(j, path, {"gamma_init", "gamma_decay", "gamma_min", "perturbation", "mm_tol", "max_mm_iters",
                      "max_perturbations_per_stage", "prune_ratio"});
  a.gamma_init = optional_double(j, path, "gamma_init");
  a.gamma_min = optional_double(j, path, "gamma_min");
  a.gamma_decay = get_or(j, path, "gamma_decay", a.gamma_decay);
  a.perturbation = get_or(j, path, "perturbation", a.perturbation);
  a.mm_tol = get_or(j, path, "mm_tol", a.mm_tol);
  a.max_mm_iters = get_or(j, path, "max_mm_iters", a.max_mm_iters);
  a.max_perturbations_per_stage = get_or(j, path, "max_perturbations_per_stage", a.max_perturbations_per_stage);
  a.prune_ratio = get_or(j, path, "prune_ratio", a.prune_ratio);
  try {
    a.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return a;
}

inline FailableEdges parse_failable(const std::string& s, const std::string& path) {
  if (s == "lines") return FailableEdges::lines;
  if (s == "virtual_lines") return FailableEdges::virtual_lines;
  if (s == "all") return FailableEdges::all;
  throw ValidationError(path + ": unknown failable set '" + s + "' (expected lines, virtual_lines or all)");
}

inline RobustSettings parse_robust(const Json& j, const std::string& path) {
  RobustSettings r;
  if (j.is_null()) return r;
  only_keys(j, path, {"k", "tau", "failable"});
  r.k = get_or(j, path, "k", r.k);
  r.tau = get_or(j, path, "tau", r.tau);
  if (j.contains("failable"))
    r.failable = parse_failable(as_string(j.at("failable"), child(path, "failable")), child(path, "failable"));
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return r;
}

}  // namespace detail

/// Builds a scenario from parsed JSON. Field errors name the JSON pointer.
inline ScenarioFile scenario_from_json(const Json& j) {
  using namespace detail;
  const std::string root;
  only_keys(j, "/", {"schema_version", "name", "seed", "mode", "topology", "roles", "loads", "costs", "barrier",
                     "anneal", "robust"});
  ScenarioFile s;
  s.schema_version = static_cast<int>(as_int(need(j, root, "schema_version"), "/schema_version"));
  if (s.schema_version != kScenarioSchemaVersion)
    throw ValidationError("/schema_version: unsupported version " + std::to_string(s.schema_version));
  s.name = j.contains("name") ? as_string(j.at("name"), "/name") : "scenario";
  if (j.contains("seed")) {
    const auto seed = as_int(j.at("seed"), "/seed");
    if (seed < 0) throw ValidationError("/seed: must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
  }
  s.mode = j.contains("mode") ? parse_mode(as_string(j.at("mode"), "/mode"), "/mode") : DesignMode::sparse;

  const auto bare = parse_topology(need(j, root, "topology"), "/topology", s.grid);
  const auto roles = parse_roles(need(j, root, "roles"), "/roles", bare.node_count());
  s.topology = bare.with_roles(roles);
  s.load = parse_loads(need(j, root, "loads"), "/loads", s.topology);
  s.cost_spec = parse_costs(j.value("costs", Json()), "/costs", s.topology.edge_count());
  try {
    s.cost_spec.resolve(s.topology);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("/costs: ") + e.what());
  }
  s.barrier = parse_barrier(j.value("barrier", Json()), "/barrier");
  s.anneal = parse_anneal(j.value("anneal", Json()), "/anneal");
  s.anneal.seed = s.seed;
  s.robust = parse_robust(j.value("robust", Json()), "/robust");
  if (s.topology.generators().empty()) throw ValidationError("/roles: at least one generator is required");
  return s;
}

/// Parses scenario text; syntax errors report line and column.
inline ScenarioFile parse_scenario_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

inline ScenarioFile parse_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_scenario_text(text.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

namespace detail {

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

/// Canonical form: every setting explicit, roles and loads per node.
inline Json scenario_to_json(const ScenarioFile& s) {
  Json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["mode"] = to_string(s.mode);
  if (s.grid) {
    j["topology"] = {{"grid", {{"w", s.grid->w}, {"diagonals", s.grid->diagonals}}}};
  } else {
    Json nodes = Json::array(), edges = Json::array();
    for (const auto& n : s.topology.nodes()) nodes.push_back({{"x", n.position.x}, {"y", n.position.y}});
    for (const auto& e : s.topology.edges()) edges.push_back({{"u", e.u}, {"v", e.v}, {"length", e.length}});
    j["topology"] = {{"nodes", nodes}, {"edges", edges}};
  }
  Json roles = Json::array();
  for (const auto& n : s.topology.nodes()) roles.push_back(to_string(n.role));
  j["roles"] = roles;
  j["loads"] = {{"mean", detail::vector_json(s.load.mean)}, {"stddev", detail::vector_json(s.load.stddev)}};
  if (s.cost_spec.rule)
    j["costs"] = {{"rule", "copper"}, {"price", s.cost_spec.price}, {"charge", s.cost_spec.charge},
                  {"lambda", s.cost_spec.lambda}};
  else
    j["costs"] = {{"alpha", detail::vector_json(s.cost_spec.alpha)},
                  {"beta", detail::vector_json(s.cost_spec.beta)},
                  {"lambda", s.cost_spec.lambda}};
  const auto& b = s.barrier;
  j["barrier"] = {{"zeta_init", b.zeta_init}, {"zeta_min", b.zeta_min}, {"zeta_decay", b.zeta_decay},
                  {"newton_tol", b.newton_tol}, {"max_newton_iters", b.max_newton_iters}, {"armijo", b.armijo},
                  {"shrink", b.shrink}, {"restart_factor", b.restart_factor}, {"max_restarts", b.max_restarts}};
  const auto& a = s.anneal;
  j["anneal"] = {{"gamma_init", a.gamma_init ? Json(*a.gamma_init) : Json()},
                 {"gamma_min", a.gamma_min ? Json(*a.gamma_min) : Json()},
                 {"gamma_decay", a.gamma_decay},
                 {"perturbation", a.perturbation},
                 {"mm_tol", a.mm_tol},
                 {"max_mm_iters", a.max_mm_iters},
                 {"max_perturbations_per_stage", a.max_perturbations_per_stage},
                 {"prune_ratio", a.prune_ratio}};
  j["robust"] = {{"k", s.robust.k}, {"tau", s.robust.tau}, {"failable", to_string(s.robust.failable)}};
  return j;
}

inline std::string serialize_scenario(const ScenarioFile& s) { return to_json_string(scenario_to_json(s)); }

}  // namespace netdesign::io
