// netdesign: design, verify and grid subcommands over JSON scenario files.
// Exit codes: 0 ok, 1 a verify check failed, 2 invalid input,
// 3 solver did not converge, 4 robustness precondition violated.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netdesign/netdesign.hpp"

namespace fs = std::filesystem;
using namespace netdesign;
using namespace netdesign::io;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

struct DesignArgs {
  std::string scenario;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool svg = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<double> tau;
  bool timings = false;
};

int cmd_design(const DesignArgs& args) {
  ScenarioFile s = parse_scenario(args.scenario);
  if (args.mode) s.mode = parse_mode(*args.mode, "--mode");
  if (args.seed) s.seed = s.anneal.seed = *args.seed;
  if (args.k) s.robust.k = *args.k;
  if (args.tau) s.robust.tau = *args.tau;
  s.robust.validate();

  const auto artifact = run_design(s, RunOptions{args.timings});
  const std::string text = serialize_artifact(artifact);
  if (args.out) {
    const fs::path dir(*args.out);
    fs::create_directories(dir);
    const std::string stem = s.name + "." + to_string(s.mode);
    write_file(dir / (stem + ".json"), text);
    if (args.svg && artifact.status != "error") write_file(dir / (stem + ".svg"), render_svg(artifact.topology, artifact.theta));
    std::cerr << stem << ": " << artifact.status << ", " << std::count(artifact.active.begin(), artifact.active.end(), true)
              << " active edges, total " << format_double(artifact.objective.total) << "\n";
  } else {
    if (args.svg) std::cerr << "--svg needs --out; no figure written\n";
    std::cout << text;
  }
  if (artifact.status == "error") std::cerr << "error: " << artifact.error_message << "\n";
  return artifact.exit_code;
}

int cmd_verify(const std::string& scenario, const std::optional<std::string>& out) {
  const ScenarioFile s = parse_scenario(scenario);
  const auto report = run_verify(s);
  const std::string text = to_json_string(report.report);
  if (out) write_file(*out, text);
  else std::cout << text;
  std::cerr << s.name << ": verify " << (report.passed ? "passed" : "FAILED") << "\n";
  return report.passed ? exit_ok : exit_failed_check;
}

struct GridArgs {
  int w = 9;
  bool diagonals = false;
  std::vector<int> generators{0};
  bool boundary_consumers = false;
  double mean = -1.0;
  double stddev = 1.0 / 3.0;
  std::string mode = "sparse";
  std::string name;
  std::uint64_t seed = 0;
  double price = 1.0;
  double charge = 1.0;
  std::optional<int> max_newton_iters;
  std::optional<int> k;
  std::optional<double> tau;
  std::optional<std::string> failable;
  std::optional<std::string> out;
};

int cmd_grid(const GridArgs& args) {
  if (args.w < 2) throw ValidationError("--w must be >= 2");
  const int n = args.w * args.w;
  std::vector<std::string> roles(static_cast<std::size_t>(n), "consumer");
  if (args.boundary_consumers)
    for (int r = 1; r + 1 < args.w; ++r)
      for (int c = 1; c + 1 < args.w; ++c) roles[static_cast<std::size_t>(r * args.w + c)] = "transmission";
  for (int g : args.generators) {
    if (g < 0 || g >= n) throw ValidationError("--generator " + std::to_string(g) + " is outside the grid");
    roles[static_cast<std::size_t>(g)] = "generator";
  }
  Json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = args.name.empty() ? "grid" + std::to_string(args.w) : args.name;
  j["seed"] = args.seed;
  j["mode"] = args.mode;
  j["topology"] = {{"grid", {{"w", args.w}, {"diagonals", args.diagonals}}}};
  j["roles"] = roles;
  j["loads"] = {{"default", {{"mean", args.mean}, {"stddev", args.stddev}}}};
  j["costs"] = {{"rule", "copper"}, {"price", args.price}, {"charge", args.charge}};
  if (args.max_newton_iters) j["barrier"] = {{"max_newton_iters", *args.max_newton_iters}};
  Json robust = Json::object();
  if (args.k) robust["k"] = *args.k;
  if (args.tau) robust["tau"] = *args.tau;
  if (args.failable) robust["failable"] = *args.failable;
  j["robust"] = robust;
  // Round through the parser so the output is validated and canonical.
  const std::string text = serialize_scenario(scenario_from_json(j));
  if (args.out) write_file(*args.out, text);
  else std::cout << text;
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-optimal power network design"};
  app.require_subcommand(1);

  DesignArgs design;
  auto* d = app.add_subcommand("design", "Design a network for a scenario and write the artifact");
  d->add_option("--scenario", design.scenario, "Scenario JSON file")->required();
  d->add_option("--mode", design.mode, "convex, sparse or robust (overrides the scenario)");
  d->add_option("--out", design.out, "Output directory (artifact printed to stdout otherwise)");
  d->add_flag("--svg", design.svg, "Also write an SVG figure into --out");
  d->add_option("--seed", design.seed, "Seed for perturbations (overrides the scenario)");
  d->add_option("--k", design.k, "Number of simultaneous line failures for robust mode");
  d->add_option("--tau", design.tau, "Soft-max temperature for robust mode");
  d->add_flag("--timings", design.timings, "Record wall-clock time in the artifact");

  std::string verify_scenario;
  std::optional<std::string> verify_out;
  auto* v = app.add_subcommand("verify", "Run the oracle checks on a scenario");
  v->add_option("--scenario", verify_scenario, "Scenario JSON file")->required();
  v->add_option("--out", verify_out, "Report file (stdout otherwise)");

  GridArgs grid;
  auto* g = app.add_subcommand("grid", "Emit a grid scenario");
  g->add_option("--w", grid.w, "Grid width")->required();
  g->add_flag("--diagonals", grid.diagonals, "Add both diagonals in every cell");
  g->add_option("--generator", grid.generators, "Generator node ids (row-major)")->expected(1, -1);
  g->add_flag("--boundary-consumers", grid.boundary_consumers, "Interior nodes are transmission only");
  g->add_option("--mean", grid.mean, "Mean draw at every consumer");
  g->add_option("--stddev", grid.stddev, "Draw standard deviation at every consumer");
  g->add_option("--mode", grid.mode, "Mode recorded in the scenario");
  g->add_option("--name", grid.name, "Scenario name");
  g->add_option("--seed", grid.seed, "Scenario seed");
  g->add_option("--price", grid.price, "Copper rule: alpha per squared length");
  g->add_option("--charge", grid.charge, "Copper rule: beta per length");
  g->add_option("--max-newton-iters", grid.max_newton_iters, "Newton budget per barrier stage");
  g->add_option("--k", grid.k, "Robust mode: simultaneous failures");
  g->add_option("--tau", grid.tau, "Robust mode: soft-max temperature");
  g->add_option("--failable", grid.failable, "Robust mode: lines, virtual_lines or all");
  g->add_option("--out", grid.out, "Output file (stdout otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_validation;
  }

  try {
    if (d->parsed()) return cmd_design(design);
    if (v->parsed()) return cmd_verify(verify_scenario, verify_out);
    return cmd_grid(grid);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const DisconnectedNetwork& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const InfeasibleRobustness& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_infeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  }
}
