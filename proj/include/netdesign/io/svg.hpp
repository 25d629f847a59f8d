#pragma once

// Network figure: edge darkness follows conductance, node dots follow role.
// The virtual generator and its lines are never drawn.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"

namespace netdesign::io {

struct SvgOptions {
  double scale = 40.0;  // pixels per unit of node position
  double margin = 20.0;
  double node_radius = 4.0;
  double stroke_width = 3.0;
  double opacity_exponent = 1.0;  // opacity = (theta / max theta)^exponent
};

namespace detail {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline const char* role_color(NodeRole role) {
  switch (role) {
    case NodeRole::consumer: return "blue";
    case NodeRole::generator: return "red";
    default: return "black";
  }
}

}  // namespace detail

inline std::string render_svg(const NetworkTopology& topology, const ConductanceVector& theta,
                              const SvgOptions& options = {}) {
  if (theta.size() != static_cast<Eigen::Index>(topology.edge_count()))
    throw ValidationError("svg: conductance vector does not match the edge count");
  using detail::num;
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  bool first = true;
  for (const auto& n : topology.nodes()) {
    if (n.role == NodeRole::virtual_generator) continue;
    if (first) {
      min_x = max_x = n.position.x;
      min_y = max_y = n.position.y;
      first = false;
    }
    min_x = std::min(min_x, n.position.x);
    max_x = std::max(max_x, n.position.x);
    min_y = std::min(min_y, n.position.y);
    max_y = std::max(max_y, n.position.y);
  }
  const auto px = [&](double x) { return options.margin + options.scale * (x - min_x); };
  // Flip y so that row 0 sits at the bottom, as in a plot.
  const auto py = [&](double y) { return options.margin + options.scale * (max_y - y); };
  const double width = 2.0 * options.margin + options.scale * (max_x - min_x);
  const double height = 2.0 * options.margin + options.scale * (max_y - min_y);

  double top = 0.0;
  for (const auto& e : topology.edges())
    if (e.kind == EdgeKind::real) top = std::max(top, theta(e.id));

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<g stroke=\"black\" stroke-width=\"" + num(options.stroke_width) + "\" stroke-linecap=\"round\">\n";
  for (const auto& e : topology.edges()) {
    if (e.kind != EdgeKind::real || !(theta(e.id) > 0.0) || !(top > 0.0)) continue;
    const double opacity = std::pow(theta(e.id) / top, options.opacity_exponent);
    const auto& a = topology.node(e.u).position;
    const auto& b = topology.node(e.v).position;
    out += "<line x1=\"" + num(px(a.x)) + "\" y1=\"" + num(py(a.y)) + "\" x2=\"" + num(px(b.x)) + "\" y2=\"" +
           num(py(b.y)) + "\" stroke-opacity=\"" + num(opacity) + "\"/>\n";
  }
  out += "</g>\n<g stroke=\"none\">\n";
  for (const auto& n : topology.nodes()) {
    if (n.role == NodeRole::virtual_generator) continue;
    out += "<circle cx=\"" + num(px(n.position.x)) + "\" cy=\"" + num(py(n.position.y)) + "\" r=\"" +
           num(options.node_radius) + "\" fill=\"" + detail::role_color(n.role) + "\"/>\n";
  }
  out += "</g>\n</svg>\n";
  return out;
}

inline void write_svg(const NetworkTopology& topology, const ConductanceVector& theta, const std::string& path,
                      const SvgOptions& options = {}) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << render_svg(topology, theta, options);
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace netdesign::io
