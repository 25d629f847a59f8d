#pragma once

// Edge-connectivity certificate: does every consumer keep a path to a
// generator after any k failures among the failable edges? Equivalent (Menger)
// to a max-flow of at least k+1 with unit capacity on failable edges and
// unbounded capacity on the rest.

#include <algorithm>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "netdesign/errors.hpp"
#include "netdesign/network_model.hpp"

namespace netdesign {

struct ConnectivityCertificate {
  bool certified = true;
  std::optional<int> violating_consumer;
  std::vector<int> cut_edges;  // a minimum cut separating the witness from generation
};

namespace detail {

class UnitFlow {
 public:
  explicit UnitFlow(int nodes) : head_(static_cast<std::size_t>(nodes), -1) {}

  void add_undirected(int u, int v, int capacity, int edge_id) {
    add_arc(u, v, capacity, edge_id);
    add_arc(v, u, capacity, edge_id);
  }
  void add_directed(int u, int v, int capacity) {
    add_arc(u, v, capacity, -1);
    add_arc(v, u, 0, -1);
  }

  // Augments along BFS paths until `limit` units are pushed or no path is left.
  int max_flow(int s, int t, int limit) {
    for (auto& a : arcs_) a.flow = 0;
    int flow = 0;
    while (flow < limit) {
      std::vector<int> via(head_.size(), -1);
      std::vector<bool> seen(head_.size(), false);
      std::queue<int> q;
      q.push(s);
      seen[static_cast<std::size_t>(s)] = true;
      while (!q.empty() && !seen[static_cast<std::size_t>(t)]) {
        const int x = q.front();
        q.pop();
        for (int a = head_[static_cast<std::size_t>(x)]; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
          const auto& arc = arcs_[static_cast<std::size_t>(a)];
          if (seen[static_cast<std::size_t>(arc.to)] || residual(a) <= 0) continue;
          seen[static_cast<std::size_t>(arc.to)] = true;
          via[static_cast<std::size_t>(arc.to)] = a;
          q.push(arc.to);
        }
      }
      if (!seen[static_cast<std::size_t>(t)]) break;
      int push = limit - flow;
      for (int x = t; x != s; x = arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(x)] ^ 1)].to)
        push = std::min(push, residual(via[static_cast<std::size_t>(x)]));
      for (int x = t; x != s; x = arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(x)] ^ 1)].to) {
        arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(x)])].flow += push;
        arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(x)] ^ 1)].flow -= push;
      }
      flow += push;
    }
    return flow;
  }

  // Edge ids crossing from the residual-reachable side of s; call after max_flow.
  std::vector<int> min_cut(int s) const {
    std::vector<bool> seen(head_.size(), false);
    std::queue<int> q;
    q.push(s);
    seen[static_cast<std::size_t>(s)] = true;
    while (!q.empty()) {
      const int x = q.front();
      q.pop();
      for (int a = head_[static_cast<std::size_t>(x)]; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
        const auto& arc = arcs_[static_cast<std::size_t>(a)];
        if (!seen[static_cast<std::size_t>(arc.to)] && residual(a) > 0) {
          seen[static_cast<std::size_t>(arc.to)] = true;
          q.push(arc.to);
        }
      }
    }
    std::vector<int> cut;
    for (std::size_t a = 0; a < arcs_.size(); ++a) {
      const auto& arc = arcs_[a];
      const int from = arcs_[a ^ 1].to;
      if (arc.edge >= 0 && arc.capacity > 0 && seen[static_cast<std::size_t>(from)] &&
          !seen[static_cast<std::size_t>(arc.to)])
        cut.push_back(arc.edge);
    }
    std::sort(cut.begin(), cut.end());
    cut.erase(std::unique(cut.begin(), cut.end()), cut.end());
    return cut;
  }

 private:
  struct Arc {
    int to, capacity, flow, edge, next;
  };
  int residual(int a) const {
    const auto& arc = arcs_[static_cast<std::size_t>(a)];
    return arc.capacity - arc.flow;
  }
  // Undirected edges are stored as two arcs, each the other's reverse (index ^ 1).
  void add_arc(int u, int v, int capacity, int edge) {
    arcs_.push_back({v, capacity, 0, edge, head_[static_cast<std::size_t>(u)]});
    head_[static_cast<std::size_t>(u)] = static_cast<int>(arcs_.size()) - 1;
  }

  std::vector<int> head_;
  std::vector<Arc> arcs_;
};

}  // namespace detail

/// `active` selects built edges (empty = all); `failable` selects edges that
/// may fail (empty = all active edges). Generation is the virtual generator
/// when present, otherwise any generator.
inline ConnectivityCertificate connectivity_certify(const NetworkTopology& topology, std::vector<bool> active, int k,
                                                    std::vector<bool> failable = {}) {
  if (k < 0) throw ValidationError("connectivity_certify: k must be >= 0");
  const auto m = static_cast<std::size_t>(topology.edge_count());
  if (active.empty()) active.assign(m, true);
  if (failable.empty()) failable.assign(m, true);
  if (active.size() != m || failable.size() != m) throw ValidationError("connectivity_certify: mask size mismatch");

  const int n = topology.node_count();
  const int sink = n;
  constexpr int kUnbounded = std::numeric_limits<int>::max() / 4;
  detail::UnitFlow flow(n + 1);
  for (const auto& e : topology.edges())
    if (active[static_cast<std::size_t>(e.id)])
      flow.add_undirected(e.u, e.v, failable[static_cast<std::size_t>(e.id)] ? 1 : kUnbounded, e.id);
  if (auto v = topology.virtual_generator()) {
    flow.add_directed(*v, sink, kUnbounded);
  } else {
    for (int g : topology.generators()) flow.add_directed(g, sink, kUnbounded);
  }

  ConnectivityCertificate cert;
  for (int c : topology.consumers()) {
    if (flow.max_flow(c, sink, k + 1) >= k + 1) continue;
    cert.certified = false;
    cert.violating_consumer = c;
    cert.cut_edges = flow.min_cut(c);
    break;
  }
  return cert;
}

}  // namespace netdesign
