#pragma once
// Independent reference computations for the tests. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "mapfrd/adg.hpp"
#include "mapfrd/grid.hpp"
#include "mapfrd/single_agent.hpp"

namespace oracle {

using mapfrd::CellId;

// Earliest arrival by plain BFS over (cell, t); the goal must stay free of vertex
// constraints from arrival on. -1 if none within the horizon.
inline int bfs_arrival(const mapfrd::GridMap& map, CellId s, CellId g,
                       const std::vector<mapfrd::Constraint>& cons, int horizon) {
  auto vblocked = [&](CellId c, int t) {
    for (const auto& k : cons)
      if (k.cell == c && (k.kind == mapfrd::ConstraintKind::Vertex ? k.timestep == t
                          : k.kind == mapfrd::ConstraintKind::VertexFrom && t >= k.timestep))
        return true;
    return false;
  };
  auto eblocked = [&](CellId a, CellId b, int t) {
    for (const auto& k : cons)
      if (k.kind == mapfrd::ConstraintKind::Edge && k.cell == a && k.to == b && k.timestep == t) return true;
    return false;
  };
  int last = -1;
  for (const auto& k : cons)
    if (k.kind == mapfrd::ConstraintKind::Vertex && k.cell == g) last = std::max(last, k.timestep);
  for (const auto& k : cons)
    if (k.kind == mapfrd::ConstraintKind::VertexFrom && k.cell == g) return -1;
  if (vblocked(s, 0)) return -1;
  std::set<std::pair<CellId, int>> seen{{s, 0}};
  std::deque<std::pair<CellId, int>> q{{s, 0}};
  while (!q.empty()) {
    auto [c, t] = q.front();
    q.pop_front();
    if (c == g && t > last) return t;
    if (t >= horizon) continue;
    std::vector<CellId> next{c};
    int x = map.x_of(c), y = map.y_of(c);
    const int dx[4] = {1, 0, -1, 0}, dy[4] = {0, -1, 0, 1};
    for (int d = 0; d < 4; ++d) {
      if (map.in_bounds(x + dx[d], y + dy[d]) && !map.blocked(x + dx[d], y + dy[d]))
        next.push_back(map.cell(x + dx[d], y + dy[d]));
    }
    for (CellId n : next) {
      if (vblocked(n, t + 1) || (n != c && eblocked(c, n, t))) continue;
      if (seen.insert({n, t + 1}).second) q.push_back({n, t + 1});
    }
  }
  return -1;
}

struct ConflictCount {
  int vertex = 0;
  int edge = 0;
};

// Every pair, every timestep, goal-resting included.
inline ConflictCount brute_conflicts(const std::vector<mapfrd::GridPath>& paths) {
  ConflictCount out;
  int horizon = 0;
  for (const auto& p : paths) horizon = std::max(horizon, p.arrival());
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t j = i + 1; j < paths.size(); ++j)
      for (int t = 0; t <= horizon; ++t) {
        if (paths[i].at(t) == paths[j].at(t)) ++out.vertex;
        if (t < horizon && paths[i].at(t) == paths[j].at(t + 1) && paths[i].at(t + 1) == paths[j].at(t) &&
            paths[i].at(t) != paths[i].at(t + 1))
          ++out.edge;
      }
  return out;
}

// Rest-to-rest straight run by explicit time stepping of the bang-bang control law:
// accelerate (or cruise at v_max) until the stopping distance covers what is left, then
// brake until standstill. Error is O(dt).
inline double integrate_run_time(double distance, double accel, double v_max, double dt = 1e-5) {
  double x = 0, v = 0, t = 0;
  bool braking = false;
  while (true) {
    if (!braking && (v + accel * dt) * (v + accel * dt) / (2 * accel) >= distance - x - v * dt) braking = true;
    double a = braking ? -accel : (v < v_max ? accel : 0.0);
    double nv = std::clamp(v + a * dt, 0.0, v_max);
    x += 0.5 * (v + nv) * dt;
    t += dt;
    v = nv;
    if (braking && v <= 0) break;
  }
  return t;
}

// Composite Simpson over [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  double h = (b - a) / n, s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

inline double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// E[(T - d)^2; T > d] from the partial moments E[T^k; T > d] = e^{k mu + k^2 s^2 / 2} Phi((mu + k s^2 - ln d) / s).
inline double quadratic_closed_form(double mu, double s, double d) {
  auto pm = [&](int k) {
    return std::exp(k * mu + 0.5 * k * k * s * s) * phi((mu + k * s * s - std::log(d)) / s);
  };
  return pm(2) - 2 * d * pm(1) + d * d * pm(0);
}

// Finish time of the last node per agent, longest path with per-node durations.
inline std::vector<double> longest_path_arrivals(const mapfrd::Adg& g, const std::vector<double>& dur) {
  const int n = g.num_nodes();
  std::vector<double> finish(static_cast<std::size_t>(n), -1);
  std::function<double(int)> f = [&](int v) -> double {
    if (finish[static_cast<std::size_t>(v)] >= 0) return finish[static_cast<std::size_t>(v)];
    double start = 0;
    for (const auto& e : g.edges)
      if (e.dst == v) start = std::max(start, f(e.src));
    return finish[static_cast<std::size_t>(v)] = start + dur[static_cast<std::size_t>(v)];
  };
  std::vector<double> out;
  for (const auto& nodes : g.agent_nodes) out.push_back(nodes.empty() ? 0.0 : f(nodes.back()));
  return out;
}

// Depth-first reachability: any node that can reach itself.
inline bool has_cycle(const mapfrd::Adg& g) {
  const int n = g.num_nodes();
  for (int s = 0; s < n; ++s) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;
    for (const auto& e : g.edges)
      if (e.src == s) stack.push_back(e.dst);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (v == s) return true;
      if (seen[static_cast<std::size_t>(v)]++) continue;
      for (const auto& e : g.edges)
        if (e.src == v) stack.push_back(e.dst);
    }
  }
  return false;
}

// Every simple-or-waiting path from s to g with arrival <= max_len that ends resting at g
// (may pass g earlier). Callback per path.
inline void enumerate_paths(const mapfrd::GridMap& map, CellId s, CellId g, int max_len,
                            const std::function<void(const std::vector<CellId>&)>& emit) {
  std::vector<CellId> cur{s};
  std::function<void()> rec = [&] {
    // A trailing wait at the goal is the same plan as stopping earlier.
    const bool trailing_wait = cur.size() >= 2 && cur[cur.size() - 2] == g;
    if (cur.back() == g && !trailing_wait) emit(cur);
    if (static_cast<int>(cur.size()) - 1 >= max_len) return;
    CellId c = cur.back();
    std::vector<CellId> next{c};
    for (CellId n : map.neighbors(c)) next.push_back(n);
    for (CellId n : next) {
      cur.push_back(n);
      rec();
      cur.pop_back();
    }
  };
  rec();
}

// Visits per cell from the vertex sequences; consecutive distinct-agent visits give one
// Type2 edge from the leaving move to the entering move.
inline std::set<std::pair<int, int>> type2_edges(const mapfrd::Plan& plan, const mapfrd::Adg& g) {
  struct Visit {
    int arrive, leave;  // leave = -1 when the agent stays
    mapfrd::AgentId agent;
  };
  std::map<CellId, std::vector<Visit>> visits;
  for (const auto& p : plan.paths) {
    int t = 0;
    while (t <= p.arrival()) {
      int u = t;
      while (u < p.arrival() && p.vertices[static_cast<std::size_t>(u + 1)] == p.vertices[static_cast<std::size_t>(t)]) ++u;
      visits[p.vertices[static_cast<std::size_t>(t)]].push_back({t, u < p.arrival() ? u : -1, p.agent});
      t = u + 1;
    }
  }
  auto move_node = [&](mapfrd::AgentId a, int timestep, CellId from, CellId to) {
    for (int id : g.agent_nodes[static_cast<std::size_t>(a)]) {
      const auto& act = g.nodes[static_cast<std::size_t>(id)].action;
      if (act.kind == mapfrd::ActionKind::MoveForward && act.timestep == timestep && act.from == from && act.to == to) return id;
    }
    return -1;
  };
  std::set<std::pair<int, int>> out;
  for (auto& [cell, vs] : visits) {
    std::sort(vs.begin(), vs.end(), [](const Visit& x, const Visit& y) { return x.arrive < y.arrive; });
    for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
      if (vs[i].agent == vs[i + 1].agent) continue;
      const auto& pa = plan.paths[static_cast<std::size_t>(vs[i].agent)];
      const auto& pb = plan.paths[static_cast<std::size_t>(vs[i + 1].agent)];
      int src = move_node(vs[i].agent, vs[i].leave, cell, pa.at(vs[i].leave + 1));
      int dst = move_node(vs[i + 1].agent, vs[i + 1].arrive - 1, pb.at(vs[i + 1].arrive - 1), cell);
      out.insert({src, dst});
    }
  }
  return out;
}

}  // namespace oracle
