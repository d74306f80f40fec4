#include "mapfrd/single_agent.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace mapfrd {

const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::MoveForward: return "move";
    case ActionKind::Rotate: return "rotate";
    case ActionKind::Wait: return "wait";
  }
  return "?";
}

void ConstraintTable::add(const Constraint& c) {
  if (c.kind == ConstraintKind::Vertex) {
    vertex_.insert(vkey(c.cell, c.timestep));
    last_block_[static_cast<std::size_t>(c.cell)] = std::max(last_block_[static_cast<std::size_t>(c.cell)], c.timestep);
  } else if (c.kind == ConstraintKind::VertexFrom) {
    auto& from = permanent_from_[static_cast<std::size_t>(c.cell)];
    from = std::min(from, c.timestep);
  } else {
    edge_.insert(ekey(c.cell, c.to, c.timestep));
  }
  max_time_ = std::max(max_time_, c.timestep);
}

void ConstraintTable::reserve(const GridPath& path) {
  const int arrival = path.arrival();
  for (int t = 0; t < arrival; ++t) {
    CellId c = path.vertices[static_cast<std::size_t>(t)];
    CellId n = path.vertices[static_cast<std::size_t>(t + 1)];
    vertex_.insert(vkey(c, t));
    last_block_[static_cast<std::size_t>(c)] = std::max(last_block_[static_cast<std::size_t>(c)], t);
    if (c != n) {
      edge_.insert(ekey(n, c, t));
      movers_[vkey(c, t)] = n;
    }
  }
  CellId goal = path.vertices.back();
  permanent_from_[static_cast<std::size_t>(goal)] = std::min(permanent_from_[static_cast<std::size_t>(goal)], arrival);
  max_time_ = std::max(max_time_, arrival);
}

bool ConstraintTable::vertex_blocked(CellId c, int t) const {
  if (t >= permanent_from_[static_cast<std::size_t>(c)]) return true;
  return vertex_.count(vkey(c, t)) != 0;
}

bool ConstraintTable::move_blocked(CellId from, CellId to, int t) const {
  if (edge_.count(ekey(from, to, t))) return true;
  // Follow the reserved agents vacating cells at t; reaching `from` closes a rotation.
  CellId cur = to;
  for (std::size_t hops = 0; hops <= movers_.size(); ++hops) {
    auto it = movers_.find(vkey(cur, t));
    if (it == movers_.end()) return false;
    cur = it->second;
    if (cur == from) return true;
  }
  return false;
}

bool ConstraintTable::can_rest(CellId c, int t) const {
  if (permanent_from_[static_cast<std::size_t>(c)] != kNever) return false;
  return last_block_[static_cast<std::size_t>(c)] < t;
}

namespace {

constexpr int kNoDir = 4;

struct Node {
  CellId cell;
  int t;
  int dir;
  int turns;
  int f;
  int parent;
  int collisions = 0;
};

// Min-heap order: f, collisions, turns, cell, t, dir.
struct NodeOrder {
  const std::vector<Node>* pool;
  bool operator()(int a, int b) const {
    const Node& x = (*pool)[static_cast<std::size_t>(a)];
    const Node& y = (*pool)[static_cast<std::size_t>(b)];
    return std::tie(x.f, x.collisions, x.turns, x.cell, x.t, x.dir) >
           std::tie(y.f, y.collisions, y.turns, y.cell, y.t, y.dir);
  }
};

// Occupancy of the paths to avoid, goal-resting included.
class CollisionTable {
 public:
  CollisionTable(const GridMap& map, std::span<const GridPath> paths) : cells_(map.size()) {
    for (const auto& p : paths) {
      for (int t = 0; t <= p.arrival(); ++t) {
        ++vertex_[key(p.at(t), t)];
        if (t < p.arrival() && p.at(t) != p.at(t + 1)) ++edge_[ekey(p.at(t), p.at(t + 1), t)];
      }
      resting_.emplace_back(p.vertices.back(), p.arrival());
    }
  }

  bool empty() const { return resting_.empty(); }

  // Collisions caused by moving from -> to departing at t.
  int count(CellId from, CellId to, int t) const {
    int n = 0;
    if (auto it = vertex_.find(key(to, t + 1)); it != vertex_.end()) n += it->second;
    for (const auto& [cell, arrival] : resting_) n += cell == to && arrival < t + 1;
    if (from != to) {
      if (auto it = edge_.find(ekey(to, from, t)); it != edge_.end()) n += it->second;
    }
    return n;
  }

 private:
  std::int64_t key(CellId c, int t) const { return static_cast<std::int64_t>(t) * cells_ + c; }
  std::int64_t ekey(CellId a, CellId b, int t) const { return (static_cast<std::int64_t>(t) * cells_ + a) * cells_ + b; }

  std::int64_t cells_;
  std::unordered_map<std::int64_t, int> vertex_;
  std::unordered_map<std::int64_t, int> edge_;
  std::vector<std::pair<CellId, int>> resting_;
};

}  // namespace

std::optional<GridPath> shortest_path(const GridMap& map, CellId start, CellId goal, const ConstraintTable& table,
                                      const SearchOptions& options) {
  if (map.blocked(start) || map.blocked(goal)) throw std::invalid_argument("start or goal is blocked");
  int horizon = options.horizon > 0 ? options.horizon : map.width() * map.height();
  horizon = std::max(horizon, table.max_time() + 1);
  if (table.vertex_blocked(start, 0)) return std::nullopt;

  std::vector<Node> pool;
  pool.reserve(1024);
  std::priority_queue<int, std::vector<int>, NodeOrder> open(NodeOrder{&pool});
  const CollisionTable avoid(map, options.avoid);
  // Exact obstacle-aware distances; admissible and far tighter than Manhattan on cluttered maps.
  const std::vector<int> h = map.distances_from(goal);
  if (h[static_cast<std::size_t>(start)] < 0) return std::nullopt;
  // (cell, t, dir) -> best (collisions, turns) seen; closed once popped.
  std::unordered_map<std::int64_t, std::pair<int, int>> best;
  std::unordered_set<std::int64_t> closed;
  // Past every finite constraint and avoided path everything is static: a later visit to
  // the same (cell, heading) cannot arrive sooner, so those states share one key.
  int settle = table.max_time() + 1;
  for (const auto& p : options.avoid) settle = std::max(settle, p.arrival() + 1);
  auto key = [&](CellId c, int t, int d) {
    return (static_cast<std::int64_t>(std::min(t, settle)) * map.size() + c) * 5 + d;
  };

  int start_dir = options.initial_heading ? static_cast<int>(*options.initial_heading) : kNoDir;
  pool.push_back({start, 0, start_dir, 0, h[static_cast<std::size_t>(start)], -1});
  best[key(start, 0, start_dir)] = {0, 0};
  open.push(0);

  while (!open.empty()) {
    int idx = open.top();
    open.pop();
    const Node cur = pool[static_cast<std::size_t>(idx)];
    auto k = key(cur.cell, cur.t, cur.dir);
    if (!closed.insert(k).second) continue;

    if (cur.cell == goal && table.can_rest(goal, cur.t)) {
      GridPath path;
      for (int i = idx; i >= 0; i = pool[static_cast<std::size_t>(i)].parent) {
        path.vertices.push_back(pool[static_cast<std::size_t>(i)].cell);
      }
      std::reverse(path.vertices.begin(), path.vertices.end());
      return path;
    }
    if (cur.t >= horizon) continue;

    const int nt = cur.t + 1;
    auto relax = [&](CellId next, int dir, int turns) {
      if (table.vertex_blocked(next, nt)) return;
      if (next != cur.cell && table.move_blocked(cur.cell, next, cur.t)) return;
      auto nk = key(next, nt, dir);
      if (closed.count(nk)) return;
      const int collisions = cur.collisions + (avoid.empty() ? 0 : avoid.count(cur.cell, next, cur.t));
      const std::pair<int, int> cost{collisions, turns};
      auto it = best.find(nk);
      if (it != best.end() && it->second <= cost) return;
      best[nk] = cost;
      pool.push_back({next, nt, dir, turns, nt + h[static_cast<std::size_t>(next)], idx, collisions});
      open.push(static_cast<int>(pool.size()) - 1);
    };

    for (Heading h : {Heading::East, Heading::North, Heading::West, Heading::South}) {
      auto next = map.step(cur.cell, h);
      if (!next) continue;
      int d = static_cast<int>(h);
      int turns = cur.turns + ((cur.dir != kNoDir && cur.dir != d) ? 1 : 0);
      relax(*next, d, turns);
    }
    relax(cur.cell, cur.dir, cur.turns);
  }
  return std::nullopt;
}

std::optional<GridPath> shortest_path(const GridMap& map, CellId start, CellId goal,
                                      std::span<const Constraint> constraints, int horizon) {
  ConstraintTable table(map.size());
  for (const auto& c : constraints) table.add(c);
  SearchOptions opts;
  opts.horizon = horizon;
  return shortest_path(map, start, goal, table, opts);
}

int count_direction_changes(const GridMap& map, const GridPath& path) {
  int changes = 0;
  std::optional<Heading> dir;
  for (std::size_t t = 0; t + 1 < path.vertices.size(); ++t) {
    if (path.vertices[t] == path.vertices[t + 1]) continue;
    Heading h = map.direction(path.vertices[t], path.vertices[t + 1]);
    if (dir && *dir != h) ++changes;
    dir = h;
  }
  return changes;
}

ActionPath expand_actions(const GridMap& map, const GridPath& path, std::optional<Heading> initial_heading) {
  ActionPath out;
  out.agent = path.agent;
  std::optional<Heading> heading = initial_heading;
  for (std::size_t t = 0; t + 1 < path.vertices.size(); ++t) {
    CellId from = path.vertices[t];
    CellId to = path.vertices[t + 1];
    const int ts = static_cast<int>(t);
    if (from == to) {
      out.actions.push_back({ActionKind::Wait, from, to, ts, 0, heading.value_or(Heading::East)});
      continue;
    }
    Heading h = map.direction(from, to);
    if (heading && *heading != h) {
      out.actions.push_back({ActionKind::Rotate, from, from, ts, quarter_turns(*heading, h), h});
    }
    heading = h;
    out.actions.push_back({ActionKind::MoveForward, from, to, ts, 0, h});
  }
  // Waits before the first move take the heading the agent ends up facing.
  if (!initial_heading) {
    Heading first = Heading::East;
    for (const auto& a : out.actions) {
      if (a.kind != ActionKind::Wait) {
        first = a.heading;
        break;
      }
    }
    for (auto& a : out.actions) {
      if (a.kind != ActionKind::Wait) break;
      a.heading = first;
    }
  }
  return out;
}

std::vector<CellId> project_cells(const ActionPath& path, CellId start) {
  std::vector<CellId> cells{start};
  for (const auto& a : path.actions) {
    if (a.kind == ActionKind::Rotate) continue;
    cells.push_back(a.to);
  }
  return cells;
}

std::vector<Conflict> detect_conflicts(std::span<const GridPath> paths, int max_conflicts) {
  std::vector<Conflict> out;
  int horizon = 0;
  for (const auto& p : paths) horizon = std::max(horizon, p.arrival());
  const int n = static_cast<int>(paths.size());
  std::unordered_map<CellId, std::vector<AgentId>> at_cell;
  std::unordered_map<std::int64_t, AgentId> moves;
  for (int t = 0; t <= horizon; ++t) {
    at_cell.clear();
    for (AgentId a = 0; a < n; ++a) at_cell[paths[static_cast<std::size_t>(a)].at(t)].push_back(a);
    std::vector<Conflict> step;
    for (auto& [cell, agents] : at_cell) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        for (std::size_t j = i + 1; j < agents.size(); ++j) {
          step.push_back({agents[i], agents[j], ConflictKind::Vertex, cell, cell, t});
        }
      }
    }
    if (t < horizon) {
      moves.clear();
      for (AgentId a = 0; a < n; ++a) {
        CellId u = paths[static_cast<std::size_t>(a)].at(t);
        CellId v = paths[static_cast<std::size_t>(a)].at(t + 1);
        if (u == v) continue;
        auto rev = moves.find(static_cast<std::int64_t>(v) << 32 | static_cast<std::uint32_t>(u));
        if (rev != moves.end()) {
          AgentId b = rev->second;
          // agent_a is the smaller id; cell is agent_a's origin
          if (b < a) {
            step.push_back({b, a, ConflictKind::Edge, v, u, t});
          } else {
            step.push_back({a, b, ConflictKind::Edge, u, v, t});
          }
        }
        moves[static_cast<std::int64_t>(u) << 32 | static_cast<std::uint32_t>(v)] = a;
      }
    }
    std::sort(step.begin(), step.end(), [](const Conflict& x, const Conflict& y) {
      return std::tie(x.kind, x.agent_a, x.agent_b) < std::tie(y.kind, y.agent_a, y.agent_b);
    });
    for (auto& c : step) {
      out.push_back(c);
      if (max_conflicts > 0 && static_cast<int>(out.size()) >= max_conflicts) return out;
    }
  }
  return out;
}

std::vector<Conflict> detect_conflicts(std::span<const GridPath> paths) { return detect_conflicts(paths, 0); }

std::vector<Rotation> detect_rotations(std::span<const GridPath> paths) {
  std::vector<Rotation> out;
  int horizon = 0;
  for (const auto& p : paths) horizon = std::max(horizon, p.arrival());
  std::unordered_map<CellId, std::size_t> mover;  // cell -> path index moving out of it
  for (int t = 0; t < horizon; ++t) {
    mover.clear();
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (t < paths[i].arrival() && paths[i].at(t) != paths[i].at(t + 1)) mover[paths[i].at(t)] = i;
    }
    std::unordered_set<std::size_t> seen;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (t >= paths[i].arrival() || paths[i].at(t) == paths[i].at(t + 1) || seen.count(i)) continue;
      std::vector<std::size_t> chain{i};
      std::unordered_set<std::size_t> on_chain{i};
      std::size_t cur = i;
      bool closed = false;
      while (true) {
        auto it = mover.find(paths[cur].at(t + 1));
        if (it == mover.end() || seen.count(it->second)) break;
        if (it->second == i) {
          closed = true;
          break;
        }
        if (!on_chain.insert(it->second).second) break;
        cur = it->second;
        chain.push_back(cur);
      }
      for (auto k : chain) seen.insert(k);
      if (!closed || chain.size() < 3) continue;
      auto first = std::min_element(chain.begin(), chain.end(),
                                    [&](auto a, auto b) { return paths[a].agent < paths[b].agent; });
      std::rotate(chain.begin(), first, chain.end());
      Rotation r;
      r.timestep = t;
      for (auto k : chain) {
        r.agents.push_back(paths[k].agent);
        r.cells.push_back(paths[k].at(t));
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

int Plan::sum_of_costs() const {
  int soc = 0;
  for (const auto& p : paths) soc += p.arrival();
  return soc;
}

int Plan::makespan() const {
  int m = 0;
  for (const auto& p : paths) m = std::max(m, p.arrival());
  return m;
}

Plan make_plan(const GridInstance& instance, std::vector<GridPath> paths) {
  if (paths.size() != instance.agents.size()) throw std::invalid_argument("one path per agent required");
  Plan plan;
  plan.paths = std::move(paths);
  plan.actions.reserve(plan.paths.size());
  for (std::size_t i = 0; i < plan.paths.size(); ++i) {
    plan.paths[i].agent = static_cast<AgentId>(i);
    plan.actions.push_back(expand_actions(instance.map, plan.paths[i], instance.agents[i].initial_heading));
  }
  return plan;
}

}  // namespace mapfrd
