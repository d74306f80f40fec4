#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mapfrd/grid.hpp"

namespace mapfrd {

// One cell per timestep; consecutive cells equal (wait) or 4-adjacent.
struct GridPath {
  AgentId agent = 0;
  std::vector<CellId> vertices;

  int arrival() const { return static_cast<int>(vertices.size()) - 1; }
  // Goal-resting position at any timestep.
  CellId at(int t) const {
    return t < static_cast<int>(vertices.size()) ? vertices[static_cast<std::size_t>(t)] : vertices.back();
  }
  bool operator==(const GridPath&) const = default;
};

enum class ActionKind : std::uint8_t { MoveForward = 0, Rotate = 1, Wait = 2 };
const char* action_kind_name(ActionKind k);

struct Action {
  ActionKind kind = ActionKind::Wait;
  CellId from = 0;
  CellId to = 0;
  int timestep = 0;     // planned departure timestep
  int quarter_turns = 0;  // Rotate only: signed, +1 = 90 deg counter-clockwise, 2 = 180 deg
  Heading heading = Heading::East;  // heading once the action is done

  double rotation_degrees() const { return 90.0 * std::abs(quarter_turns); }
  bool operator==(const Action&) const = default;
};

struct ActionPath {
  AgentId agent = 0;
  std::vector<Action> actions;
};

enum class ConstraintKind : std::uint8_t { Vertex, Edge, VertexFrom };

// Vertex: agent may not be at `cell` at `timestep`.
// Edge: agent may not move `cell` -> `to` departing at `timestep`.
// VertexFrom: agent may not be at `cell` at `timestep` or any later step.
struct Constraint {
  AgentId agent = 0;
  ConstraintKind kind = ConstraintKind::Vertex;
  CellId cell = 0;
  CellId to = 0;
  int timestep = 0;
  bool operator==(const Constraint&) const = default;
};

// Blocked space-time resources for one searching agent: its own constraints plus
// reservations made by other agents' paths.
class ConstraintTable {
 public:
  explicit ConstraintTable(int num_cells) : num_cells_(num_cells), permanent_from_(static_cast<std::size_t>(num_cells), kNever), last_block_(static_cast<std::size_t>(num_cells), -1) {}

  void add(const Constraint& c);
  // Occupies every (cell, t) of `path` and its goal from arrival on; forbids swaps and
  // moves that would close a rotation cycle with reserved agents.
  void reserve(const GridPath& path);

  bool vertex_blocked(CellId c, int t) const;
  bool move_blocked(CellId from, CellId to, int t) const;
  // Whether the agent can stay at `c` from `t` onward forever.
  bool can_rest(CellId c, int t) const;
  // Last timestep mentioned by any finite block.
  int max_time() const { return max_time_; }

 private:
  static constexpr int kNever = 1 << 30;
  std::int64_t vkey(CellId c, int t) const { return static_cast<std::int64_t>(t) * num_cells_ + c; }
  std::int64_t ekey(CellId from, CellId to, int t) const {
    return (static_cast<std::int64_t>(t) * num_cells_ + from) * num_cells_ + to;
  }

  int num_cells_;
  std::unordered_set<std::int64_t> vertex_;
  std::unordered_set<std::int64_t> edge_;
  std::unordered_map<std::int64_t, CellId> movers_;  // (cell, t) -> cell entered at t + 1
  std::vector<int> permanent_from_;
  std::vector<int> last_block_;
  int max_time_ = -1;
};

struct SearchOptions {
  // Timesteps; <= 0 means width * height.
  int horizon = 0;
  // Heading before the first move; used for the turn-count tie-break only.
  std::optional<Heading> initial_heading;
  // Other agents' paths; among earliest-arrival paths, fewer vertex/swap collisions with
  // these win before the turn tie-break. Must outlive the call.
  std::span<const GridPath> avoid;
};

// Space-time A*: earliest arrival, then fewest collisions with `avoid`, then fewest
// direction changes, then smaller cell index.
// nullopt when the goal cannot be reached within the horizon.
std::optional<GridPath> shortest_path(const GridMap& map, CellId start, CellId goal,
                                      const ConstraintTable& table, const SearchOptions& options = {});
std::optional<GridPath> shortest_path(const GridMap& map, CellId start, CellId goal,
                                      std::span<const Constraint> constraints, int horizon = 0);

int count_direction_changes(const GridMap& map, const GridPath& path);

ActionPath expand_actions(const GridMap& map, const GridPath& path, std::optional<Heading> initial_heading);
// Cells occupied per timestep, reconstructed from MoveForward/Wait actions.
std::vector<CellId> project_cells(const ActionPath& path, CellId start);

enum class ConflictKind : std::uint8_t { Vertex, Edge };

// Vertex: both at `cell` at `timestep`. Edge: agent_a moves cell -> other_cell and
// agent_b moves other_cell -> cell, both departing at `timestep`.
struct Conflict {
  AgentId agent_a = 0;
  AgentId agent_b = 0;
  ConflictKind kind = ConflictKind::Vertex;
  CellId cell = 0;
  CellId other_cell = 0;
  int timestep = 0;
  bool operator==(const Conflict&) const = default;
};

// Every vertex and swap conflict, ordered by (timestep, kind, agent_a, agent_b).
std::vector<Conflict> detect_conflicts(std::span<const GridPath> paths);
std::vector<Conflict> detect_conflicts(std::span<const GridPath> paths, int max_conflicts);

// Three or more agents moving around a cell cycle in the same timestep, each entering the
// cell the next one vacates. Not a vertex/edge conflict, but no agent can go first, so the
// plan's dependency graph deadlocks.
struct Rotation {
  int timestep = 0;
  std::vector<AgentId> agents;  // cycle order, smallest id first
  std::vector<CellId> cells;    // cells[i] = where agents[i] departs from
  bool operator==(const Rotation&) const = default;
};

std::vector<Rotation> detect_rotations(std::span<const GridPath> paths);

struct Plan {
  std::vector<GridPath> paths;
  std::vector<ActionPath> actions;

  int num_agents() const { return static_cast<int>(paths.size()); }
  int sum_of_costs() const;
  int makespan() const;
};

// Expands every path with the instance's initial headings.
Plan make_plan(const GridInstance& instance, std::vector<GridPath> paths);

}  // namespace mapfrd
