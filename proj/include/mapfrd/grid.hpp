#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mapfrd {

using CellId = int;
using AgentId = int;

// Thrown for malformed map/scen/instance text. `line()` is 1-based, 0 if unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line);
  int line() const { return line_; }

 private:
  int line_;
};

enum class Heading : std::uint8_t { East = 0, North = 1, West = 2, South = 3 };

// y grows downward (MovingAI row order), so North is y - 1.
int heading_dx(Heading h);
int heading_dy(Heading h);
// Signed quarter turns from `from` to `to`, in {-1, 0, 1, 2}; +1 is counter-clockwise.
int quarter_turns(Heading from, Heading to);
const char* heading_name(Heading h);

class GridMap {
 public:
  GridMap() = default;
  // All cells unblocked.
  GridMap(int width, int height, double cell_size = 1.0);
  // `terrain` holds the raw MovingAI character per cell, row-major.
  GridMap(int width, int height, std::vector<char> terrain, std::string type = "octile",
          double cell_size = 1.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ * height_; }
  double cell_size() const { return cell_size_; }
  void set_cell_size(double meters) { cell_size_ = meters; }
  const std::string& type() const { return type_; }

  CellId cell(int x, int y) const { return y * width_ + x; }
  int x_of(CellId c) const { return c % width_; }
  int y_of(CellId c) const { return c / width_; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool blocked(CellId c) const { return blocked_[static_cast<std::size_t>(c)] != 0; }
  bool blocked(int x, int y) const { return blocked(cell(x, y)); }
  char terrain(CellId c) const { return terrain_[static_cast<std::size_t>(c)]; }
  int blocked_count() const;

  // Unblocked 4-neighbors in fixed order East, North, West, South.
  std::vector<CellId> neighbors(CellId c) const;
  std::optional<CellId> step(CellId c, Heading h) const;
  int manhattan(CellId a, CellId b) const;
  // Direction of a unit move from `a` to the adjacent cell `b`.
  Heading direction(CellId a, CellId b) const;

  // BFS distances (cells) from `source`; -1 where unreachable.
  std::vector<int> distances_from(CellId source) const;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 1.0;
  std::string type_ = "octile";
  std::vector<char> terrain_;
  std::vector<std::uint8_t> blocked_;
};

// Kinodynamic limits of every robot. Angular limit in degrees per second.
struct KinodynLimits {
  double v_max = 5.0;
  double a_min = -0.1;
  double a_max = 0.1;
  double omega_max_deg = 3.0;

  void validate() const;
};

struct AgentTask {
  CellId start = 0;
  CellId goal = 0;
  // nullopt: face the first move direction.
  std::optional<Heading> initial_heading;
};

struct GridInstance {
  GridMap map;
  std::vector<AgentTask> agents;
  std::vector<double> deadlines;  // seconds, one per agent once generated
  std::uint64_t seed = 0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

struct StartGoal {
  CellId start;
  CellId goal;
};

GridMap parse_map(std::string_view text);
std::string serialize_map(const GridMap& map);
GridMap load_map_file(const std::string& path);

// First `count` entries of a MovingAI .scen v1 file, validated against `map`.
std::vector<StartGoal> parse_scen(std::string_view text, const GridMap& map, int count);
std::vector<StartGoal> load_scen_file(const std::string& path, const GridMap& map, int count);

GridMap make_empty_map(int width, int height);
// Random obstacles with the given density, keeping the free space 4-connected.
GridMap make_random_map(int width, int height, double density, std::uint64_t seed);

// Distinct starts and distinct goals drawn from free cells of the largest component.
GridInstance random_instance(const GridMap& map, int num_agents, std::uint64_t seed);
GridInstance make_instance(const GridMap& map, std::span<const StartGoal> pairs, std::uint64_t seed);

// Lower-bound travel time: shortest path length * cell size / v_max.
double lower_bound_time(const GridMap& map, const AgentTask& task, const KinodynLimits& limits);

// T_i = lower_bound_time_i * u_i, u_i ~ Uniform[k_d, k_d + width], drawn in agent order.
std::vector<double> generate_deadlines(const GridInstance& instance, double k_d,
                                       const KinodynLimits& limits, std::uint64_t seed,
                                       double width = 3.0);

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CalibrationResult {
  double k_d = 0.0;
  std::vector<double> candidates;
  std::vector<double> miss_rates;
};

// Picks the candidate whose miss rate is nearest 0.5 (ties: smaller candidate).
CalibrationResult calibrate_kd(std::span<const double> candidates,
                               const std::function<double(double)>& miss_rate);

// Line format: `agent_id start_x start_y goal_x goal_y deadline_s`, '#' comments.
std::string serialize_instance(const GridInstance& instance);
// Reads agents and deadlines onto `map`.
GridInstance parse_instance(std::string_view text, const GridMap& map);

}  // namespace mapfrd
