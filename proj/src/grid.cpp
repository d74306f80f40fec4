#include "mapfrd/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "mapfrd/util.hpp"

namespace mapfrd {

ParseError::ParseError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

int heading_dx(Heading h) {
  switch (h) {
    case Heading::East: return 1;
    case Heading::West: return -1;
    default: return 0;
  }
}

int heading_dy(Heading h) {
  switch (h) {
    case Heading::North: return -1;
    case Heading::South: return 1;
    default: return 0;
  }
}

int quarter_turns(Heading from, Heading to) {
  int d = (static_cast<int>(to) - static_cast<int>(from) + 4) % 4;
  return d == 3 ? -1 : d;
}

const char* heading_name(Heading h) {
  switch (h) {
    case Heading::East: return "E";
    case Heading::North: return "N";
    case Heading::West: return "W";
    case Heading::South: return "S";
  }
  return "?";
}

namespace {

bool is_blocked_char(char c) { return c == '@' || c == 'T' || c == 'O'; }
bool is_known_char(char c) { return c == '.' || c == 'G' || is_blocked_char(c); }

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  return lines;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

GridMap::GridMap(int width, int height, double cell_size)
    : GridMap(width, height, std::vector<char>(static_cast<std::size_t>(width) * height, '.'),
              "octile", cell_size) {}

GridMap::GridMap(int width, int height, std::vector<char> terrain, std::string type, double cell_size)
    : width_(width), height_(height), cell_size_(cell_size), type_(std::move(type)),
      terrain_(std::move(terrain)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("map dimensions must be positive");
  if (terrain_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("terrain size does not match width*height");
  }
  blocked_.resize(terrain_.size());
  for (std::size_t i = 0; i < terrain_.size(); ++i) blocked_[i] = is_blocked_char(terrain_[i]) ? 1 : 0;
}

int GridMap::blocked_count() const {
  return static_cast<int>(std::count(blocked_.begin(), blocked_.end(), std::uint8_t{1}));
}

std::optional<CellId> GridMap::step(CellId c, Heading h) const {
  int x = x_of(c) + heading_dx(h);
  int y = y_of(c) + heading_dy(h);
  if (!in_bounds(x, y) || blocked(x, y)) return std::nullopt;
  return cell(x, y);
}

std::vector<CellId> GridMap::neighbors(CellId c) const {
  std::vector<CellId> out;
  out.reserve(4);
  for (Heading h : {Heading::East, Heading::North, Heading::West, Heading::South}) {
    if (auto n = step(c, h)) out.push_back(*n);
  }
  return out;
}

int GridMap::manhattan(CellId a, CellId b) const {
  return std::abs(x_of(a) - x_of(b)) + std::abs(y_of(a) - y_of(b));
}

Heading GridMap::direction(CellId a, CellId b) const {
  int dx = x_of(b) - x_of(a);
  int dy = y_of(b) - y_of(a);
  if (dx == 1 && dy == 0) return Heading::East;
  if (dx == -1 && dy == 0) return Heading::West;
  if (dx == 0 && dy == -1) return Heading::North;
  if (dx == 0 && dy == 1) return Heading::South;
  throw std::invalid_argument("cells are not 4-adjacent");
}

std::vector<int> GridMap::distances_from(CellId source) const {
  std::vector<int> dist(static_cast<std::size_t>(size()), -1);
  if (blocked(source)) return dist;
  std::deque<CellId> queue{source};
  dist[static_cast<std::size_t>(source)] = 0;
  while (!queue.empty()) {
    CellId c = queue.front();
    queue.pop_front();
    for (CellId n : neighbors(c)) {
      if (dist[static_cast<std::size_t>(n)] < 0) {
        dist[static_cast<std::size_t>(n)] = dist[static_cast<std::size_t>(c)] + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

void KinodynLimits::validate() const {
  if (!(v_max > 0) || !(a_max > 0) || !(a_min < 0) || !(omega_max_deg > 0)) {
    throw std::invalid_argument("kinodynamic limits need v_max > 0, a_max > 0, a_min < 0, omega_max > 0");
  }
}

void GridInstance::validate() const {
  const auto n = agents.size();
  std::vector<std::uint8_t> start_used(static_cast<std::size_t>(map.size()), 0);
  std::vector<std::uint8_t> goal_used(static_cast<std::size_t>(map.size()), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = agents[i];
    for (CellId c : {a.start, a.goal}) {
      if (c < 0 || c >= map.size()) throw std::invalid_argument("agent " + std::to_string(i) + " cell out of bounds");
      if (map.blocked(c)) throw std::invalid_argument("agent " + std::to_string(i) + " uses a blocked cell");
    }
    if (start_used[static_cast<std::size_t>(a.start)]++) throw std::invalid_argument("duplicate start for agent " + std::to_string(i));
    if (goal_used[static_cast<std::size_t>(a.goal)]++) throw std::invalid_argument("duplicate goal for agent " + std::to_string(i));
  }
  if (!deadlines.empty()) {
    if (deadlines.size() != n) throw std::invalid_argument("deadline count does not match agent count");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(deadlines[i] > 0)) throw std::invalid_argument("deadline of agent " + std::to_string(i) + " is not positive");
    }
  }
}

GridMap parse_map(std::string_view text) {
  auto lines = split_lines(text);
  std::string type;
  int width = -1;
  int height = -1;
  std::size_t li = 0;
  for (; li < lines.size(); ++li) {
    const int lineno = static_cast<int>(li) + 1;
    auto tok = split_ws(lines[li]);
    if (tok.empty()) throw ParseError("empty header line", lineno);
    if (tok[0] == "map") {
      if (tok.size() != 1) throw ParseError("unexpected tokens after 'map'", lineno);
      ++li;
      break;
    }
    if (tok.size() != 2) throw ParseError("malformed header line", lineno);
    if (tok[0] == "type") {
      type = tok[1];
    } else if (tok[0] == "height") {
      if (!parse_number(tok[1], height) || height <= 0) throw ParseError("bad height", lineno);
    } else if (tok[0] == "width") {
      if (!parse_number(tok[1], width) || width <= 0) throw ParseError("bad width", lineno);
    } else {
      throw ParseError("unknown header key '" + tok[0] + "'", lineno);
    }
    if (li + 1 == lines.size()) throw ParseError("missing 'map' line", lineno + 1);
  }
  if (lines.empty()) throw ParseError("empty map file", 1);
  if (type.empty() || width < 0 || height < 0) throw ParseError("header must declare type, height and width", static_cast<int>(li));

  std::vector<char> terrain;
  terrain.reserve(static_cast<std::size_t>(width) * height);
  for (int row = 0; row < height; ++row, ++li) {
    const int lineno = static_cast<int>(li) + 1;
    if (li >= lines.size()) throw ParseError("expected " + std::to_string(height) + " grid rows, got " + std::to_string(row), lineno);
    auto line = lines[li];
    if (static_cast<int>(line.size()) != width) {
      throw ParseError("grid row has " + std::to_string(line.size()) + " cells, expected " + std::to_string(width), lineno);
    }
    for (char c : line) {
      if (!is_known_char(c)) throw ParseError(std::string("unknown cell character '") + c + "'", lineno);
      terrain.push_back(c);
    }
  }
  for (; li < lines.size(); ++li) {
    if (!trim(lines[li]).empty()) throw ParseError("extra grid row beyond declared height", static_cast<int>(li) + 1);
  }
  return GridMap(width, height, std::move(terrain), type);
}

std::string serialize_map(const GridMap& map) {
  std::string out = "type " + map.type() + "\nheight " + std::to_string(map.height()) + "\nwidth " +
                    std::to_string(map.width()) + "\nmap\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out.push_back(map.terrain(map.cell(x, y)));
    out.push_back('\n');
  }
  return out;
}

GridMap load_map_file(const std::string& path) { return parse_map(read_file(path)); }

std::vector<StartGoal> parse_scen(std::string_view text, const GridMap& map, int count) {
  if (count < 0) throw std::invalid_argument("negative scen count");
  auto lines = split_lines(text);
  std::vector<StartGoal> out;
  if (count == 0) return out;
  if (lines.empty()) throw ParseError("empty scen file", 1);
  auto header = split_ws(lines[0]);
  if (header.size() != 2 || header[0] != "version" || (header[1] != "1" && header[1] != "1.0")) {
    throw ParseError("expected 'version 1' header", 1);
  }
  int entry = 0;
  for (std::size_t li = 1; li < lines.size() && static_cast<int>(out.size()) < count; ++li) {
    const int lineno = static_cast<int>(li) + 1;
    if (trim(lines[li]).empty()) continue;
    auto tok = split_ws(lines[li]);
    if (tok.size() != 9) throw ParseError("scen entry " + std::to_string(entry) + " needs 9 fields", lineno);
    int w = 0, h = 0, sx = 0, sy = 0, gx = 0, gy = 0;
    if (!parse_number(tok[2], w) || !parse_number(tok[3], h) || !parse_number(tok[4], sx) ||
        !parse_number(tok[5], sy) || !parse_number(tok[6], gx) || !parse_number(tok[7], gy)) {
      throw ParseError("scen entry " + std::to_string(entry) + " has a non-integer field", lineno);
    }
    if (w != map.width() || h != map.height()) {
      throw ParseError("scen entry " + std::to_string(entry) + " declares a " + std::to_string(w) + "x" +
                       std::to_string(h) + " map", lineno);
    }
    for (auto [x, y] : {std::pair{sx, sy}, std::pair{gx, gy}}) {
      if (!map.in_bounds(x, y)) throw ParseError("scen entry " + std::to_string(entry) + " is out of bounds", lineno);
      if (map.blocked(x, y)) throw ParseError("scen entry " + std::to_string(entry) + " references a blocked cell", lineno);
    }
    out.push_back({map.cell(sx, sy), map.cell(gx, gy)});
    ++entry;
  }
  if (static_cast<int>(out.size()) < count) {
    throw ParseError("scen has " + std::to_string(out.size()) + " entries, " + std::to_string(count) + " requested", 0);
  }
  return out;
}

std::vector<StartGoal> load_scen_file(const std::string& path, const GridMap& map, int count) {
  return parse_scen(read_file(path), map, count);
}

GridMap make_empty_map(int width, int height) { return GridMap(width, height); }

namespace {

std::vector<CellId> largest_component(const GridMap& map) {
  std::vector<int> label(static_cast<std::size_t>(map.size()), -1);
  std::vector<CellId> best;
  for (CellId c = 0; c < map.size(); ++c) {
    if (map.blocked(c) || label[static_cast<std::size_t>(c)] >= 0) continue;
    std::vector<CellId> comp{c};
    label[static_cast<std::size_t>(c)] = c;
    for (std::size_t i = 0; i < comp.size(); ++i) {
      for (CellId n : map.neighbors(comp[i])) {
        if (label[static_cast<std::size_t>(n)] < 0) {
          label[static_cast<std::size_t>(n)] = c;
          comp.push_back(n);
        }
      }
    }
    if (comp.size() > best.size()) best = std::move(comp);
  }
  std::sort(best.begin(), best.end());
  return best;
}

}  // namespace

GridMap make_random_map(int width, int height, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<char> terrain(static_cast<std::size_t>(width) * height, '.');
  for (auto& t : terrain) {
    if (unit_uniform(rng) < density) t = '@';
  }
  GridMap raw(width, height, terrain);
  auto keep = largest_component(raw);
  std::vector<char> connected(terrain.size(), '@');
  for (CellId c : keep) connected[static_cast<std::size_t>(c)] = '.';
  return GridMap(width, height, std::move(connected));
}

GridInstance make_instance(const GridMap& map, std::span<const StartGoal> pairs, std::uint64_t seed) {
  GridInstance inst;
  inst.map = map;
  inst.seed = seed;
  for (const auto& p : pairs) inst.agents.push_back({p.start, p.goal, std::nullopt});
  inst.validate();
  return inst;
}

GridInstance random_instance(const GridMap& map, int num_agents, std::uint64_t seed) {
  auto free_cells = largest_component(map);
  if (static_cast<int>(free_cells.size()) < std::max(2, num_agents)) {
    throw std::invalid_argument("map has too few free cells for " + std::to_string(num_agents) + " agents");
  }
  Rng rng(seed);
  auto starts = free_cells;
  auto goals = free_cells;
  shuffle_portable(starts, rng);
  shuffle_portable(goals, rng);
  std::vector<StartGoal> pairs;
  std::vector<std::uint8_t> goal_used(static_cast<std::size_t>(map.size()), 0);
  std::size_t gi = 0;
  for (int i = 0; i < num_agents; ++i) {
    CellId s = starts[static_cast<std::size_t>(i)];
    // first unused goal different from this start
    std::size_t k = gi;
    while (k < goals.size() && (goals[k] == s || goal_used[static_cast<std::size_t>(goals[k])])) ++k;
    if (k == goals.size()) throw std::invalid_argument("cannot assign distinct goals");
    std::swap(goals[k], goals[gi]);
    goal_used[static_cast<std::size_t>(goals[gi])] = 1;
    pairs.push_back({s, goals[gi]});
    ++gi;
  }
  return make_instance(map, pairs, seed);
}

double lower_bound_time(const GridMap& map, const AgentTask& task, const KinodynLimits& limits) {
  auto dist = map.distances_from(task.start);
  int d = dist[static_cast<std::size_t>(task.goal)];
  if (d < 0) return -1.0;
  return d * map.cell_size() / limits.v_max;
}

std::vector<double> generate_deadlines(const GridInstance& instance, double k_d, const KinodynLimits& limits,
                                       std::uint64_t seed, double width) {
  if (!(k_d > 0)) throw std::invalid_argument("K_D must be positive");
  if (width < 0) throw std::invalid_argument("deadline factor width must be non-negative");
  limits.validate();
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(instance.agents.size());
  for (std::size_t i = 0; i < instance.agents.size(); ++i) {
    double lb = lower_bound_time(instance.map, instance.agents[i], limits);
    if (lb < 0) throw std::invalid_argument("agent " + std::to_string(i) + " cannot reach its goal");
    double u = k_d + width * unit_uniform(rng);
    // Agents already at their goal get the time of one cell so deadlines stay positive.
    if (lb == 0) lb = instance.map.cell_size() / limits.v_max;
    out.push_back(lb * u);
  }
  return out;
}

CalibrationResult calibrate_kd(std::span<const double> candidates, const std::function<double(double)>& miss_rate) {
  if (candidates.empty()) throw std::invalid_argument("no K_D candidates");
  CalibrationResult r;
  r.candidates.assign(candidates.begin(), candidates.end());
  for (double k : candidates) r.miss_rates.push_back(miss_rate(k));
  if (r.candidates.size() > 1) {
    bool degenerate = std::all_of(r.miss_rates.begin(), r.miss_rates.end(),
                                  [](double m) { return m <= 0.0 || m >= 1.0; });
    if (degenerate) {
      std::ostringstream msg;
      msg << "every K_D candidate yields a 0% or 100% miss rate:";
      for (std::size_t i = 0; i < r.candidates.size(); ++i) msg << " K_D=" << r.candidates[i] << "->" << r.miss_rates[i];
      throw CalibrationError(msg.str());
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.candidates.size(); ++i) {
    double di = std::abs(r.miss_rates[i] - 0.5);
    double db = std::abs(r.miss_rates[best] - 0.5);
    if (di < db || (di == db && r.candidates[i] < r.candidates[best])) best = i;
  }
  r.k_d = r.candidates[best];
  return r;
}

std::string serialize_instance(const GridInstance& instance) {
  std::ostringstream out;
  out << "# agent_id start_x start_y goal_x goal_y deadline_s\n";
  const auto& m = instance.map;
  for (std::size_t i = 0; i < instance.agents.size(); ++i) {
    const auto& a = instance.agents[i];
    char buf[64];
    double d = i < instance.deadlines.size() ? instance.deadlines[i] : 0.0;
    std::snprintf(buf, sizeof buf, "%.17g", d);
    out << i << ' ' << m.x_of(a.start) << ' ' << m.y_of(a.start) << ' ' << m.x_of(a.goal) << ' '
        << m.y_of(a.goal) << ' ' << buf << '\n';
  }
  return out.str();
}

GridInstance parse_instance(std::string_view text, const GridMap& map) {
  GridInstance inst;
  inst.map = map;
  auto lines = split_lines(text);
  bool any_deadline = false;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const int lineno = static_cast<int>(li) + 1;
    auto line = trim(lines[li]);
    if (line.empty() || line.front() == '#') continue;
    auto tok = split_ws(line);
    if (tok.size() != 6) throw ParseError("instance line needs 6 fields", lineno);
    int id = 0, sx = 0, sy = 0, gx = 0, gy = 0;
    double d = 0;
    if (!parse_number(tok[0], id) || !parse_number(tok[1], sx) || !parse_number(tok[2], sy) ||
        !parse_number(tok[3], gx) || !parse_number(tok[4], gy) || !parse_number(tok[5], d)) {
      throw ParseError("non-numeric instance field", lineno);
    }
    if (id != inst.num_agents()) throw ParseError("agent ids must be consecutive from 0", lineno);
    if (!map.in_bounds(sx, sy) || !map.in_bounds(gx, gy)) throw ParseError("agent cell out of bounds", lineno);
    inst.agents.push_back({map.cell(sx, sy), map.cell(gx, gy), std::nullopt});
    inst.deadlines.push_back(d);
    any_deadline = any_deadline || d != 0.0;
  }
  if (!any_deadline) inst.deadlines.clear();
  try {
    inst.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
  return inst;
}

}  // namespace mapfrd
