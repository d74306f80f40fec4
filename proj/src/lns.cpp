#include "mapfrd/lns.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_map>

#include "mapfrd/adg.hpp"

namespace mapfrd {

const char* neighborhood_name(NeighborhoodKind k) {
  switch (k) {
    case NeighborhoodKind::Failure: return "failure";
    case NeighborhoodKind::AgentBased: return "agent";
    case NeighborhoodKind::MapBased: return "map";
    case NeighborhoodKind::Random: return "random";
  }
  return "?";
}

bool prioritized_planning(const GridInstance& instance, std::span<const AgentId> order, ConstraintTable table,
                          std::vector<GridPath>& paths, int horizon) {
  for (AgentId a : order) {
    const auto& task = instance.agents[static_cast<std::size_t>(a)];
    SearchOptions opts;
    opts.horizon = horizon;
    opts.initial_heading = task.initial_heading;
    auto path = shortest_path(instance.map, task.start, task.goal, table, opts);
    if (!path) return false;
    path->agent = a;
    table.reserve(*path);
    paths[static_cast<std::size_t>(a)] = std::move(*path);
  }
  return true;
}

LnsPlanner::LnsPlanner(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, LnsOptions options)
    : instance_(instance), estimator_(estimator), kind_(kind), options_(std::move(options)), rng_(options_.seed) {
  if (instance.deadlines.size() != instance.agents.size()) throw std::invalid_argument("instance has no deadlines");
  if (options_.neighborhood_size < 1) throw std::invalid_argument("neighborhood size must be positive");
  if (!(options_.temperature > 0)) throw std::invalid_argument("softmax temperature must be positive");
  violation_counts_.assign(instance.agents.size(), 0);
  distance_to_goal_.reserve(instance.agents.size());
  for (const auto& a : instance.agents) distance_to_goal_.push_back(instance.map.distances_from(a.goal));
}

Plan LnsPlanner::initial_solution() {
  const int m = instance_.num_agents();
  std::vector<AgentId> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int attempt = 0; attempt <= options_.initial_restarts; ++attempt) {
    shuffle_portable(order, rng_);
    std::vector<GridPath> paths(static_cast<std::size_t>(m));
    if (prioritized_planning(instance_, order, ConstraintTable(instance_.map.size()), paths, options_.horizon)) {
      return make_plan(instance_, std::move(paths));
    }
  }
  throw InfeasibleError("prioritized planning found no solution in " + std::to_string(options_.initial_restarts + 1) +
                        " attempts");
}

LnsPlanner::Evaluation LnsPlanner::evaluate(const Plan& plan) {
  Adg adg = build_adg(plan.actions);
  Estimate e = estimator_.estimate(plan, adg);
  double p = aggregate(e, instance_.deadlines, kind_);
  return {std::move(e), p};
}

void LnsPlanner::start() {
  plan_ = initial_solution();
  auto ev = evaluate(plan_);
  estimate_ = std::move(ev.estimate);
  penalty_ = ev.penalty;
  update_violation_counts(violation_counts_, estimate_, instance_.deadlines);
  iteration_ = 0;
}

void LnsPlanner::update_violation_counts(std::vector<int>& counts, const Estimate& estimate,
                                         std::span<const double> deadlines) {
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (estimate.central_time(i) > deadlines[i]) {
      ++counts[i];
    } else {
      counts[i] = 0;
    }
  }
}

std::vector<double> LnsPlanner::seed_distribution(std::span<const int> counts, double temperature) {
  std::vector<double> p(counts.size());
  if (counts.empty()) return p;
  const int top = *std::max_element(counts.begin(), counts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    p[i] = std::exp((counts[i] - top) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

AgentId LnsPlanner::sample_failure_seed() {
  auto p = seed_distribution(violation_counts_, options_.temperature);
  double u = unit_uniform(rng_);
  for (std::size_t i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0) return static_cast<AgentId>(i);
  }
  return static_cast<AgentId>(p.size() - 1);
}

AgentId LnsPlanner::max_delay_seed() {
  const int m = instance_.num_agents();
  if (static_cast<int>(tabu_.size()) >= m) tabu_.clear();
  int best_delay = -1;
  std::vector<AgentId> best;
  for (AgentId a = 0; a < m; ++a) {
    if (std::find(tabu_.begin(), tabu_.end(), a) != tabu_.end()) continue;
    const auto& task = instance_.agents[static_cast<std::size_t>(a)];
    int shortest = distance_to_goal_[static_cast<std::size_t>(a)][static_cast<std::size_t>(task.start)];
    int delay = plan_.paths[static_cast<std::size_t>(a)].arrival() - shortest;
    if (delay > best_delay) {
      best_delay = delay;
      best.clear();
    }
    if (delay == best_delay) best.push_back(a);
  }
  AgentId seed = best[static_cast<std::size_t>(uniform_index(rng_, static_cast<int>(best.size())))];
  tabu_.push_back(seed);
  return seed;
}

std::vector<AgentId> LnsPlanner::random_walk_neighborhood(AgentId seed, int size) {
  const auto& map = instance_.map;
  // Space-time occupancy of the current plan, goal-resting included.
  std::unordered_map<std::int64_t, AgentId> occupied;
  std::unordered_map<CellId, AgentId> goal_owner;
  for (const auto& p : plan_.paths) {
    for (int t = 0; t < p.arrival(); ++t) {
      occupied[static_cast<std::int64_t>(t) * map.size() + p.vertices[static_cast<std::size_t>(t)]] = p.agent;
    }
    goal_owner[p.vertices.back()] = p.agent;
  }
  auto who = [&](CellId c, int t) -> AgentId {
    auto it = occupied.find(static_cast<std::int64_t>(t) * map.size() + c);
    if (it != occupied.end()) return it->second;
    auto g = goal_owner.find(c);
    if (g != goal_owner.end() && t >= plan_.paths[static_cast<std::size_t>(g->second)].arrival()) return g->second;
    return -1;
  };

  std::vector<AgentId> chosen{seed};
  std::set<AgentId> in_set{seed};
  const int attempts = 10 * size;
  for (int attempt = 0; attempt < attempts && static_cast<int>(chosen.size()) < size; ++attempt) {
    AgentId from = attempt == 0 ? seed : chosen[static_cast<std::size_t>(uniform_index(rng_, static_cast<int>(chosen.size())))];
    const auto& path = plan_.paths[static_cast<std::size_t>(from)];
    int t = uniform_index(rng_, path.arrival() + 1);
    CellId pos = path.at(t);
    const int steps = std::max(1, path.arrival());
    for (int s = 0; s < steps && static_cast<int>(chosen.size()) < size; ++s) {
      auto nbrs = map.neighbors(pos);
      nbrs.push_back(pos);
      pos = nbrs[static_cast<std::size_t>(uniform_index(rng_, static_cast<int>(nbrs.size())))];
      ++t;
      AgentId other = who(pos, t);
      if (other >= 0 && in_set.insert(other).second) chosen.push_back(other);
    }
  }
  return chosen;
}

std::vector<AgentId> LnsPlanner::map_neighborhood(int size) {
  const auto& map = instance_.map;
  std::vector<CellId> junctions;
  for (CellId c = 0; c < map.size(); ++c) {
    if (!map.blocked(c) && map.neighbors(c).size() > 2) junctions.push_back(c);
  }
  if (junctions.empty()) return random_neighborhood(size);
  CellId center = junctions[static_cast<std::size_t>(uniform_index(rng_, static_cast<int>(junctions.size())))];
  // Agents visiting cells near the junction, nearest cells first.
  std::unordered_map<CellId, std::vector<AgentId>> visitors;
  for (const auto& p : plan_.paths) {
    for (CellId c : p.vertices) {
      auto& v = visitors[c];
      if (v.empty() || v.back() != p.agent) v.push_back(p.agent);
    }
  }
  std::vector<AgentId> chosen;
  std::set<AgentId> in_set;
  std::vector<int> seen(static_cast<std::size_t>(map.size()), 0);
  std::deque<CellId> queue{center};
  seen[static_cast<std::size_t>(center)] = 1;
  while (!queue.empty() && static_cast<int>(chosen.size()) < size) {
    CellId c = queue.front();
    queue.pop_front();
    if (auto it = visitors.find(c); it != visitors.end()) {
      for (AgentId a : it->second) {
        if (static_cast<int>(chosen.size()) < size && in_set.insert(a).second) chosen.push_back(a);
      }
    }
    for (CellId n : map.neighbors(c)) {
      if (!seen[static_cast<std::size_t>(n)]++) queue.push_back(n);
    }
  }
  return chosen;
}

std::vector<AgentId> LnsPlanner::random_neighborhood(int size) {
  std::vector<AgentId> all(static_cast<std::size_t>(instance_.num_agents()));
  for (int i = 0; i < instance_.num_agents(); ++i) all[static_cast<std::size_t>(i)] = i;
  shuffle_portable(all, rng_);
  all.resize(static_cast<std::size_t>(std::min(size, instance_.num_agents())));
  return all;
}

std::vector<AgentId> LnsPlanner::select_neighborhood(int size, NeighborhoodKind* used) {
  size = std::min(size, instance_.num_agents());
  NeighborhoodKind kind = NeighborhoodKind::Failure;
  if (options_.mode == NeighborhoodMode::Adaptive) {
    double total = weights_[0] + weights_[1] + weights_[2];
    double u = unit_uniform(rng_) * total;
    kind = u < weights_[0] ? NeighborhoodKind::AgentBased
           : u < weights_[0] + weights_[1] ? NeighborhoodKind::MapBased
                                           : NeighborhoodKind::Random;
  }
  if (used) *used = kind;
  switch (kind) {
    case NeighborhoodKind::Failure: return random_walk_neighborhood(sample_failure_seed(), size);
    case NeighborhoodKind::AgentBased: return random_walk_neighborhood(max_delay_seed(), size);
    case NeighborhoodKind::MapBased: return map_neighborhood(size);
    case NeighborhoodKind::Random: return random_neighborhood(size);
  }
  return {};
}

bool LnsPlanner::step() {
  ++iteration_;
  NeighborhoodKind kind = NeighborhoodKind::Failure;
  auto group = select_neighborhood(options_.neighborhood_size, &kind);
  std::set<AgentId> destroyed(group.begin(), group.end());

  ConstraintTable table(instance_.map.size());
  for (const auto& p : plan_.paths) {
    if (!destroyed.count(p.agent)) table.reserve(p);
  }
  shuffle_portable(group, rng_);
  std::vector<GridPath> paths = plan_.paths;
  bool accepted = false;
  if (!prioritized_planning(instance_, group, std::move(table), paths, options_.horizon)) {
    ++failed_repairs_;
  } else {
    Plan candidate;
    candidate.paths = std::move(paths);
    candidate.actions = plan_.actions;
    for (AgentId a : group) {
      candidate.actions[static_cast<std::size_t>(a)] = expand_actions(
          instance_.map, candidate.paths[static_cast<std::size_t>(a)], instance_.agents[static_cast<std::size_t>(a)].initial_heading);
    }
    auto ev = evaluate(candidate);
    accepted = ev.penalty < penalty_ ||
               (ev.penalty == penalty_ && candidate.sum_of_costs() < plan_.sum_of_costs());
    if (accepted) {
      plan_ = std::move(candidate);
      estimate_ = std::move(ev.estimate);
      penalty_ = ev.penalty;
      ++accepted_;
    }
  }
  update_violation_counts(violation_counts_, estimate_, instance_.deadlines);
  if (options_.mode == NeighborhoodMode::Adaptive && kind != NeighborhoodKind::Failure) {
    auto& w = weights_[static_cast<std::size_t>(kind) - 1];
    w = std::max(w * options_.weight_decay + (1.0 - options_.weight_decay) * (accepted ? 1.0 : 0.0), options_.weight_min);
  }
  return accepted;
}

LnsResult LnsPlanner::run() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  start();
  LnsResult result;
  result.trace.push_back({0, elapsed(), penalty_});
  if (options_.on_iteration) options_.on_iteration(0, plan_);
  const bool bounded = options_.max_iterations || options_.time_limit_s;
  while (bounded) {
    if (options_.max_iterations && iteration_ >= *options_.max_iterations) break;
    if (options_.time_limit_s && elapsed() >= *options_.time_limit_s) break;
    step();
    result.trace.push_back({iteration_, elapsed(), penalty_});
    if (options_.on_iteration) options_.on_iteration(iteration_, plan_);
  }
  result.plan = plan_;
  result.estimate = estimate_;
  result.penalty = penalty_;
  result.iterations = iteration_;
  result.accepted = accepted_;
  result.failed_repairs = failed_repairs_;
  return result;
}

LnsResult run_lns(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, const LnsOptions& options) {
  LnsPlanner planner(instance, estimator, kind, options);
  return planner.run();
}

std::string penalty_trace_csv(const std::vector<TracePoint>& trace) {
  std::string out = "iteration,elapsed_s,avg_penalty\n";
  for (const auto& p : trace) {
    out += std::to_string(p.iteration) + "," + fixed(p.elapsed_s, 6) + "," + fixed(p.penalty, 9) + "\n";
  }
  return out;
}

}  // namespace mapfrd
