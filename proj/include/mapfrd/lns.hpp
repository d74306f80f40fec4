#pragma once

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfrd/estimators.hpp"
#include "mapfrd/grid.hpp"
#include "mapfrd/penalty.hpp"
#include "mapfrd/single_agent.hpp"
#include "mapfrd/util.hpp"

namespace mapfrd {

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Plans `order` one by one, each avoiding `table` and all agents planned before it.
// Paths are written into `paths`; returns false as soon as one agent has no path.
bool prioritized_planning(const GridInstance& instance, std::span<const AgentId> order, ConstraintTable table,
                          std::vector<GridPath>& paths, int horizon = 0);

enum class NeighborhoodMode { FailureBased, Adaptive };
enum class NeighborhoodKind { Failure = 0, AgentBased = 1, MapBased = 2, Random = 3 };
const char* neighborhood_name(NeighborhoodKind k);

struct LnsOptions {
  int neighborhood_size = 8;
  double temperature = 1.0;
  NeighborhoodMode mode = NeighborhoodMode::FailureBased;
  double weight_decay = 0.9;  // gamma
  double weight_min = 0.01;
  int initial_restarts = 20;
  int horizon = 0;
  std::uint64_t seed = 0;
  // Stop at whichever is hit first; both unset runs no iterations.
  std::optional<int> max_iterations;
  std::optional<double> time_limit_s;
  // Called with the incumbent after the initial solution (iteration 0) and every iteration.
  std::function<void(int, const Plan&)> on_iteration;
};

struct TracePoint {
  int iteration = 0;
  double elapsed_s = 0.0;
  double penalty = 0.0;
};

struct LnsResult {
  Plan plan;
  Estimate estimate;
  double penalty = 0.0;
  std::vector<TracePoint> trace;
  int iterations = 0;
  int accepted = 0;
  int failed_repairs = 0;
};

// MAPF-LNS with penalty-based acceptance. The incumbent is always collision-free and its
// average penalty, as judged by the estimator, never increases.
class LnsPlanner {
 public:
  LnsPlanner(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, LnsOptions options);

  // Prioritized planning in random order with reshuffled restarts. Throws InfeasibleError.
  Plan initial_solution();
  // Builds the initial solution and evaluates it.
  void start();

  std::vector<AgentId> select_neighborhood(int size, NeighborhoodKind* used = nullptr);
  // One destroy/repair/accept iteration. Returns true if the candidate was accepted.
  bool step();
  LnsResult run();

  const Plan& plan() const { return plan_; }
  double penalty() const { return penalty_; }
  const Estimate& estimate() const { return estimate_; }
  const std::vector<int>& violation_counts() const { return violation_counts_; }
  const std::array<double, 3>& weights() const { return weights_; }
  int iteration() const { return iteration_; }

  // Increment on a miss, reset on a hit. A distribution misses when its median does.
  static void update_violation_counts(std::vector<int>& counts, const Estimate& estimate,
                                      std::span<const double> deadlines);
  // Seed-agent probabilities: softmax(counts / temperature).
  static std::vector<double> seed_distribution(std::span<const int> counts, double temperature);

 private:
  struct Evaluation {
    Estimate estimate;
    double penalty;
  };
  Evaluation evaluate(const Plan& plan);
  std::vector<AgentId> random_walk_neighborhood(AgentId seed, int size);
  std::vector<AgentId> map_neighborhood(int size);
  std::vector<AgentId> random_neighborhood(int size);
  AgentId sample_failure_seed();
  AgentId max_delay_seed();

  const GridInstance& instance_;
  Estimator& estimator_;
  PenaltyKind kind_;
  LnsOptions options_;
  Rng rng_;
  Plan plan_;
  Estimate estimate_;
  double penalty_ = 0.0;
  std::vector<int> violation_counts_;
  std::vector<std::vector<int>> distance_to_goal_;
  std::array<double, 3> weights_{1.0, 1.0, 1.0};
  std::vector<AgentId> tabu_;
  int iteration_ = 0;
  int accepted_ = 0;
  int failed_repairs_ = 0;
};

LnsResult run_lns(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, const LnsOptions& options);

// `iteration,elapsed_s,avg_penalty`
std::string penalty_trace_csv(const std::vector<TracePoint>& trace);

}  // namespace mapfrd
