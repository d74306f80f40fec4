#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfrd/estimators.hpp"
#include "mapfrd/grid.hpp"
#include "mapfrd/penalty.hpp"
#include "mapfrd/single_agent.hpp"

namespace mapfrd {

struct CtNode {
  std::vector<Constraint> constraints;
  std::vector<GridPath> paths;
  std::vector<Conflict> conflicts;
  std::vector<Rotation> rotations;
  Estimate estimate;
  double penalty = 0.0;
  std::uint64_t id = 0;  // insertion counter
  bool used_fallback = false;

  std::size_t conflict_count() const { return conflicts.size() + rotations.size(); }
};

struct NodeEstimate {
  Estimate estimate;
  double penalty = 0.0;
  bool used_fallback = false;
};

// Builds the (possibly cyclic) ADG of `paths` and asks `estimator`. Estimators that reject
// cyclic graphs are replaced by ConstExec(0.05) on cyclic nodes.
NodeEstimate estimate_node(const GridInstance& instance, std::span<const GridPath> paths, Estimator& estimator,
                           PenaltyKind kind, const SimConfig& config = {});

struct CbsOptions {
  double time_limit_s = 60.0;
  std::optional<std::int64_t> max_expansions;
  int horizon = 0;
  SimConfig config;  // limits for the ConstExec fallback
};

struct CbsStats {
  std::int64_t expanded = 0;
  std::int64_t generated = 0;
  std::int64_t fallbacks = 0;
  std::int64_t bypasses = 0;
  double runtime_s = 0.0;
  double final_penalty = 0.0;
  bool timed_out = false;
};

struct CbsResult {
  Plan plan;
  Estimate estimate;
  double penalty = 0.0;
  CbsStats stats;
};

class CbsFailure : public std::runtime_error {
 public:
  CbsFailure(const std::string& what, CbsStats stats) : std::runtime_error(what), stats_(stats) {}
  const CbsStats& stats() const { return stats_; }

 private:
  CbsStats stats_;
};

// Penalty-ordered CBS. Open list ordered by (penalty, conflict count, insertion). Vertex and
// edge conflicts split two ways; a rotation splits once per member, each child forbidding
// that agent's move. On budget
// exhaustion returns the best conflict-free node generated so far, else throws CbsFailure.
CbsResult run_cbs(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, const CbsOptions& options = {});

// `expanded,generated,runtime_s,final_penalty`
std::string cbs_stats_csv(const CbsStats& stats);

}  // namespace mapfrd
