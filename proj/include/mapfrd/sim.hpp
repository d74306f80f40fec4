#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfrd/adg.hpp"
#include "mapfrd/grid.hpp"

namespace mapfrd {

// Execution noise. Each action draws a delay factor f ~ LogNormal(0, sigma); it slows the
// action by max(1, f) (rotations and waits last longer, straight runs get a lower speed
// cap from the geometric mean of their moves' factors). Each Type2 dependency adds
// latency_const + Uniform[0, latency_jitter] seconds before the successor is released.
struct NoiseModel {
  double sigma = 0.0;
  double latency_const = 0.0;
  double latency_jitter = 0.0;
  std::uint64_t seed = 0;

  static NoiseModel ideal() { return {}; }
  static NoiseModel realistic(std::uint64_t seed) { return {0.05, 0.0, 0.1, seed}; }
  bool deterministic() const { return sigma == 0.0 && latency_const == 0.0 && latency_jitter == 0.0; }
};

struct SimConfig {
  KinodynLimits limits;
  double cell_size = 1.0;
  // Seconds per planned wait; <= 0 means cell_size / v_max.
  double wait_dwell = 0.0;
  // Every action keeps the duration it would have without gates; a move no longer
  // re-plans its speed profile when a gate opens. Arrival times then equal the longest
  // path through the graph.
  bool fixed_durations = false;

  double dwell() const { return wait_dwell > 0 ? wait_dwell : cell_size / limits.v_max; }
};

// Time-optimal 1-D motion from (x0, v0) to rest at x0 + distance: accelerate, cruise at
// the speed cap if reached, brake.
class StopProfile {
 public:
  StopProfile() = default;
  StopProfile(double t0, double x0, double v0, double distance, double accel, double decel, double v_cap);

  double start_time() const { return t0_; }
  double end_time() const { return t0_ + t1_ + tc_ + t3_; }
  double duration() const { return t1_ + tc_ + t3_; }
  double peak_speed() const { return vp_; }
  double target() const { return x0_ + distance_; }

  // Absolute time at which position x (x0 <= x <= target) is reached.
  double time_at(double x) const;
  double position(double t) const;
  double speed(double t) const;

  struct Piece {
    double t0, t1, v0, accel;
  };
  // Constant-acceleration pieces covering [start_time, min(until, end_time)].
  std::vector<Piece> pieces(double until) const;

 private:
  double t0_ = 0, x0_ = 0, v0_ = 0, distance_ = 0;
  double a_ = 1, b_ = 1, vp_ = 0;
  double t1_ = 0, tc_ = 0, t3_ = 0, d1_ = 0, dc_ = 0;
};

struct ActionTiming {
  double duration = 0.0;
  double exit_speed = 0.0;
};

// MoveForward: time to cross one cell at the start of a straight run of `run_length_cells`
// cells that must end at rest. Rotate: |angle| / omega_max, from standstill. Wait: dwell.
ActionTiming action_duration(const Action& action, double entry_speed, int run_length_cells, const SimConfig& config);

struct TraceEvent {
  AgentId agent = 0;
  int action_index = 0;
  ActionKind kind = ActionKind::Wait;
  double start = 0.0;
  double end = 0.0;
};

// Constant-acceleration piece of an agent's longitudinal motion.
struct MotionPiece {
  AgentId agent = 0;
  double t0 = 0.0, t1 = 0.0, v0 = 0.0, accel = 0.0;
};

struct ExecOutcome {
  std::vector<double> arrival;  // seconds per agent; 0 for agents without actions
  std::vector<TraceEvent> trace;  // ordered by (agent, action_index)
  std::vector<MotionPiece> motion;
  double makespan = 0.0;
};

class DeadlockError : public std::runtime_error {
 public:
  DeadlockError(const std::string& what, std::vector<int> cycle) : std::runtime_error(what), cycle_(std::move(cycle)) {}
  const std::vector<int>& cycle() const { return cycle_; }

 private:
  std::vector<int> cycle_;
};

// Executes the graph: an action starts once its agent's previous action is done and every
// Type2 predecessor is done plus latency. Moving agents brake to stop before a cell whose
// entry is not yet released and re-plan when it is. Deterministic for fixed inputs.
ExecOutcome simulate(const Adg& adg, const SimConfig& config, const NoiseModel& noise);

// `agent,action_index,kind,start_s,end_s`
std::string trace_csv(const ExecOutcome& outcome);

struct LabeledDataset {
  std::vector<EncodedGraph> graphs;
  std::vector<int> source;              // index into the input plan list per graph
  std::vector<std::string> errors;      // one entry per failed plan
};

// Keeps the first plan per sum-of-costs, then encodes and simulates each one.
LabeledDataset label_dataset(const std::vector<Plan>& plans, const SimConfig& config, const NoiseModel& noise);

}  // namespace mapfrd
