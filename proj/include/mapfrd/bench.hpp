#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfrd/adg.hpp"
#include "mapfrd/estimators.hpp"
#include "mapfrd/grid.hpp"
#include "mapfrd/penalty.hpp"
#include "mapfrd/sim.hpp"

namespace mapfrd::bench {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` text. Lists are comma separated, optionally wrapped in [ ]. Blank
// lines and lines starting with '#' are skipped, as is anything after a '#' that follows
// whitespace; unknown or repeated keys are errors.
//
//   maps              empty:WxH | random:WxH:density | path/to/file.map  (list)
//   agents            ascending agent counts (list)
//   instances         instances per (map, agents)
//   seed              base seed
//   planner           lns | cbs
//   estimators        estimator specs, first one drives gen-data (list)
//   penalty           linear | percentage | quadratic
//   k_d               number, or auto to calibrate per (map, agents)
//   k_d_candidates    candidate grid for auto (list)
//   calibration_instances
//   budget            iterations:N | seconds:S
//   noise             ideal | realistic
//   neighborhood      lns neighborhood size
//   neighborhood_mode failure | adaptive
//   workers           worker threads
//   predictor         command line of the predictor process
//   out               output directory
struct ExperimentConfig {
  std::vector<std::string> maps{"empty:8x8"};
  std::vector<int> agents{4};
  int instances = 5;
  std::uint64_t seed = 1;
  std::string planner = "lns";
  std::vector<std::string> estimators{"const:0.05"};
  PenaltyKind penalty = PenaltyKind::Linear;
  std::optional<double> k_d;  // nullopt: calibrate
  std::vector<double> k_d_candidates{8, 10, 12, 14, 16, 20, 30, 40, 50, 60, 80, 100, 120};
  int calibration_instances = 5;
  bool budget_in_seconds = false;
  double budget = 200;
  bool realistic_noise = true;
  int neighborhood = 8;
  bool adaptive = false;
  int workers = 1;
  std::string predictor;
  std::string out = "out";

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::string& path);
  // Applies one `key=value` override.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  // Every key in fixed order; parse(canonical()) == *this.
  std::string canonical() const;
  std::string hash() const;
};

struct InstanceKey {
  std::size_t map_index = 0;
  int agents = 0;
  int index = 0;
  std::uint64_t seed = 0;
};

std::string map_tag(const std::string& spec);
GridMap resolve_map(const std::string& spec, std::uint64_t base_seed);
// (map, agents, index) in config order.
std::vector<InstanceKey> enumerate_instances(const ExperimentConfig& config);
// Agents placed from the key's seed, deadlines drawn with `k_d`.
GridInstance build_instance(const GridMap& map, const InstanceKey& key, double k_d);
std::string instance_label(const ExperimentConfig& config, const InstanceKey& key);

// Runs f(i) for i in [0, n) on `workers` threads. The first exception (lowest i) is rethrown
// after all workers finish.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

struct CalibrationRow {
  std::size_t map_index = 0;
  int agents = 0;
  CalibrationResult result;
};

// Miss rate of prioritized-planning plans under ideal simulation, per candidate.
std::vector<CalibrationRow> calibrate(const ExperimentConfig& config);
// K_D per (map index, agents): the fixed value or the calibrated one.
std::map<std::pair<std::size_t, int>, double> resolve_k_d(const ExperimentConfig& config,
                                                          std::vector<CalibrationRow>* rows = nullptr);

// Plans one instance with the configured planner guided by `estimator`.
Plan plan_instance(const ExperimentConfig& config, const GridInstance& instance, Estimator& estimator,
                   std::uint64_t seed, std::vector<Plan>* history = nullptr);

// ---- gen-data -----------------------------------------------------------------

struct DatasetEntry {
  std::string file;  // graph file, relative to the dataset directory
  std::string plan_file;
  std::string instance_file;
  std::string map_file;
  std::string split;  // train | val | test
  std::string map;
  int agents = 0;
  std::uint64_t instance_seed = 0;
  int sum_of_costs = 0;
  int nodes = 0;
  std::string hash;  // of the graph file bytes
};

struct Manifest {
  std::string config_hash;
  NoiseModel noise;
  std::vector<DatasetEntry> entries;
  std::vector<std::string> failures;
};

std::string serialize_manifest(const Manifest& m);
Manifest parse_manifest(std::string_view text);

struct GenDataSummary {
  Manifest manifest;
  int instances = 0;
  int graphs = 0;
};

GenDataSummary gen_data(const ExperimentConfig& config);
// Files whose bytes no longer match the manifest.
std::vector<std::string> verify_dataset(const std::string& dir);

// `agent cell0 cell1 ...` per line.
std::string serialize_paths(const std::vector<GridPath>& paths);
std::vector<GridPath> parse_paths(std::string_view text);

// ---- evaluate -----------------------------------------------------------------

struct EvalRow {
  std::string map;
  int agents = 0;
  int instance = 0;
  std::uint64_t seed = 0;
  std::string method;
  bool ok = false;
  std::string error;
  double penalty = 0.0;  // average over agents, simulated
  double gap = 0.0;      // (sum penalty - VBS sum penalty) / agents
};

struct EvalSummaryRow {
  std::string map;
  int agents = 0;
  std::string method;
  int instances = 0;
  double mean_gap = 0.0;
  double stderr_gap = 0.0;
  double mean_penalty = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalSummaryRow> summary;
  int excluded = 0;
};

// Fills `gap` for every row of complete instances; instances where any method failed are
// excluded and counted.
void apply_vbs(std::vector<EvalRow>& rows, std::size_t methods, int* excluded = nullptr);
std::vector<EvalSummaryRow> summarize(const std::vector<EvalRow>& rows);
EvalReport evaluate(const ExperimentConfig& config);
std::string eval_rows_csv(const std::vector<EvalRow>& rows, const std::string& config_hash);
std::string eval_summary_csv(const std::vector<EvalSummaryRow>& rows, const std::string& config_hash);

// ---- mape ---------------------------------------------------------------------

struct MapeRow {
  std::string map;
  int agents = 0;
  std::string estimator;
  int graphs = 0;
  double mean = 0.0;
  double stderr_mape = 0.0;
};

// Agents with non-positive labels (already at their goal) are left out of the per-graph MAPE.
std::vector<MapeRow> mape_table(const std::string& dataset_dir, const std::vector<std::string>& estimators,
                                const std::string& split, const std::string& predictor = {});
std::string mape_csv(const std::vector<MapeRow>& rows, const std::string& config_hash);

// ---- runtime ------------------------------------------------------------------

struct RuntimeRow {
  std::string map;
  int agents = 0;
  int nodes = 0;
  int edges = 0;
  double build_ms = 0.0;
  double encode_ms = 0.0;
  std::string estimator;
  double estimate_ms = 0.0;
};

std::vector<RuntimeRow> runtime_table(const ExperimentConfig& config);
std::string runtime_csv(const std::vector<RuntimeRow>& rows, const std::string& config_hash);
std::string calibration_csv(const ExperimentConfig& config, const std::vector<CalibrationRow>& rows);

double mean(const std::vector<double>& v);
// Standard error of the mean; 0 for fewer than two values.
double std_error(const std::vector<double>& v);

}  // namespace mapfrd::bench
