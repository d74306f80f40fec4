#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mapfrd/adg.hpp"
#include "mapfrd/penalty.hpp"
#include "mapfrd/sim.hpp"
#include "mapfrd/single_agent.hpp"

namespace mapfrd {

class UnsupportedInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  // `adg` must be built from `plan`.
  virtual Estimate estimate(const Plan& plan, const Adg& adg) = 0;
  virtual bool accepts_cyclic() const { return false; }
};

// t_i = path_length_i * cell_size / (k_u * v_max); path length counts timesteps up to
// goal arrival, waits included.
class ConstExecEstimator final : public Estimator {
 public:
  ConstExecEstimator(double k_u, double v_max, double cell_size = 1.0);
  std::string name() const override;
  Estimate estimate(const Plan& plan, const Adg& adg) override;
  bool accepts_cyclic() const override { return true; }
  double time_for(int path_length) const { return path_length * cell_size_ / (k_u_ * v_max_); }

 private:
  double k_u_, v_max_, cell_size_;
};

// Ground truth from the simulator. Cyclic graphs are rejected.
class SimOracleEstimator final : public Estimator {
 public:
  SimOracleEstimator(SimConfig config, NoiseModel noise = NoiseModel::ideal());
  std::string name() const override;
  Estimate estimate(const Plan& plan, const Adg& adg) override;

 private:
  SimConfig config_;
  NoiseModel noise_;
};

// ---- predictor wire protocol ------------------------------------------------
//   request:  PREDICT <id> <n_bytes>\n<graph file bytes>
//   response: RESULT <id> <agent_count>\n then per agent `point <t>` or `dist <mu> <sigma>`
//             ERROR <id> <message>\n
// Numbers use 9 significant digits.

class PredictorError : public std::runtime_error {
 public:
  PredictorError(std::uint64_t request_id, const std::string& what)
      : std::runtime_error("predictor request " + std::to_string(request_id) + ": " + what), id_(request_id) {}
  std::uint64_t request_id() const { return id_; }

 private:
  std::uint64_t id_;
};

std::string format_request(std::uint64_t id, std::string_view graph_text);
std::string format_result(std::uint64_t id, const Estimate& estimate);
std::string format_error(std::uint64_t id, std::string_view message);

struct PredictRequest {
  std::uint64_t id = 0;
  std::string graph;
};

// Server side. nullopt on clean end of stream; throws PredictorError for a malformed
// header whose id could be read, std::runtime_error otherwise.
std::optional<PredictRequest> read_request(std::istream& in);

// Byte channel to a predictor: send one request, receive one response line at a time.
class PredictorChannel {
 public:
  virtual ~PredictorChannel() = default;
  virtual void send(std::string_view bytes) = 0;
  // Throws on timeout or closed stream.
  virtual std::string read_line() = 0;
};

// Child process speaking the protocol over stdin/stdout.
class ProcessChannel final : public PredictorChannel {
 public:
  ProcessChannel(const std::string& command, double timeout_s = 30.0);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  void send(std::string_view bytes) override;
  std::string read_line() override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  double timeout_s_;
  std::string buffer_;
};

// Client for an out-of-process learned predictor. Requests are serialized over the one
// channel and cached by graph hash.
class LearnedEstimator final : public Estimator {
 public:
  LearnedEstimator(std::unique_ptr<PredictorChannel> channel, bool distribution);
  std::string name() const override;
  Estimate estimate(const Plan& plan, const Adg& adg) override;
  bool accepts_cyclic() const override { return true; }

  Estimate predict(const EncodedGraph& graph);
  Estimate predict_text(const std::string& graph_text, int num_agents);
  std::size_t cache_hits() const { return cache_hits_; }
  std::size_t requests() const { return next_id_ - 1; }

 private:
  std::unique_ptr<PredictorChannel> channel_;
  bool distribution_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  std::size_t cache_hits_ = 0;
  std::unordered_map<std::uint64_t, Estimate> cache_;
};

struct EstimatorSpec {
  enum class Kind { ConstExec, SimOracle, LearnedPoint, LearnedDist } kind = Kind::ConstExec;
  double k_u = 0.05;
  bool realistic = false;  // SimOracle noise mode

  // const:<k_u> | oracle | oracle:ideal | oracle:realistic | learned-point | learned-dist
  static EstimatorSpec parse(std::string_view text);
  std::string to_string() const;
};

// `predictor_command` is required for learned kinds.
std::unique_ptr<Estimator> make_estimator(const EstimatorSpec& spec, const SimConfig& config,
                                          const std::string& predictor_command = {}, std::uint64_t seed = 0);

// 100/M * sum |t_i - p_i| / t_i. Throws on a non-positive label or length mismatch.
double mape(std::span<const double> predictions, std::span<const double> labels);

}  // namespace mapfrd
