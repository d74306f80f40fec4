#include "mapfrd/estimators.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "mapfrd/util.hpp"

namespace mapfrd {

ConstExecEstimator::ConstExecEstimator(double k_u, double v_max, double cell_size)
    : k_u_(k_u), v_max_(v_max), cell_size_(cell_size) {
  if (!(k_u > 0)) throw std::invalid_argument("K_u must be positive");
  if (!(v_max > 0)) throw std::invalid_argument("v_max must be positive");
}

std::string ConstExecEstimator::name() const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ConstExec(%g)", k_u_);
  return buf;
}

Estimate ConstExecEstimator::estimate(const Plan& plan, const Adg&) {
  Estimate e;
  e.agents.reserve(plan.paths.size());
  for (const auto& p : plan.paths) e.agents.emplace_back(PointTime{time_for(p.arrival())});
  return e;
}

SimOracleEstimator::SimOracleEstimator(SimConfig config, NoiseModel noise) : config_(config), noise_(noise) {}

std::string SimOracleEstimator::name() const { return noise_.deterministic() ? "SimOracle(ideal)" : "SimOracle(realistic)"; }

Estimate SimOracleEstimator::estimate(const Plan&, const Adg& adg) {
  auto check = check_acyclic(adg);
  if (!check.acyclic) throw UnsupportedInput("simulator oracle cannot execute a cyclic dependency graph");
  auto outcome = simulate(adg, config_, noise_);
  Estimate e;
  e.agents.reserve(outcome.arrival.size());
  for (double t : outcome.arrival) e.agents.emplace_back(PointTime{t});
  return e;
}

namespace {

std::string sig9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <class T>
bool parse_num(const std::string& s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::string format_request(std::uint64_t id, std::string_view graph_text) {
  std::string out = "PREDICT " + std::to_string(id) + " " + std::to_string(graph_text.size()) + "\n";
  out.append(graph_text);
  return out;
}

std::string format_result(std::uint64_t id, const Estimate& estimate) {
  std::string out = "RESULT " + std::to_string(id) + " " + std::to_string(estimate.agents.size()) + "\n";
  for (const auto& a : estimate.agents) {
    if (const auto* p = std::get_if<PointTime>(&a)) {
      out += "point " + sig9(p->seconds) + "\n";
    } else {
      const auto& d = std::get<LogNormalTime>(a);
      out += "dist " + sig9(d.mu) + " " + sig9(d.sigma) + "\n";
    }
  }
  return out;
}

std::string format_error(std::uint64_t id, std::string_view message) {
  std::string msg(message);
  for (auto& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return "ERROR " + std::to_string(id) + " " + msg + "\n";
}

std::optional<PredictRequest> read_request(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) return std::nullopt;
  auto tok = split_ws(header);
  PredictRequest req;
  if (tok.size() < 2 || tok[0] != "PREDICT" || !parse_num(tok[1], req.id)) {
    throw std::runtime_error("malformed request header '" + header + "'");
  }
  long long n = 0;
  if (tok.size() != 3 || !parse_num(tok[2], n) || n < 0) throw PredictorError(req.id, "malformed byte count");
  req.graph.resize(static_cast<std::size_t>(n));
  in.read(req.graph.data(), n);
  if (in.gcount() != n) throw PredictorError(req.id, "request body shorter than declared byte count");
  return req;
}

// ---- ProcessChannel ---------------------------------------------------------

ProcessChannel::ProcessChannel(const std::string& command, double timeout_s) : timeout_s_(timeout_s) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw std::runtime_error("pipe() failed");
  pid_ = fork();
  if (pid_ < 0) throw std::runtime_error("fork() failed");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  signal(SIGPIPE, SIG_IGN);
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks the server to exit; give it a moment before killing it.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) return;
      usleep(10000);
    }
    kill(pid_, SIGTERM);
    waitpid(pid_, &status, 0);
  }
}

void ProcessChannel::send(std::string_view bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t n = write(to_child_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("write to predictor failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string ProcessChannel::read_line() {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(timeout_s_);
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0) throw std::runtime_error("predictor timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    int r = poll(&pfd, 1, static_cast<int>(left));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) throw std::runtime_error("predictor timed out");
    char buf[4096];
    ssize_t n = read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw std::runtime_error("predictor closed its output");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

// ---- LearnedEstimator -------------------------------------------------------

LearnedEstimator::LearnedEstimator(std::unique_ptr<PredictorChannel> channel, bool distribution)
    : channel_(std::move(channel)), distribution_(distribution) {}

std::string LearnedEstimator::name() const { return distribution_ ? "Learned(dist)" : "Learned(point)"; }

Estimate LearnedEstimator::estimate(const Plan&, const Adg& adg) { return predict(encode(adg)); }

Estimate LearnedEstimator::predict(const EncodedGraph& graph) {
  EncodedGraph unlabeled = graph;
  unlabeled.labels.reset();
  return predict_text(serialize_graph(unlabeled), graph.num_agents);
}

Estimate LearnedEstimator::predict_text(const std::string& graph_text, int num_agents) {
  std::lock_guard lock(mutex_);
  const std::uint64_t key = fnv1a(graph_text);
  if (auto it = cache_.find(key); it != cache_.end()) {
    ++cache_hits_;
    return it->second;
  }
  const std::uint64_t id = next_id_++;
  std::string header;
  try {
    channel_->send(format_request(id, graph_text));
    header = channel_->read_line();
  } catch (const std::runtime_error& e) {
    throw PredictorError(id, e.what());
  }
  auto tok = split_ws(header);
  std::uint64_t got = 0;
  if (tok.size() < 2 || !parse_num(tok[1], got)) throw PredictorError(id, "malformed response '" + header + "'");
  if (got != id) throw PredictorError(id, "response for request " + tok[1]);
  if (tok[0] == "ERROR") {
    auto pos = header.find(' ', header.find(' ') + 1);
    throw PredictorError(id, "predictor error: " + (pos == std::string::npos ? std::string() : header.substr(pos + 1)));
  }
  int count = -1;
  if (tok[0] != "RESULT" || tok.size() != 3 || !parse_num(tok[2], count)) {
    throw PredictorError(id, "malformed response '" + header + "'");
  }
  Estimate est;
  for (int i = 0; i < count; ++i) {
    std::string line;
    try {
      line = channel_->read_line();
    } catch (const std::runtime_error& e) {
      throw PredictorError(id, e.what());
    }
    auto f = split_ws(line);
    double a = 0, b = 0;
    if (f.size() == 2 && f[0] == "point" && parse_num(f[1], a)) {
      est.agents.emplace_back(PointTime{a});
    } else if (f.size() == 3 && f[0] == "dist" && parse_num(f[1], a) && parse_num(f[2], b) && b >= 0) {
      est.agents.emplace_back(LogNormalTime{a, b});
    } else {
      throw PredictorError(id, "malformed result line '" + line + "'");
    }
  }
  if (count != num_agents) {
    throw PredictorError(id, "expected " + std::to_string(num_agents) + " agents, got " + std::to_string(count));
  }
  if (count > 0 && est.is_distribution() != distribution_) {
    throw PredictorError(id, distribution_ ? "expected distribution results" : "expected point results");
  }
  cache_.emplace(key, est);
  return est;
}

// ---- factory ----------------------------------------------------------------

EstimatorSpec EstimatorSpec::parse(std::string_view text) {
  EstimatorSpec s;
  if (text.rfind("const:", 0) == 0) {
    s.kind = Kind::ConstExec;
    std::string v(text.substr(6));
    if (!parse_num(v, s.k_u) || !(s.k_u > 0)) throw std::invalid_argument("bad K_u in '" + std::string(text) + "'");
  } else if (text == "oracle" || text == "oracle:ideal") {
    s.kind = Kind::SimOracle;
  } else if (text == "oracle:realistic") {
    s.kind = Kind::SimOracle;
    s.realistic = true;
  } else if (text == "learned-point") {
    s.kind = Kind::LearnedPoint;
  } else if (text == "learned-dist") {
    s.kind = Kind::LearnedDist;
  } else {
    throw std::invalid_argument("unknown estimator '" + std::string(text) + "'");
  }
  return s;
}

std::string EstimatorSpec::to_string() const {
  switch (kind) {
    case Kind::ConstExec: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "const:%g", k_u);
      return buf;
    }
    case Kind::SimOracle: return realistic ? "oracle:realistic" : "oracle";
    case Kind::LearnedPoint: return "learned-point";
    case Kind::LearnedDist: return "learned-dist";
  }
  return "?";
}

std::unique_ptr<Estimator> make_estimator(const EstimatorSpec& spec, const SimConfig& config,
                                          const std::string& predictor_command, std::uint64_t seed) {
  switch (spec.kind) {
    case EstimatorSpec::Kind::ConstExec:
      return std::make_unique<ConstExecEstimator>(spec.k_u, config.limits.v_max, config.cell_size);
    case EstimatorSpec::Kind::SimOracle:
      return std::make_unique<SimOracleEstimator>(config, spec.realistic ? NoiseModel::realistic(seed) : NoiseModel::ideal());
    case EstimatorSpec::Kind::LearnedPoint:
    case EstimatorSpec::Kind::LearnedDist:
      if (predictor_command.empty()) throw std::invalid_argument("learned estimators need a predictor command");
      return std::make_unique<LearnedEstimator>(std::make_unique<ProcessChannel>(predictor_command),
                                                spec.kind == EstimatorSpec::Kind::LearnedDist);
  }
  return nullptr;
}

double mape(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("prediction and label counts differ");
  if (labels.empty()) throw std::invalid_argument("mape of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] > 0)) throw std::invalid_argument("label " + std::to_string(i) + " is not positive");
    sum += std::abs(labels[i] - predictions[i]) / labels[i];
  }
  return 100.0 * sum / static_cast<double>(labels.size());
}

}  // namespace mapfrd
