#include "mapfrd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "mapfrd/util.hpp"

namespace mapfrd {

StopProfile::StopProfile(double t0, double x0, double v0, double distance, double accel, double decel, double v_cap)
    : t0_(t0), x0_(x0), v0_(std::clamp(v0, 0.0, v_cap)), distance_(std::max(distance, 0.0)), a_(accel), b_(decel) {
  if (distance_ <= 0.0) {
    // Already at the target; any residual speed is rounding noise.
    v0_ = 0.0;
    return;
  }
  const double brake_needed = v0_ * v0_ / (2.0 * b_);
  if (brake_needed >= distance_) {
    // Only reachable through rounding: brake slightly harder to stop exactly at the target.
    b_ = v0_ * v0_ / (2.0 * distance_);
    vp_ = v0_;
    t3_ = vp_ / b_;
    return;
  }
  double vp = std::sqrt((2.0 * a_ * b_ * distance_ + b_ * v0_ * v0_) / (a_ + b_));
  vp_ = std::max(std::min(vp, v_cap), v0_);
  d1_ = (vp_ * vp_ - v0_ * v0_) / (2.0 * a_);
  t1_ = (vp_ - v0_) / a_;
  const double d3 = vp_ * vp_ / (2.0 * b_);
  t3_ = vp_ / b_;
  dc_ = std::max(0.0, distance_ - d1_ - d3);
  tc_ = vp_ > 0 ? dc_ / vp_ : 0.0;
}

double StopProfile::time_at(double x) const {
  double s = std::clamp(x - x0_, 0.0, distance_);
  if (s >= distance_) return end_time();
  if (s <= d1_) {
    double disc = v0_ * v0_ + 2.0 * a_ * s;
    return t0_ + (std::sqrt(disc) - v0_) / a_;
  }
  if (s <= d1_ + dc_) return t0_ + t1_ + (s - d1_) / vp_;
  double sb = s - d1_ - dc_;
  double disc = std::max(0.0, vp_ * vp_ - 2.0 * b_ * sb);
  return t0_ + t1_ + tc_ + (vp_ - std::sqrt(disc)) / b_;
}

double StopProfile::position(double t) const {
  double tau = t - t0_;
  if (tau <= 0) return x0_;
  if (tau <= t1_) return x0_ + v0_ * tau + 0.5 * a_ * tau * tau;
  if (tau <= t1_ + tc_) return x0_ + d1_ + vp_ * (tau - t1_);
  if (tau < t1_ + tc_ + t3_) {
    double s = tau - t1_ - tc_;
    return x0_ + d1_ + dc_ + vp_ * s - 0.5 * b_ * s * s;
  }
  return x0_ + distance_;
}

double StopProfile::speed(double t) const {
  double tau = t - t0_;
  if (tau <= 0) return v0_;
  if (tau <= t1_) return v0_ + a_ * tau;
  if (tau <= t1_ + tc_) return vp_;
  if (tau < t1_ + tc_ + t3_) return std::max(0.0, vp_ - b_ * (tau - t1_ - tc_));
  return 0.0;
}

std::vector<StopProfile::Piece> StopProfile::pieces(double until) const {
  std::vector<Piece> out;
  const double bounds[4] = {t0_, t0_ + t1_, t0_ + t1_ + tc_, end_time()};
  const double acc[3] = {a_, 0.0, -b_};
  for (int i = 0; i < 3; ++i) {
    double s = bounds[i];
    double e = std::min(bounds[i + 1], until);
    if (e <= s) continue;
    out.push_back({s, e, speed(s), acc[i]});
  }
  return out;
}

ActionTiming action_duration(const Action& action, double entry_speed, int run_length_cells, const SimConfig& config) {
  const auto& lim = config.limits;
  lim.validate();
  if (entry_speed < 0 || entry_speed > lim.v_max) throw std::invalid_argument("entry speed outside [0, v_max]");
  switch (action.kind) {
    case ActionKind::Rotate:
      if (entry_speed > 0) throw std::invalid_argument("rotation requires standstill");
      return {action.rotation_degrees() / lim.omega_max_deg, 0.0};
    case ActionKind::Wait:
      if (entry_speed > 0) throw std::invalid_argument("wait requires standstill");
      return {config.dwell(), 0.0};
    case ActionKind::MoveForward: {
      if (run_length_cells < 1) throw std::invalid_argument("run length must cover the move");
      StopProfile p(0.0, 0.0, entry_speed, run_length_cells * config.cell_size, lim.a_max, -lim.a_min, lim.v_max);
      double t = p.time_at(config.cell_size);
      return {t, p.speed(t)};
    }
  }
  return {};
}

namespace {

constexpr double kEps = 1e-9;

struct Segment {
  bool run = false;
  std::vector<int> nodes;
  double v_cap = 0.0;  // runs only
};

struct AgentState {
  std::vector<Segment> segs;
  std::size_t seg = 0;
  int k = 0;  // current move within a run
  bool started = false;
  double x = 0.0, v = 0.0;
  StopProfile prof;
  bool has_prof = false;
  std::uint64_t token = 0;
  int waiting_node = -1;
  bool finished = false;
};

enum EventType : int { kGateOpen = 0, kWake = 1 };

struct Event {
  double time;
  AgentId agent;
  int action_index;
  int type;
  int node;
  std::uint64_t token;

  bool operator>(const Event& o) const {
    return std::tie(time, agent, action_index, type) > std::tie(o.time, o.agent, o.action_index, o.type);
  }
};

class Simulator {
 public:
  Simulator(const Adg& adg, const SimConfig& config, const NoiseModel& noise) : adg_(adg), cfg_(config) {
    const auto n = adg.nodes.size();
    factor_.assign(n, 1.0);
    latency_.assign(adg.edges.size(), 0.0);
    Rng rng(noise.seed);
    if (noise.sigma > 0) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& f : factor_) f = std::exp(noise.sigma * normal(rng));
    }
    for (std::size_t e = 0; e < adg.edges.size(); ++e) {
      if (adg.edges[e].type != EdgeType::Type2) continue;
      latency_[e] = noise.latency_const + (noise.latency_jitter > 0 ? noise.latency_jitter * unit_uniform(rng) : 0.0);
    }
    duration_.assign(n, 0.0);
    start_.assign(n, -1.0);
    end_.assign(n, -1.0);
    pending_.assign(n, 0);
    release_.assign(n, 0.0);
    gate_open_.assign(n, 0);
    for (const auto& e : adg.edges) {
      if (e.type == EdgeType::Type2) ++pending_[static_cast<std::size_t>(e.dst)];
    }
    for (std::size_t i = 0; i < n; ++i) gate_open_[i] = pending_[i] == 0;
    build_segments();
  }

  ExecOutcome run() {
    for (AgentId a = 0; a < adg_.num_agents; ++a) try_start(a, 0.0);
    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      if (ev.type == kGateOpen) {
        on_gate_open(ev.node, ev.time);
      } else if (ev.token == agents_[static_cast<std::size_t>(ev.agent)].token) {
        on_wake(ev.agent, ev.time);
      }
    }
    ExecOutcome out;
    out.arrival.assign(static_cast<std::size_t>(adg_.num_agents), 0.0);
    for (AgentId a = 0; a < adg_.num_agents; ++a) {
      const auto& st = agents_[static_cast<std::size_t>(a)];
      if (!st.finished) {
        throw DeadlockError("agent " + std::to_string(a) + " never finished; the dependency graph deadlocks", {});
      }
      const auto& ids = adg_.agent_nodes[static_cast<std::size_t>(a)];
      if (!ids.empty()) out.arrival[static_cast<std::size_t>(a)] = end_[static_cast<std::size_t>(ids.back())];
      for (int id : ids) {
        const auto& node = adg_.nodes[static_cast<std::size_t>(id)];
        out.trace.push_back({a, node.index, node.action.kind, start_[static_cast<std::size_t>(id)], end_[static_cast<std::size_t>(id)]});
      }
      out.makespan = std::max(out.makespan, out.arrival[static_cast<std::size_t>(a)]);
    }
    out.motion = std::move(motion_);
    std::stable_sort(out.motion.begin(), out.motion.end(),
                     [](const MotionPiece& x, const MotionPiece& y) { return x.agent < y.agent; });
    return out;
  }

 private:
  double accel() const { return cfg_.limits.a_max; }
  double decel() const { return -cfg_.limits.a_min; }
  double cs() const { return cfg_.cell_size; }

  void build_segments() {
    agents_.resize(static_cast<std::size_t>(adg_.num_agents));
    const double omega = cfg_.limits.omega_max_deg;
    for (AgentId a = 0; a < adg_.num_agents; ++a) {
      auto& segs = agents_[static_cast<std::size_t>(a)].segs;
      const auto& ids = adg_.agent_nodes[static_cast<std::size_t>(a)];
      for (std::size_t i = 0; i < ids.size();) {
        const int id = ids[i];
        const auto& act = adg_.nodes[static_cast<std::size_t>(id)].action;
        const double slow = std::max(1.0, factor_[static_cast<std::size_t>(id)]);
        if (act.kind != ActionKind::MoveForward) {
          duration_[static_cast<std::size_t>(id)] =
              (act.kind == ActionKind::Rotate ? act.rotation_degrees() / omega : cfg_.dwell()) * slow;
          segs.push_back({false, {id}, 0.0});
          ++i;
          continue;
        }
        Segment run{true, {}, 0.0};
        double log_sum = 0.0;
        while (i < ids.size() && adg_.nodes[static_cast<std::size_t>(ids[i])].action.kind == ActionKind::MoveForward) {
          run.nodes.push_back(ids[i]);
          log_sum += std::log(factor_[static_cast<std::size_t>(ids[i])]);
          ++i;
        }
        const double g = std::max(1.0, std::exp(log_sum / static_cast<double>(run.nodes.size())));
        run.v_cap = cfg_.limits.v_max / g;
        if (!cfg_.fixed_durations) {
          segs.push_back(std::move(run));
          continue;
        }
        // Ungated profile, split per move.
        const int len = static_cast<int>(run.nodes.size());
        StopProfile p(0.0, 0.0, 0.0, len * cs(), accel(), decel(), run.v_cap);
        for (int k = 0; k < len; ++k) {
          const int node = run.nodes[static_cast<std::size_t>(k)];
          duration_[static_cast<std::size_t>(node)] = p.time_at((k + 1) * cs()) - p.time_at(k * cs());
          segs.push_back({false, {node}, 0.0});
        }
      }
    }
  }

  int action_index(int node) const { return adg_.nodes[static_cast<std::size_t>(node)].index; }

  void push_wake(AgentId a, double time, int node) {
    auto& st = agents_[static_cast<std::size_t>(a)];
    ++st.token;
    queue_.push({time, a, action_index(node), kWake, node, st.token});
  }

  void try_start(AgentId a, double now) {
    auto& st = agents_[static_cast<std::size_t>(a)];
    if (st.seg >= st.segs.size()) {
      st.finished = true;
      return;
    }
    const Segment& seg = st.segs[st.seg];
    const int first = seg.nodes.front();
    if (!seg.run) {
      if (!gate_open_[static_cast<std::size_t>(first)]) {
        st.waiting_node = first;
        return;
      }
      start_[static_cast<std::size_t>(first)] = now;
      push_wake(a, now + duration_[static_cast<std::size_t>(first)], first);
      return;
    }
    st.k = 0;
    st.x = 0.0;
    st.v = 0.0;
    st.has_prof = false;
    if (!gate_open_[static_cast<std::size_t>(first)]) {
      st.started = false;
      st.waiting_node = first;
      return;
    }
    st.started = true;
    start_[static_cast<std::size_t>(first)] = now;
    plan(a, now);
  }

  // Folds the executed part of the current profile into the motion log and the state.
  void settle(AgentId a, double now) {
    auto& st = agents_[static_cast<std::size_t>(a)];
    if (!st.has_prof) return;
    for (const auto& p : st.prof.pieces(now)) motion_.push_back({a, p.t0, p.t1, p.v0, p.accel});
    st.x = st.prof.position(now);
    st.v = st.prof.speed(now);
    st.has_prof = false;
  }

  // Re-plans the run from the current state: stop at the first closed gate or the run end.
  void plan(AgentId a, double now) {
    auto& st = agents_[static_cast<std::size_t>(a)];
    const Segment& seg = st.segs[st.seg];
    const int len = static_cast<int>(seg.nodes.size());
    double stop = len * cs();
    for (int j = st.k + 1; j < len; ++j) {
      if (!gate_open_[static_cast<std::size_t>(seg.nodes[static_cast<std::size_t>(j)])]) {
        stop = j * cs();
        break;
      }
    }
    st.prof = StopProfile(now, st.x, st.v, stop - st.x, accel(), decel(), seg.v_cap);
    st.has_prof = true;
    const int node = seg.nodes[static_cast<std::size_t>(st.k)];
    push_wake(a, st.prof.time_at((st.k + 1) * cs()), node);
  }

  void complete(int node, double now) {
    end_[static_cast<std::size_t>(node)] = now;
    for (int e : adg_.out_edges[static_cast<std::size_t>(node)]) {
      const auto& edge = adg_.edges[static_cast<std::size_t>(e)];
      if (edge.type != EdgeType::Type2) continue;
      const auto d = static_cast<std::size_t>(edge.dst);
      release_[d] = std::max(release_[d], now + latency_[static_cast<std::size_t>(e)]);
      if (--pending_[d] == 0) {
        queue_.push({release_[d], adg_.nodes[d].agent, adg_.nodes[d].index, kGateOpen, edge.dst, 0});
      }
    }
  }

  void on_wake(AgentId a, double now) {
    auto& st = agents_[static_cast<std::size_t>(a)];
    Segment& seg = st.segs[st.seg];
    if (!seg.run) {
      complete(seg.nodes.front(), now);
      ++st.seg;
      try_start(a, now);
      return;
    }
    const int len = static_cast<int>(seg.nodes.size());
    complete(seg.nodes[static_cast<std::size_t>(st.k)], now);
    ++st.k;
    const double boundary = st.k * cs();
    if (st.k == len) {
      settle(a, now);
      st.v = 0.0;
      ++st.seg;
      try_start(a, now);
      return;
    }
    const int next = seg.nodes[static_cast<std::size_t>(st.k)];
    if (gate_open_[static_cast<std::size_t>(next)]) {
      start_[static_cast<std::size_t>(next)] = now;
      if (st.prof.target() < (st.k + 1) * cs() - kEps) {
        settle(a, now);
        st.x = boundary;
        plan(a, now);
      } else {
        push_wake(a, st.prof.time_at((st.k + 1) * cs()), next);
      }
      return;
    }
    settle(a, now);
    st.x = boundary;
    st.v = 0.0;
    st.started = false;
    st.waiting_node = next;
  }

  void on_gate_open(int node, double now) {
    gate_open_[static_cast<std::size_t>(node)] = 1;
    const AgentId a = adg_.nodes[static_cast<std::size_t>(node)].agent;
    auto& st = agents_[static_cast<std::size_t>(a)];
    if (st.finished || st.seg >= st.segs.size()) return;
    const Segment& seg = st.segs[st.seg];
    if (st.waiting_node == node) {
      st.waiting_node = -1;
      start_[static_cast<std::size_t>(node)] = now;
      if (!seg.run) {
        push_wake(a, now + duration_[static_cast<std::size_t>(node)], node);
      } else {
        st.started = true;
        plan(a, now);
      }
      return;
    }
    if (!seg.run || !st.has_prof) return;
    // Moving toward a stop at this gate: extend the profile.
    auto it = std::find(seg.nodes.begin(), seg.nodes.end(), node);
    if (it == seg.nodes.end()) return;
    const int j = static_cast<int>(it - seg.nodes.begin());
    if (j <= st.k || std::abs(st.prof.target() - j * cs()) > kEps) return;
    settle(a, now);
    plan(a, now);
  }

  const Adg& adg_;
  const SimConfig& cfg_;
  std::vector<double> factor_, latency_, duration_, start_, end_, release_;
  std::vector<int> pending_;
  std::vector<std::uint8_t> gate_open_;
  std::vector<AgentState> agents_;
  std::vector<MotionPiece> motion_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
};

}  // namespace

ExecOutcome simulate(const Adg& adg, const SimConfig& config, const NoiseModel& noise) {
  config.limits.validate();
  auto check = check_acyclic(adg);
  if (!check.acyclic) throw DeadlockError("dependency graph has a cycle", check.cycle);
  Simulator sim(adg, config, noise);
  return sim.run();
}

std::string trace_csv(const ExecOutcome& outcome) {
  std::string out = "agent,action_index,kind,start_s,end_s\n";
  for (const auto& ev : outcome.trace) {
    out += std::to_string(ev.agent) + "," + std::to_string(ev.action_index) + "," + action_kind_name(ev.kind) + "," +
           fixed(ev.start, 9) + "," + fixed(ev.end, 9) + "\n";
  }
  return out;
}

LabeledDataset label_dataset(const std::vector<Plan>& plans, const SimConfig& config, const NoiseModel& noise) {
  LabeledDataset out;
  std::set<int> seen_soc;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (!seen_soc.insert(plans[i].sum_of_costs()).second) continue;
    try {
      Adg adg = build_adg(plans[i].actions);
      EncodedGraph g = encode(adg);
      NoiseModel per_plan = noise;
      per_plan.seed = derive_seed(noise.seed, "plan" + std::to_string(i));
      g.labels = simulate(adg, config, per_plan).arrival;
      out.graphs.push_back(std::move(g));
      out.source.push_back(static_cast<int>(i));
    } catch (const std::exception& e) {
      out.errors.push_back("plan " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mapfrd
