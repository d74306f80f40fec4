#include "mapfrd/cbs.hpp"

#include <chrono>
#include <memory>
#include <queue>
#include <tuple>

#include "mapfrd/adg.hpp"
#include "mapfrd/util.hpp"

namespace mapfrd {

NodeEstimate estimate_node(const GridInstance& instance, std::span<const GridPath> paths, Estimator& estimator,
                           PenaltyKind kind, const SimConfig& config) {
  Plan plan = make_plan(instance, std::vector<GridPath>(paths.begin(), paths.end()));
  Adg adg = build_adg(plan.actions);
  NodeEstimate out;
  if (!estimator.accepts_cyclic() && !check_acyclic(adg).acyclic) {
    ConstExecEstimator fallback(0.05, config.limits.v_max, config.cell_size);
    out.estimate = fallback.estimate(plan, adg);
    out.used_fallback = true;
  } else {
    out.estimate = estimator.estimate(plan, adg);
  }
  out.penalty = aggregate(out.estimate, instance.deadlines, kind);
  return out;
}

namespace {

struct OpenOrder {
  bool operator()(const CtNode* a, const CtNode* b) const {
    // priority_queue pops the largest; invert for a min-queue.
    return std::make_tuple(a->penalty, a->conflict_count(), a->id) >
           std::make_tuple(b->penalty, b->conflict_count(), b->id);
  }
};

}  // namespace

CbsResult run_cbs(const GridInstance& instance, Estimator& estimator, PenaltyKind kind, const CbsOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  if (instance.deadlines.size() != instance.agents.size()) throw std::invalid_argument("instance has no deadlines");

  CbsStats stats;
  std::vector<std::unique_ptr<CtNode>> store;
  std::priority_queue<CtNode*, std::vector<CtNode*>, OpenOrder> open;
  const CtNode* best_free = nullptr;

  auto finish_node = [&](CtNode& node) {
    node.conflicts = detect_conflicts(node.paths);
    node.rotations = node.conflicts.empty() ? detect_rotations(node.paths) : std::vector<Rotation>{};
    auto est = estimate_node(instance, node.paths, estimator, kind, options.config);
    node.estimate = std::move(est.estimate);
    node.penalty = est.penalty;
    node.used_fallback = est.used_fallback;
    if (est.used_fallback) ++stats.fallbacks;
    node.id = static_cast<std::uint64_t>(stats.generated++);
    if (node.conflict_count() == 0 && (!best_free || node.penalty < best_free->penalty)) best_free = &node;
  };

  // Low-level search: shortest under `constraints`, fewest collisions with `others` among those.
  auto replan = [&](AgentId agent, std::span<const Constraint> constraints, std::span<const GridPath> others) {
    ConstraintTable table(instance.map.size());
    for (const auto& c : constraints) table.add(c);
    SearchOptions opts;
    opts.horizon = options.horizon;
    opts.avoid = others;
    const auto& task = instance.agents[static_cast<std::size_t>(agent)];
    return shortest_path(instance.map, task.start, task.goal, table, opts);
  };

  auto root = std::make_unique<CtNode>();
  root->paths.resize(instance.agents.size());
  for (std::size_t i = 0; i < instance.agents.size(); ++i) {
    auto p = replan(static_cast<AgentId>(i), {}, std::span<const GridPath>(root->paths.data(), i));
    if (!p) throw CbsFailure("agent " + std::to_string(i) + " cannot reach its goal", stats);
    p->agent = static_cast<AgentId>(i);
    root->paths[i] = std::move(*p);
  }
  finish_node(*root);
  open.push(root.get());
  store.push_back(std::move(root));

  auto result_from = [&](const CtNode& node) {
    CbsResult r;
    r.plan = make_plan(instance, node.paths);
    r.estimate = node.estimate;
    r.penalty = node.penalty;
    stats.runtime_s = elapsed();
    stats.final_penalty = node.penalty;
    r.stats = stats;
    return r;
  };

  while (!open.empty()) {
    if (elapsed() >= options.time_limit_s || (options.max_expansions && stats.expanded >= *options.max_expansions)) {
      stats.timed_out = true;
      break;
    }
    CtNode* node = open.top();
    open.pop();
    ++stats.expanded;
    if (node->conflict_count() == 0) return result_from(*node);

    std::vector<Constraint> branches;
    if (!node->conflicts.empty()) {
      const Conflict& c = node->conflicts.front();
      for (int side = 0; side < 2; ++side) {
        Constraint con;
        con.timestep = c.timestep;
        con.agent = side == 0 ? c.agent_a : c.agent_b;
        if (c.kind == ConflictKind::Vertex) {
          con.kind = ConstraintKind::Vertex;
          con.cell = c.cell;
          // Target conflict: the other agent already rests at its goal here. Either it
          // arrives later (the vertex constraint forces that) or nobody else may use the
          // cell from now on.
          const AgentId other = side == 0 ? c.agent_b : c.agent_a;
          const auto& op = node->paths[static_cast<std::size_t>(other)];
          if (op.vertices.back() == c.cell && op.arrival() <= c.timestep) con.kind = ConstraintKind::VertexFrom;
        } else {
          con.kind = ConstraintKind::Edge;
          con.cell = side == 0 ? c.cell : c.other_cell;
          con.to = side == 0 ? c.other_cell : c.cell;
        }
        branches.push_back(con);
      }
    } else {
      const Rotation& r = node->rotations.front();
      for (std::size_t k = 0; k < r.agents.size(); ++k) {
        Constraint con;
        con.agent = r.agents[k];
        con.kind = ConstraintKind::Edge;
        con.cell = r.cells[k];
        con.to = r.cells[(k + 1) % r.cells.size()];
        con.timestep = r.timestep;
        branches.push_back(con);
      }
    }
    std::vector<std::unique_ptr<CtNode>> children;
    for (const Constraint& con : branches) {
      auto child = std::make_unique<CtNode>();
      child->constraints = node->constraints;
      child->constraints.push_back(con);
      std::vector<Constraint> mine;
      for (const auto& k : child->constraints) {
        if (k.agent == con.agent) mine.push_back(k);
      }
      std::vector<GridPath> others;
      for (const auto& q : node->paths) {
        if (q.agent != con.agent) others.push_back(q);
      }
      auto p = replan(con.agent, mine, others);
      if (!p) continue;
      p->agent = con.agent;
      child->paths = node->paths;
      child->paths[static_cast<std::size_t>(con.agent)] = std::move(*p);
      finish_node(*child);
      children.push_back(std::move(child));
    }
    // Bypass: a replanned path that fixes conflicts at no extra penalty also satisfies the
    // parent's constraints, so adopt it without the new constraint instead of splitting.
    for (auto& child : children) {
      if (child->penalty <= node->penalty && child->conflict_count() < node->conflict_count()) {
        child->constraints.pop_back();
        ++stats.bypasses;
        children = [&] {
          std::vector<std::unique_ptr<CtNode>> only;
          only.push_back(std::move(child));
          return only;
        }();
        break;
      }
    }
    for (auto& child : children) {
      open.push(child.get());
      store.push_back(std::move(child));
    }
  }
  if (best_free) return result_from(*best_free);
  stats.runtime_s = elapsed();
  throw CbsFailure(stats.timed_out ? "budget exhausted without a conflict-free node"
                                   : "open list exhausted: instance unsolvable",
                   stats);
}

std::string cbs_stats_csv(const CbsStats& s) {
  return "expanded,generated,runtime_s,final_penalty\n" + std::to_string(s.expanded) + "," +
         std::to_string(s.generated) + "," + fixed(s.runtime_s, 6) + "," + fixed(s.final_penalty, 9) + "\n";
}

}  // namespace mapfrd
