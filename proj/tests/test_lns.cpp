#include <gtest/gtest.h>

#include <cmath>

#include "mapfrd/lns.hpp"
#include "mapfrd/util.hpp"

using namespace mapfrd;

namespace {

GridInstance with_deadlines(GridMap map, int agents, std::uint64_t seed, double kd) {
  GridInstance inst = random_instance(map, agents, seed);
  inst.deadlines = generate_deadlines(inst, kd, KinodynLimits{}, seed);
  return inst;
}

// Returns the first answer for the initial plan and a fixed (worse or better) answer after.
class ScriptedEstimator : public Estimator {
 public:
  explicit ScriptedEstimator(double later) : later_(later) {}
  std::string name() const override { return "scripted"; }
  bool accepts_cyclic() const override { return true; }
  Estimate estimate(const Plan& plan, const Adg&) override {
    double t = calls_++ == 0 ? 100.0 : later_;
    Estimate e;
    for (std::size_t i = 0; i < plan.paths.size(); ++i) e.agents.emplace_back(PointTime{t});
    return e;
  }
  int calls() const { return calls_; }

 private:
  double later_;
  int calls_ = 0;
};

double chi_square_uniform(const std::vector<int>& counts) {
  double n = 0;
  for (int c : counts) n += c;
  double e = n / static_cast<double>(counts.size());
  double chi = 0;
  for (int c : counts) chi += (c - e) * (c - e) / e;
  return chi;
}

}  // namespace

TEST(PrioritizedPlanning, SingleAgentShortestPath) {
  GridMap m = make_random_map(10, 10, 0.2, 4);
  GridInstance inst = random_instance(m, 1, 4);
  std::vector<GridPath> paths(1);
  std::vector<AgentId> order{0};
  ASSERT_TRUE(prioritized_planning(inst, order, ConstraintTable(m.size()), paths));
  auto d = m.distances_from(inst.agents[0].start);
  EXPECT_EQ(paths[0].arrival(), d[static_cast<std::size_t>(inst.agents[0].goal)]);
}

TEST(PrioritizedPlanning, DisjointCorridors) {
  GridMap m = parse_map("type octile\nheight 3\nwidth 5\nmap\n.....\n@@@@@\n.....\n");
  GridInstance inst;
  inst.map = m;
  inst.agents = {{0, 4, std::nullopt}, {10, 14, std::nullopt}};
  std::vector<GridPath> paths(2);
  std::vector<AgentId> order{1, 0};
  ASSERT_TRUE(prioritized_planning(inst, order, ConstraintTable(m.size()), paths));
  EXPECT_EQ(paths[0].arrival(), 4);
  EXPECT_EQ(paths[1].arrival(), 4);
}

TEST(PrioritizedPlanning, HeadOnWithBayIsCollisionFree) {
  // Corridor with one side bay in the middle.
  GridMap m = parse_map("type octile\nheight 2\nwidth 7\nmap\n.......\n@@@@.@@\n");
  GridInstance inst;
  inst.map = m;
  inst.agents = {{0, 6, std::nullopt}, {6, 0, std::nullopt}};
  std::vector<GridPath> paths(2);
  std::vector<AgentId> order{0, 1};
  ASSERT_TRUE(prioritized_planning(inst, order, ConstraintTable(m.size()), paths));
  EXPECT_EQ(paths[0].arrival(), 6);
  EXPECT_GT(paths[1].arrival(), 6);
  EXPECT_NE(std::find(paths[1].vertices.begin(), paths[1].vertices.end(), 11), paths[1].vertices.end());
  EXPECT_TRUE(detect_conflicts(paths).empty());
  EXPECT_TRUE(detect_rotations(paths).empty());
}

TEST(InitialSolution, InfeasibleReported) {
  // Two agents must swap through a dead-end corridor.
  GridMap m = make_empty_map(3, 1);
  GridInstance inst;
  inst.map = m;
  inst.agents = {{0, 2, std::nullopt}, {2, 0, std::nullopt}};
  inst.deadlines = {100, 100};
  ConstExecEstimator est(0.05, 5.0);
  LnsOptions opt;
  opt.initial_restarts = 3;
  opt.horizon = 12;
  LnsPlanner lns(inst, est, PenaltyKind::Linear, opt);
  EXPECT_THROW(lns.initial_solution(), InfeasibleError);
}

TEST(SeedDistribution, EqualCountsAreUniform) {
  std::vector<int> vc(5, 3);
  auto p = LnsPlanner::seed_distribution(vc, 1.0);
  for (double x : p) EXPECT_NEAR(x, 0.2, 1e-15);
  // Draw 10^4 seeds through the planner itself; chi-square at the 1% level, 4 dof.
  GridInstance inst = with_deadlines(make_empty_map(8, 8), 5, 1, 1000.0);
  ConstExecEstimator est(0.05, 5.0);
  LnsPlanner lns(inst, est, PenaltyKind::Linear, LnsOptions{});
  lns.start();
  ASSERT_EQ(lns.violation_counts(), std::vector<int>(5, 0));
  std::vector<int> seeds(5, 0);
  for (int i = 0; i < 10000; ++i) {
    auto g = lns.select_neighborhood(1);
    ASSERT_EQ(g.size(), 1u);
    ++seeds[static_cast<std::size_t>(g[0])];
  }
  EXPECT_LT(chi_square_uniform(seeds), 13.277);
}

TEST(SeedDistribution, DominantCount) {
  std::vector<int> vc{10, 0, 0};
  auto p = LnsPlanner::seed_distribution(vc, 1.0);
  const double want = std::exp(10.0) / (std::exp(10.0) + 2.0);
  EXPECT_NEAR(p[0], want, 1e-12);
  EXPECT_GT(p[0], 0.999);
  EXPECT_NEAR(p[1], p[2], 1e-18);
  // Huge counts stay finite.
  std::vector<int> big{5000, 4000};
  auto q = LnsPlanner::seed_distribution(big, 1.0);
  EXPECT_NEAR(q[0], 1.0, 1e-12);
  // Temperature flattens.
  auto hot = LnsPlanner::seed_distribution(vc, 1e9);
  EXPECT_NEAR(hot[0], 1.0 / 3.0, 1e-6);
}

TEST(SeedDistribution, DominantCountStatistical) {
  // With one always-late agent the failure seed is almost always that agent.
  GridMap m = make_empty_map(10, 10);
  GridInstance inst = with_deadlines(m, 3, 2, 1000.0);
  inst.deadlines[0] = 1e-3;
  ConstExecEstimator est(0.05, 5.0);
  LnsPlanner lns(inst, est, PenaltyKind::Linear, LnsOptions{});
  lns.start();
  std::vector<int> vc = lns.violation_counts();
  ASSERT_EQ(vc, (std::vector<int>{1, 0, 0}));
  // Ten more misses drive VC to 10.
  for (int i = 0; i < 9; ++i) LnsPlanner::update_violation_counts(vc, lns.estimate(), inst.deadlines);
  EXPECT_EQ(vc[0], 10);
  auto p = LnsPlanner::seed_distribution(vc, 1.0);
  Rng rng(5);
  int hits = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double u = unit_uniform(rng), acc = 0;
    std::size_t k = 0;
    for (; k + 1 < p.size(); ++k) {
      acc += p[k];
      if (u < acc) break;
    }
    hits += k == 0;
  }
  EXPECT_GE(hits, n - 10);
}

TEST(ViolationCounts, Automaton) {
  std::vector<double> d{10, 10};
  std::vector<int> vc(2, 0);
  // Verdict sequence for agent 0: miss miss hit miss; agent 1 always on time.
  const double seq[] = {11, 12, 9, 10.5};
  const int want[] = {1, 2, 0, 1};
  for (int i = 0; i < 4; ++i) {
    Estimate e{{PointTime{seq[i]}, PointTime{5}}};
    LnsPlanner::update_violation_counts(vc, e, d);
    EXPECT_EQ(vc[0], want[i]);
    EXPECT_EQ(vc[1], 0);
  }
  // Exactly on the deadline is a hit; a distribution is judged by its median.
  Estimate at{{PointTime{10}, LogNormalTime{std::log(11.0), 2.0}}};
  LnsPlanner::update_violation_counts(vc, at, d);
  EXPECT_EQ(vc, (std::vector<int>{0, 1}));
}

TEST(Neighborhood, RandomWithFullSizeIsAllAgents) {
  GridInstance inst = with_deadlines(make_empty_map(8, 8), 6, 3, 20.0);
  ConstExecEstimator est(0.05, 5.0);
  LnsOptions opt;
  opt.mode = NeighborhoodMode::Adaptive;
  LnsPlanner lns(inst, est, PenaltyKind::Linear, opt);
  lns.start();
  int seen_random = 0;
  for (int i = 0; i < 200; ++i) {
    NeighborhoodKind kind;
    auto g = lns.select_neighborhood(6, &kind);
    std::sort(g.begin(), g.end());
    EXPECT_TRUE(std::adjacent_find(g.begin(), g.end()) == g.end());
    if (kind != NeighborhoodKind::Random) continue;
    ++seen_random;
    EXPECT_EQ(g, (std::vector<AgentId>{0, 1, 2, 3, 4, 5}));
  }
  EXPECT_GT(seen_random, 20);
}

TEST(Neighborhood, SizeCapsAtAgentCount) {
  GridInstance inst = with_deadlines(make_empty_map(8, 8), 4, 3, 20.0);
  ConstExecEstimator est(0.05, 5.0);
  LnsPlanner lns(inst, est, PenaltyKind::Linear, LnsOptions{});
  lns.start();
  for (int i = 0; i < 50; ++i) {
    auto g = lns.select_neighborhood(10);
    EXPECT_LE(g.size(), 4u);
    EXPECT_GE(g.size(), 1u);
  }
}

TEST(Step, NonImprovingKeepsIncumbent) {
  GridInstance inst = with_deadlines(make_empty_map(8, 8), 6, 5, 1.0);
  ScriptedEstimator est(200.0);
  LnsOptions opt;
  opt.seed = 1;
  LnsPlanner lns(inst, est, PenaltyKind::Linear, opt);
  lns.start();
  const auto before = lns.plan().paths;
  const double p0 = lns.penalty();
  for (int i = 0; i < 20; ++i) EXPECT_FALSE(lns.step());
  EXPECT_EQ(lns.penalty(), p0);
  ASSERT_EQ(lns.plan().paths.size(), before.size());
  for (std::size_t a = 0; a < before.size(); ++a) EXPECT_EQ(lns.plan().paths[a].vertices, before[a].vertices);
}

TEST(Step, ImprovingIsAccepted) {
  GridInstance inst = with_deadlines(make_empty_map(8, 8), 6, 5, 1.0);
  ScriptedEstimator est(50.0);
  LnsPlanner lns(inst, est, PenaltyKind::Linear, LnsOptions{});
  lns.start();
  const double p0 = lns.penalty();
  bool any = false;
  for (int i = 0; i < 5 && !any; ++i) any = lns.step();
  ASSERT_TRUE(any);
  EXPECT_LT(lns.penalty(), p0);
}

TEST(RunLns, OracleTraceNonIncreasingAndCollisionFree) {
  GridInstance inst = with_deadlines(make_empty_map(12, 12), 20, 9, 40.0);
  SimOracleEstimator est{SimConfig{}};
  LnsOptions opt;
  opt.seed = 17;
  opt.max_iterations = 200;
  int callbacks = 0;
  opt.on_iteration = [&](int, const Plan& p) {
    ++callbacks;
    EXPECT_TRUE(detect_conflicts(p.paths).empty());
  };
  auto r = run_lns(inst, est, PenaltyKind::Linear, opt);
  EXPECT_EQ(r.iterations, 200);
  EXPECT_EQ(callbacks, 201);
  ASSERT_EQ(r.trace.size(), 201u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].penalty, r.trace[i - 1].penalty);
  EXPECT_LE(r.penalty, r.trace.front().penalty);
  EXPECT_TRUE(detect_conflicts(r.plan.paths).empty());
  EXPECT_TRUE(detect_rotations(r.plan.paths).empty());
  // Estimator equals the simulator, so the reported penalty is ground truth.
  auto out = simulate(build_adg(r.plan.actions), SimConfig{}, NoiseModel::ideal());
  EXPECT_NEAR(aggregate_times(out.arrival, inst.deadlines, PenaltyKind::Linear), r.penalty, 1e-9);

  auto again = run_lns(inst, est, PenaltyKind::Linear, opt);
  EXPECT_EQ(again.penalty, r.penalty);
  EXPECT_EQ(again.accepted, r.accepted);
  for (std::size_t a = 0; a < r.plan.paths.size(); ++a) EXPECT_EQ(again.plan.paths[a].vertices, r.plan.paths[a].vertices);
}

TEST(RunLns, ZeroBudgetReturnsInitialSolution) {
  GridInstance inst = with_deadlines(make_empty_map(10, 10), 8, 2, 30.0);
  ConstExecEstimator est(0.05, 5.0);
  LnsOptions opt;
  opt.seed = 4;
  LnsPlanner manual(inst, est, PenaltyKind::Linear, opt);
  Plan initial = manual.initial_solution();
  opt.max_iterations = 0;
  auto r = run_lns(inst, est, PenaltyKind::Linear, opt);
  EXPECT_EQ(r.iterations, 0);
  ASSERT_EQ(r.trace.size(), 1u);
  for (std::size_t a = 0; a < initial.paths.size(); ++a) EXPECT_EQ(r.plan.paths[a].vertices, initial.paths[a].vertices);
  opt.max_iterations.reset();
  EXPECT_EQ(run_lns(inst, est, PenaltyKind::Linear, opt).iterations, 0);
}

TEST(RunLns, AdaptiveWeightsStayInBounds) {
  GridInstance inst = with_deadlines(make_random_map(12, 12, 0.15, 3), 12, 3, 30.0);
  ConstExecEstimator est(0.05, 5.0);
  LnsOptions opt;
  opt.mode = NeighborhoodMode::Adaptive;
  opt.seed = 8;
  LnsPlanner lns(inst, est, PenaltyKind::Percentage, opt);
  lns.start();
  for (int i = 0; i < 100; ++i) {
    lns.step();
    for (double w : lns.weights()) {
      EXPECT_GE(w, opt.weight_min);
      EXPECT_LE(w, 1.0);
    }
  }
  EXPECT_TRUE(detect_conflicts(lns.plan().paths).empty());
}

TEST(TraceCsv, Format) {
  std::vector<TracePoint> t{{0, 0.0, 2.5}, {1, 0.25, 1.0}};
  auto csv = penalty_trace_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,elapsed_s,avg_penalty");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
