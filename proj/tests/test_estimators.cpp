#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <sstream>

#include "mapfrd/estimators.hpp"
#include "mapfrd/lns.hpp"

using namespace mapfrd;

namespace {

Plan plan_of(const GridMap& map, std::vector<GridPath> paths) {
  GridInstance inst;
  inst.map = map;
  for (const auto& p : paths) inst.agents.push_back({p.vertices.front(), p.vertices.back(), std::nullopt});
  return make_plan(inst, std::move(paths));
}

Plan random_pp_plan(int side, int agents, std::uint64_t seed) {
  GridMap m = make_random_map(side, side, 0.15, seed);
  GridInstance inst = random_instance(m, agents, seed);
  std::vector<AgentId> order(static_cast<std::size_t>(agents));
  for (int i = 0; i < agents; ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<GridPath> paths(static_cast<std::size_t>(agents));
  if (!prioritized_planning(inst, order, ConstraintTable(m.size()), paths)) return {};
  return make_plan(inst, paths);
}

// Replays canned response lines and records what was sent.
class ScriptedChannel : public PredictorChannel {
 public:
  explicit ScriptedChannel(std::deque<std::string> lines) : lines_(std::move(lines)) {}
  void send(std::string_view bytes) override { sent.emplace_back(bytes); }
  std::string read_line() override {
    if (lines_.empty()) throw std::runtime_error("channel closed");
    auto l = lines_.front();
    lines_.pop_front();
    return l;
  }
  std::vector<std::string> sent;

 private:
  std::deque<std::string> lines_;
};

std::string mock_command(const std::string& flags = {}) { return std::string(MOCK_PREDICTOR_PATH) + " " + flags; }

}  // namespace

TEST(ConstExec, Formula) {
  GridMap m = make_empty_map(60, 1);
  GridPath p{0, {}};
  for (int i = 0; i <= 50; ++i) p.vertices.push_back(i);
  Plan plan = plan_of(m, {p});
  auto adg = build_adg(plan.actions);
  for (double ku : {0.1, 0.05, 0.03}) {
    ConstExecEstimator est(ku, 5.0);
    auto e = est.estimate(plan, adg);
    ASSERT_EQ(e.agents.size(), 1u);
    EXPECT_NEAR(e.central_time(0), 50.0 / (ku * 5.0), 1e-12);
  }
  EXPECT_DOUBLE_EQ(ConstExecEstimator(0.1, 5.0).time_for(50), 100.0);
  EXPECT_DOUBLE_EQ(ConstExecEstimator(0.1, 5.0, 2.0).time_for(50), 200.0);
  EXPECT_THROW(ConstExecEstimator(0.0, 5.0), std::invalid_argument);
}

TEST(ConstExec, WaitsCount) {
  GridMap m = make_empty_map(3, 1);
  Plan plan = plan_of(m, {GridPath{0, {0, 0, 0, 1}}, GridPath{1, {2}}});
  auto e = ConstExecEstimator(0.05, 5.0).estimate(plan, build_adg(plan.actions));
  EXPECT_DOUBLE_EQ(e.central_time(0), 3 / 0.25);
  EXPECT_DOUBLE_EQ(e.central_time(1), 0.0);
}

TEST(SimOracle, EqualsSimulator) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Plan plan = random_pp_plan(10, 6, seed);
    if (plan.paths.empty()) continue;
    auto adg = build_adg(plan.actions);
    SimConfig cfg;
    auto e = SimOracleEstimator(cfg).estimate(plan, adg);
    auto out = simulate(adg, cfg, NoiseModel::ideal());
    ASSERT_EQ(e.agents.size(), out.arrival.size());
    for (std::size_t i = 0; i < out.arrival.size(); ++i) EXPECT_EQ(e.central_time(static_cast<int>(i)), out.arrival[i]);
  }
}

TEST(SimOracle, RejectsCycles) {
  GridMap m = make_empty_map(2, 1);
  Plan swap = plan_of(m, {GridPath{0, {0, 1}}, GridPath{1, {1, 0}}});
  auto adg = build_adg(swap.actions);
  SimOracleEstimator est{SimConfig{}};
  EXPECT_FALSE(est.accepts_cyclic());
  EXPECT_THROW(est.estimate(swap, adg), UnsupportedInput);
}

TEST(Protocol, FormatRequestExactBytes) {
  std::string body = "adgv1\nxyz\n";
  EXPECT_EQ(format_request(7, body), "PREDICT 7 10\nadgv1\nxyz\n");
  std::istringstream in(format_request(7, body) + format_request(8, ""));
  auto a = read_request(in);
  ASSERT_TRUE(a);
  EXPECT_EQ(a->id, 7u);
  EXPECT_EQ(a->graph, body);
  auto b = read_request(in);
  ASSERT_TRUE(b);
  EXPECT_EQ(b->id, 8u);
  EXPECT_TRUE(b->graph.empty());
  EXPECT_FALSE(read_request(in));
}

TEST(Protocol, ReadRequestErrors) {
  std::istringstream junk("HELLO\n");
  EXPECT_THROW(read_request(junk), std::runtime_error);
  std::istringstream bad_count("PREDICT 4 x\n");
  try {
    read_request(bad_count);
    FAIL();
  } catch (const PredictorError& e) {
    EXPECT_EQ(e.request_id(), 4u);
  }
  std::istringstream short_body("PREDICT 5 100\nabc");
  EXPECT_THROW(read_request(short_body), PredictorError);
}

TEST(Protocol, FormatResult) {
  Estimate pts{{PointTime{12.5}, PointTime{1.0 / 3.0}}};
  EXPECT_EQ(format_result(3, pts), "RESULT 3 2\npoint 12.5\npoint 0.333333333\n");
  Estimate d{{LogNormalTime{4.0, 0.25}}};
  EXPECT_EQ(format_result(9, d), "RESULT 9 1\ndist 4 0.25\n");
  EXPECT_EQ(format_error(2, "bad\ngraph"), "ERROR 2 bad graph\n");
}

TEST(Learned, ScriptedRoundTripAndCache) {
  auto ch = std::make_unique<ScriptedChannel>(std::deque<std::string>{"RESULT 1 2", "point 3", "point 4.5"});
  auto* raw = ch.get();
  LearnedEstimator est(std::move(ch), false);
  auto e = est.predict_text("G", 2);
  EXPECT_DOUBLE_EQ(e.central_time(1), 4.5);
  EXPECT_EQ(raw->sent.front(), "PREDICT 1 1\nG");
  // Same bytes again: served from cache, nothing sent.
  auto again = est.predict_text("G", 2);
  EXPECT_DOUBLE_EQ(again.central_time(0), 3.0);
  EXPECT_EQ(raw->sent.size(), 1u);
  EXPECT_EQ(est.cache_hits(), 1u);
  EXPECT_EQ(est.requests(), 1u);
}

TEST(Learned, ScriptedErrors) {
  auto run = [](std::deque<std::string> lines, bool dist, int agents = 1) {
    LearnedEstimator est(std::make_unique<ScriptedChannel>(std::move(lines)), dist);
    return est.predict_text("G", agents);
  };
  EXPECT_THROW(run({"ERROR 1 model exploded"}, false), PredictorError);
  EXPECT_THROW(run({"RESULT 2 1", "point 1"}, false), PredictorError);  // id mismatch
  EXPECT_THROW(run({"RESULT 1 1", "point x"}, false), PredictorError);
  EXPECT_THROW(run({"RESULT 1 1", "dist 1 -0.5"}, true), PredictorError);
  EXPECT_THROW(run({"RESULT 1 1", "point 1"}, true), PredictorError);  // kind mismatch
  EXPECT_THROW(run({"RESULT 1 2", "point 1", "point 2"}, false, 3), PredictorError);
  EXPECT_THROW(run({"RESULT 1 2", "point 1"}, false, 2), PredictorError);  // stream ends
  try {
    run({"ERROR 1 model exploded"}, false);
  } catch (const PredictorError& e) {
    EXPECT_EQ(e.request_id(), 1u);
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
}

TEST(Learned, ProcessPointRoundTrip) {
  Plan plan = random_pp_plan(10, 5, 3);
  ASSERT_FALSE(plan.paths.empty());
  auto adg = build_adg(plan.actions);
  LearnedEstimator est(std::make_unique<ProcessChannel>(mock_command()), false);
  auto e = est.estimate(plan, adg);
  ASSERT_EQ(e.agents.size(), 5u);
  for (int a = 0; a < 5; ++a) {
    EXPECT_DOUBLE_EQ(e.central_time(a), 10.0 * static_cast<double>(adg.agent_nodes[static_cast<std::size_t>(a)].size() + 1));
  }
  auto again = est.estimate(plan, adg);
  EXPECT_EQ(est.cache_hits(), 1u);
  EXPECT_EQ(again.central_time(2), e.central_time(2));
}

TEST(Learned, ProcessDistributionAndManyRequests) {
  LearnedEstimator est(std::make_unique<ProcessChannel>(mock_command("--dist --sigma 0.2")), true);
  int served = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Plan plan = random_pp_plan(8, 4, seed);
    if (plan.paths.empty()) continue;
    auto e = est.estimate(plan, build_adg(plan.actions));
    ASSERT_TRUE(e.is_distribution());
    EXPECT_DOUBLE_EQ(std::get<LogNormalTime>(e.agents[0]).sigma, 0.2);
    ++served;
  }
  EXPECT_GT(served, 10);
}

TEST(Learned, ProcessErrorsSurface) {
  Plan plan = random_pp_plan(8, 3, 4);
  auto adg = build_adg(plan.actions);
  LearnedEstimator failing(std::make_unique<ProcessChannel>(mock_command("--fail-id 1")), false);
  EXPECT_THROW(failing.estimate(plan, adg), PredictorError);
  // The connection survives an ERROR; the next request goes through.
  Plan other = random_pp_plan(8, 3, 5);
  EXPECT_NO_THROW(failing.estimate(other, build_adg(other.actions)));
  LearnedEstimator mismatched(std::make_unique<ProcessChannel>(mock_command("--wrong-id")), false);
  EXPECT_THROW(mismatched.estimate(plan, adg), PredictorError);
  LearnedEstimator missing(std::make_unique<ProcessChannel>("/nonexistent/predictor", 2.0), false);
  EXPECT_THROW(missing.estimate(plan, adg), PredictorError);
}

TEST(EstimatorSpec, ParseAndPrint) {
  auto c = EstimatorSpec::parse("const:0.03");
  EXPECT_EQ(c.kind, EstimatorSpec::Kind::ConstExec);
  EXPECT_DOUBLE_EQ(c.k_u, 0.03);
  EXPECT_EQ(c.to_string(), "const:0.03");
  EXPECT_FALSE(EstimatorSpec::parse("oracle").realistic);
  EXPECT_TRUE(EstimatorSpec::parse("oracle:realistic").realistic);
  EXPECT_EQ(EstimatorSpec::parse("learned-dist").kind, EstimatorSpec::Kind::LearnedDist);
  for (const char* bad : {"const:", "const:-1", "const:abc", "gnn", ""}) {
    EXPECT_THROW(EstimatorSpec::parse(bad), std::invalid_argument) << bad;
  }
  EXPECT_THROW(make_estimator(EstimatorSpec::parse("learned-point"), SimConfig{}), std::invalid_argument);
  EXPECT_EQ(make_estimator(EstimatorSpec::parse("oracle:realistic"), SimConfig{}, "", 3)->name(), "SimOracle(realistic)");
}

TEST(Mape, Examples) {
  std::vector<double> labels{100, 200};
  std::vector<double> preds{110, 180};
  EXPECT_DOUBLE_EQ(mape(preds, labels), 10.0);
  EXPECT_DOUBLE_EQ(mape(labels, labels), 0.0);
  std::vector<double> zero{0, 1};
  EXPECT_THROW(mape(preds, zero), std::invalid_argument);
  EXPECT_THROW(mape(std::vector<double>{1}, labels), std::invalid_argument);
}
