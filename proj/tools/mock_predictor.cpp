// Stand-in predictor server for tests and smoke runs. Speaks the predictor protocol on
// stdin/stdout; each agent's prediction is a fixed function of its node count, so
// responses are deterministic.
#include <cmath>
#include <iostream>

#include "CLI11.hpp"
#include "mapfrd/estimators.hpp"

using namespace mapfrd;

int main(int argc, char** argv) {
  CLI::App app{"mock execution-time predictor"};
  bool dist = false;
  double per_node = 10.0;
  double sigma = 0.1;
  std::uint64_t fail_id = 0;
  bool wrong_id = false;
  app.add_flag("--dist", dist, "answer with log-normal distributions");
  app.add_option("--seconds-per-node", per_node, "predicted seconds per graph node")->check(CLI::PositiveNumber);
  app.add_option("--sigma", sigma, "log-space spread for --dist")->check(CLI::NonNegativeNumber);
  app.add_option("--fail-id", fail_id, "answer this request id with ERROR");
  app.add_flag("--wrong-id", wrong_id, "echo a mismatched request id");
  CLI11_PARSE(app, argc, argv);

  std::ios::sync_with_stdio(false);
  for (;;) {
    std::optional<PredictRequest> req;
    try {
      req = read_request(std::cin);
    } catch (const PredictorError& e) {
      std::cout << format_error(e.request_id(), e.what()) << std::flush;
      continue;
    } catch (const std::exception& e) {
      std::cerr << "mock_predictor: " << e.what() << "\n";
      return 1;
    }
    if (!req) return 0;
    if (req->id == fail_id) {
      std::cout << format_error(req->id, "requested failure") << std::flush;
      continue;
    }
    EncodedGraph g;
    try {
      g = deserialize_graph(req->graph);
    } catch (const std::exception& e) {
      std::cout << format_error(req->id, e.what()) << std::flush;
      continue;
    }
    Estimate est;
    for (const auto& nodes : g.agents) {
      double t = per_node * static_cast<double>(nodes.size() + 1);
      if (dist) {
        est.agents.emplace_back(LogNormalTime{std::log(t), sigma});
      } else {
        est.agents.emplace_back(PointTime{t});
      }
    }
    std::cout << format_result(wrong_id ? req->id + 1 : req->id, est) << std::flush;
  }
}
