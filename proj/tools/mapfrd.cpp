// Benchmark harness: dataset generation, evaluation against the virtual best solver,
// estimator MAPE, runtime breakdown and deadline calibration.
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "mapfrd/bench.hpp"
#include "mapfrd/util.hpp"

using namespace mapfrd;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  int workers = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.overrides, "override one config key, key=value")->take_all();
  cmd->add_option("-o,--out", c.out, "output directory (config key out)");
  cmd->add_option("-j,--workers", c.workers, "worker threads (config key workers)")->check(CLI::PositiveNumber);
}

bench::ExperimentConfig load_config(const Common& c) {
  bench::ExperimentConfig cfg = c.config_path.empty() ? bench::ExperimentConfig{} : bench::ExperimentConfig::load(c.config_path);
  for (const auto& kv : c.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw bench::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  if (!c.out.empty()) cfg.out = c.out;
  if (c.workers > 0) cfg.workers = c.workers;
  cfg.validate();
  return cfg;
}

void emit(const bench::ExperimentConfig& cfg, const std::string& name, const std::string& csv) {
  fs::create_directories(cfg.out);
  const auto path = (fs::path(cfg.out) / name).string();
  write_file(path, csv);
  std::cerr << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAPF-RD planning and benchmark toolkit"};
  app.require_subcommand(1);

  Common gen_c, eval_c, run_c, cal_c;
  auto* gen = app.add_subcommand("gen-data", "plan, simulate and write a labeled graph dataset");
  add_common(gen, gen_c);
  auto* eval = app.add_subcommand("evaluate", "penalty gap to the virtual best solver per method");
  add_common(eval, eval_c);
  auto* run = app.add_subcommand("runtime", "ADG build, encode and estimate timings");
  add_common(run, run_c);
  auto* cal = app.add_subcommand("calibrate", "deadline factor K_D per map and agent count");
  add_common(cal, cal_c);

  std::string dataset, split = "test", predictor, mape_out;
  std::vector<std::string> estimators;
  auto* mape = app.add_subcommand("mape", "estimator MAPE on a dataset split");
  mape->add_option("-d,--dataset", dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  mape->add_option("-e,--estimators", estimators, "estimator specs")->required()->delimiter(',');
  mape->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  mape->add_option("--predictor", predictor, "predictor command for learned estimators");
  mape->add_option("-o,--out", mape_out, "CSV path (default: <dataset>/mape_<split>.csv)");

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify-data", "check dataset files against the manifest hashes");
  verify->add_option("dataset", verify_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto cfg = load_config(gen_c);
      auto s = bench::gen_data(cfg);
      std::cout << "instances " << s.instances << " graphs " << s.graphs << " failures " << s.manifest.failures.size()
                << "\n";
      for (const auto& f : s.manifest.failures) std::cerr << "failed: " << f << "\n";
      return s.manifest.failures.empty() ? 0 : 1;
    }
    if (eval->parsed()) {
      auto cfg = load_config(eval_c);
      auto r = bench::evaluate(cfg);
      emit(cfg, "evaluate_instances.csv", bench::eval_rows_csv(r.rows, cfg.hash()));
      emit(cfg, "evaluate_summary.csv", bench::eval_summary_csv(r.summary, cfg.hash()));
      for (const auto& s : r.summary) {
        std::cout << s.map << " M=" << s.agents << " " << s.method << ": gap/M " << fixed(s.mean_gap, 4) << " +- "
                  << fixed(s.stderr_gap, 4) << " (n=" << s.instances << ")\n";
      }
      for (const auto& row : r.rows) {
        if (!row.ok) std::cerr << "failed: " << row.map << " M=" << row.agents << " #" << row.instance << " "
                               << row.method << ": " << row.error << "\n";
      }
      if (r.excluded) std::cerr << r.excluded << " instance(s) excluded from gap averages\n";
      return r.excluded == 0 ? 0 : 1;
    }
    if (run->parsed()) {
      auto cfg = load_config(run_c);
      auto rows = bench::runtime_table(cfg);
      emit(cfg, "runtime.csv", bench::runtime_csv(rows, cfg.hash()));
      for (const auto& r : rows) {
        std::cout << r.map << " M=" << r.agents << " nodes " << r.nodes << " build " << fixed(r.build_ms, 3)
                  << " ms encode " << fixed(r.encode_ms, 3) << " ms " << r.estimator << " " << fixed(r.estimate_ms, 3)
                  << " ms\n";
      }
      return 0;
    }
    if (cal->parsed()) {
      auto cfg = load_config(cal_c);
      auto rows = bench::calibrate(cfg);
      emit(cfg, "calibration.csv", bench::calibration_csv(cfg, rows));
      for (const auto& r : rows) std::cout << cfg.maps[r.map_index] << " M=" << r.agents << " K_D " << r.result.k_d << "\n";
      return 0;
    }
    if (mape->parsed()) {
      auto rows = bench::mape_table(dataset, estimators, split, predictor);
      auto manifest = bench::parse_manifest(read_file((fs::path(dataset) / "manifest.txt").string()));
      if (mape_out.empty()) mape_out = (fs::path(dataset) / ("mape_" + split + ".csv")).string();
      write_file(mape_out, bench::mape_csv(rows, manifest.config_hash));
      for (const auto& r : rows) {
        std::cout << r.map << " M=" << r.agents << " " << r.estimator << ": " << fixed(r.mean, 2) << " +- "
                  << fixed(r.stderr_mape, 2) << " % (" << r.graphs << " graphs)\n";
      }
      return 0;
    }
    if (verify->parsed()) {
      auto bad = bench::verify_dataset(verify_dir);
      for (const auto& f : bad) std::cerr << "mismatch: " << f << "\n";
      std::cout << (bad.empty() ? "ok" : "corrupt") << "\n";
      return bad.empty() ? 0 : 1;
    }
  } catch (const bench::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
