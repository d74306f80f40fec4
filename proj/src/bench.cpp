#include "mapfrd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>

#include "mapfrd/cbs.hpp"
#include "mapfrd/lns.hpp"
#include "mapfrd/util.hpp"

namespace mapfrd::bench {

namespace fs = std::filesystem;

namespace {

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

std::vector<std::string> parse_list(std::string_view v) {
  v = trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("unterminated list '" + std::string(v) + "'");
    v = trim(v.substr(1, v.size() - 2));
  }
  std::vector<std::string> out;
  if (v.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    auto comma = v.find(',', pos);
    auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (item.empty()) throw ConfigError("empty list item in '" + std::string(v) + "'");
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += f(v[i]);
  }
  return out;
}

struct MapSpec {
  enum { Empty, Random, File } kind = Empty;
  int width = 0, height = 0;
  double density = 0.0;
  std::string path;
};

MapSpec parse_map_spec(const std::string& spec) {
  MapSpec s;
  auto dims = [&](std::string_view wh) {
    auto x = wh.find('x');
    if (x == std::string_view::npos) throw ConfigError("map '" + spec + "': expected WxH");
    s.width = parse_number<int>("map width", wh.substr(0, x));
    s.height = parse_number<int>("map height", wh.substr(x + 1));
    if (s.width < 1 || s.height < 1) throw ConfigError("map '" + spec + "': empty grid");
  };
  if (spec.rfind("empty:", 0) == 0) {
    dims(std::string_view(spec).substr(6));
  } else if (spec.rfind("random:", 0) == 0) {
    s.kind = MapSpec::Random;
    auto rest = std::string_view(spec).substr(7);
    auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw ConfigError("map '" + spec + "': expected random:WxH:density");
    dims(rest.substr(0, colon));
    s.density = parse_number<double>("map density", rest.substr(colon + 1));
    if (!(s.density >= 0 && s.density < 1)) throw ConfigError("map '" + spec + "': density outside [0, 1)");
  } else {
    s.kind = MapSpec::File;
    s.path = spec;
  }
  return s;
}

SimConfig sim_config_for(const GridMap& map) {
  SimConfig c;
  c.cell_size = map.cell_size();
  return c;
}

NoiseModel noise_for(const ExperimentConfig& config, std::uint64_t seed) {
  return config.realistic_noise ? NoiseModel::realistic(seed) : NoiseModel::ideal();
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

// ---- config -------------------------------------------------------------------

void ExperimentConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "maps") {
    maps = parse_list(v);
  } else if (key == "agents") {
    agents.clear();
    for (const auto& s : parse_list(v)) agents.push_back(parse_number<int>(key, s));
  } else if (key == "instances") {
    instances = parse_number<int>(key, v);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "planner") {
    planner = std::string(v);
  } else if (key == "estimators") {
    estimators = parse_list(v);
  } else if (key == "penalty") {
    try {
      penalty = parse_penalty(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "k_d") {
    if (v == "auto") {
      k_d.reset();
    } else {
      k_d = parse_number<double>(key, v);
    }
  } else if (key == "k_d_candidates") {
    k_d_candidates.clear();
    for (const auto& s : parse_list(v)) k_d_candidates.push_back(parse_number<double>(key, s));
  } else if (key == "calibration_instances") {
    calibration_instances = parse_number<int>(key, v);
  } else if (key == "budget") {
    auto colon = v.find(':');
    if (colon == std::string_view::npos) throw ConfigError("budget must be iterations:N or seconds:S");
    auto mode = v.substr(0, colon);
    if (mode == "iterations") {
      budget_in_seconds = false;
    } else if (mode == "seconds") {
      budget_in_seconds = true;
    } else {
      throw ConfigError("unknown budget mode '" + std::string(mode) + "'");
    }
    budget = parse_number<double>(key, v.substr(colon + 1));
  } else if (key == "noise") {
    if (v != "ideal" && v != "realistic") throw ConfigError("noise must be ideal or realistic");
    realistic_noise = v == "realistic";
  } else if (key == "neighborhood") {
    neighborhood = parse_number<int>(key, v);
  } else if (key == "neighborhood_mode") {
    if (v != "failure" && v != "adaptive") throw ConfigError("neighborhood_mode must be failure or adaptive");
    adaptive = v == "adaptive";
  } else if (key == "workers") {
    workers = parse_number<int>(key, v);
  } else if (key == "predictor") {
    predictor = std::string(v);
  } else if (key == "out") {
    out = std::string(v);
  } else {
    throw ConfigError("unknown key '" + std::string(key) + "'");
  }
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    // Trailing comment: '#' after whitespace.
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i] == '#' && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = trim(line.substr(0, i));
        break;
      }
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    try {
      c.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  if (maps.empty()) throw ConfigError("no maps");
  for (const auto& m : maps) {
    auto s = parse_map_spec(m);
    if (s.kind == MapSpec::File && !fs::exists(s.path)) throw ConfigError("map file '" + s.path + "' does not exist");
  }
  if (agents.empty()) throw ConfigError("no agent counts");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i] < 1) throw ConfigError("agent counts must be positive");
    if (i && agents[i] <= agents[i - 1]) throw ConfigError("agent counts must be ascending");
  }
  if (instances < 1) throw ConfigError("instances must be positive");
  if (planner != "lns" && planner != "cbs") throw ConfigError("planner must be lns or cbs");
  if (estimators.empty()) throw ConfigError("no estimators");
  for (const auto& e : estimators) {
    try {
      auto spec = EstimatorSpec::parse(e);
      if ((spec.kind == EstimatorSpec::Kind::LearnedPoint || spec.kind == EstimatorSpec::Kind::LearnedDist) &&
          predictor.empty()) {
        throw ConfigError("estimator '" + e + "' needs predictor");
      }
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
  }
  if (k_d && !(*k_d > 0)) throw ConfigError("k_d must be positive");
  if (!k_d && k_d_candidates.empty()) throw ConfigError("k_d = auto needs k_d_candidates");
  for (double k : k_d_candidates) {
    if (!(k > 0)) throw ConfigError("k_d candidates must be positive");
  }
  if (calibration_instances < 1) throw ConfigError("calibration_instances must be positive");
  if (!(budget >= 0)) throw ConfigError("budget must be non-negative");
  if (neighborhood < 1) throw ConfigError("neighborhood must be positive");
  if (workers < 1) throw ConfigError("workers must be positive");
  if (out.empty()) throw ConfigError("out must be set");
}

std::string ExperimentConfig::canonical() const {
  std::string s;
  s += "maps = " + join(maps, [](const std::string& x) { return x; }) + "\n";
  s += "agents = " + join(agents, [](int x) { return std::to_string(x); }) + "\n";
  s += "instances = " + std::to_string(instances) + "\n";
  s += "seed = " + std::to_string(seed) + "\n";
  s += "planner = " + planner + "\n";
  s += "estimators = " + join(estimators, [](const std::string& x) { return x; }) + "\n";
  s += std::string("penalty = ") + penalty_name(penalty) + "\n";
  s += "k_d = " + (k_d ? g17(*k_d) : std::string("auto")) + "\n";
  s += "k_d_candidates = " + join(k_d_candidates, g17) + "\n";
  s += "calibration_instances = " + std::to_string(calibration_instances) + "\n";
  s += std::string("budget = ") + (budget_in_seconds ? "seconds:" : "iterations:") + g17(budget) + "\n";
  s += std::string("noise = ") + (realistic_noise ? "realistic" : "ideal") + "\n";
  s += "neighborhood = " + std::to_string(neighborhood) + "\n";
  s += std::string("neighborhood_mode = ") + (adaptive ? "adaptive" : "failure") + "\n";
  s += "workers = " + std::to_string(workers) + "\n";
  s += "predictor = " + predictor + "\n";
  s += "out = " + out + "\n";
  return s;
}

std::string ExperimentConfig::hash() const {
  // Workers and output location do not change results.
  ExperimentConfig c = *this;
  c.workers = 1;
  c.out = "-";
  return hex64(fnv1a(c.canonical()));
}

// ---- instances ------------------------------------------------------------------

std::string map_tag(const std::string& spec) {
  auto s = parse_map_spec(spec);
  if (s.kind == MapSpec::File) return fs::path(s.path).stem().string();
  std::string tag = spec;
  std::replace(tag.begin(), tag.end(), ':', '-');
  return tag;
}

GridMap resolve_map(const std::string& spec, std::uint64_t base_seed) {
  auto s = parse_map_spec(spec);
  switch (s.kind) {
    case MapSpec::Empty: return make_empty_map(s.width, s.height);
    case MapSpec::Random: return make_random_map(s.width, s.height, s.density, derive_seed(base_seed, "map:" + spec));
    case MapSpec::File: return load_map_file(s.path);
  }
  return {};
}

std::vector<InstanceKey> enumerate_instances(const ExperimentConfig& config) {
  std::vector<InstanceKey> keys;
  for (std::size_t m = 0; m < config.maps.size(); ++m) {
    for (int a : config.agents) {
      for (int k = 0; k < config.instances; ++k) {
        InstanceKey key{m, a, k, 0};
        key.seed = derive_seed(config.seed, config.maps[m] + "/" + std::to_string(a) + "/" + std::to_string(k));
        keys.push_back(key);
      }
    }
  }
  return keys;
}

GridInstance build_instance(const GridMap& map, const InstanceKey& key, double k_d) {
  GridInstance inst = random_instance(map, key.agents, key.seed);
  inst.deadlines = generate_deadlines(inst, k_d, KinodynLimits{}, derive_seed(key.seed, "deadlines"));
  return inst;
}

std::string instance_label(const ExperimentConfig& config, const InstanceKey& key) {
  return map_tag(config.maps[key.map_index]) + "_m" + std::to_string(key.agents) + "_i" + std::to_string(key.index);
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = std::min(std::max(workers, 1), std::max(n, 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- calibration ------------------------------------------------------------------

std::vector<CalibrationRow> calibrate(const ExperimentConfig& config) {
  std::vector<CalibrationRow> rows;
  for (std::size_t m = 0; m < config.maps.size(); ++m) {
    GridMap map = resolve_map(config.maps[m], config.seed);
    for (int a : config.agents) {
      // Plans do not depend on deadlines: plan and simulate once, then score every candidate.
      struct Sample {
        GridInstance instance;
        std::vector<double> arrival;
      };
      std::vector<Sample> samples(static_cast<std::size_t>(config.calibration_instances));
      parallel_for(config.calibration_instances, config.workers, [&](int k) {
        InstanceKey key{m, a, k, derive_seed(config.seed, "calibrate/" + config.maps[m] + "/" + std::to_string(a) + "/" +
                                                              std::to_string(k))};
        Sample& s = samples[static_cast<std::size_t>(k)];
        s.instance = random_instance(map, a, key.seed);
        s.instance.deadlines.assign(static_cast<std::size_t>(a), 1.0);
        ConstExecEstimator est(0.05, KinodynLimits{}.v_max, map.cell_size());
        LnsOptions opt;
        opt.seed = derive_seed(key.seed, "plan");
        LnsPlanner pp(s.instance, est, config.penalty, opt);
        Plan plan = pp.initial_solution();
        s.arrival = simulate(build_adg(plan.actions), sim_config_for(map), NoiseModel::ideal()).arrival;
        s.instance.seed = key.seed;
      });
      auto miss_rate = [&](double k_d) {
        int missed = 0, total = 0;
        for (const auto& s : samples) {
          auto d = generate_deadlines(s.instance, k_d, KinodynLimits{}, derive_seed(s.instance.seed, "deadlines"));
          for (std::size_t i = 0; i < d.size(); ++i) {
            missed += s.arrival[i] > d[i];
            ++total;
          }
        }
        return static_cast<double>(missed) / std::max(total, 1);
      };
      rows.push_back({m, a, calibrate_kd(config.k_d_candidates, miss_rate)});
    }
  }
  return rows;
}

std::map<std::pair<std::size_t, int>, double> resolve_k_d(const ExperimentConfig& config,
                                                          std::vector<CalibrationRow>* rows) {
  std::map<std::pair<std::size_t, int>, double> out;
  if (config.k_d) {
    for (std::size_t m = 0; m < config.maps.size(); ++m) {
      for (int a : config.agents) out[{m, a}] = *config.k_d;
    }
    return out;
  }
  auto cal = calibrate(config);
  for (const auto& r : cal) out[{r.map_index, r.agents}] = r.result.k_d;
  if (rows) *rows = std::move(cal);
  return out;
}

Plan plan_instance(const ExperimentConfig& config, const GridInstance& instance, Estimator& estimator,
                   std::uint64_t seed, std::vector<Plan>* history) {
  if (config.planner == "cbs") {
    CbsOptions opt;
    opt.config = sim_config_for(instance.map);
    if (config.budget_in_seconds) {
      opt.time_limit_s = config.budget;
    } else {
      opt.max_expansions = static_cast<std::int64_t>(config.budget);
    }
    auto r = run_cbs(instance, estimator, config.penalty, opt);
    if (history) history->push_back(r.plan);
    return r.plan;
  }
  LnsOptions opt;
  opt.seed = seed;
  opt.neighborhood_size = config.neighborhood;
  opt.mode = config.adaptive ? NeighborhoodMode::Adaptive : NeighborhoodMode::FailureBased;
  if (config.budget_in_seconds) {
    opt.time_limit_s = config.budget;
  } else {
    opt.max_iterations = static_cast<int>(config.budget);
  }
  if (history) opt.on_iteration = [history](int, const Plan& p) { history->push_back(p); };
  return run_lns(instance, estimator, config.penalty, opt).plan;
}

// ---- dataset files --------------------------------------------------------------

std::string serialize_paths(const std::vector<GridPath>& paths) {
  std::string out;
  for (const auto& p : paths) {
    out += std::to_string(p.agent);
    for (CellId c : p.vertices) out += " " + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::vector<GridPath> parse_paths(std::string_view text) {
  std::vector<GridPath> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() < 2) throw ParseError("path line needs an agent and at least one cell", line_no);
    GridPath p;
    try {
      p.agent = parse_number<int>("agent", tok[0]);
      for (std::size_t i = 1; i < tok.size(); ++i) p.vertices.push_back(parse_number<int>("cell", tok[i]));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (p.agent != static_cast<int>(out.size())) throw ParseError("paths must list agents in order", line_no);
    out.push_back(std::move(p));
  }
  return out;
}

std::string serialize_manifest(const Manifest& m) {
  std::string out = "mapfrd-dataset 1\n";
  out += "config " + m.config_hash + "\n";
  out += "noise " + g17(m.noise.sigma) + " " + g17(m.noise.latency_const) + " " + g17(m.noise.latency_jitter) + " " +
         std::to_string(m.noise.seed) + "\n";
  out += "entries " + std::to_string(m.entries.size()) + "\n";
  for (const auto& e : m.entries) {
    out += e.file + " " + e.plan_file + " " + e.instance_file + " " + e.map_file + " " + e.split + " " + e.map + " " +
           std::to_string(e.agents) + " " + std::to_string(e.instance_seed) + " " + std::to_string(e.sum_of_costs) +
           " " + std::to_string(e.nodes) + " " + e.hash + "\n";
  }
  out += "failures " + std::to_string(m.failures.size()) + "\n";
  for (const auto& f : m.failures) {
    std::string line = f;
    std::replace(line.begin(), line.end(), '\n', ' ');
    out += line + "\n";
  }
  return out;
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    lines.emplace_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
  }
  std::size_t i = 0;
  auto next = [&](const char* what) -> std::vector<std::string> {
    if (i >= lines.size()) throw ParseError(std::string("manifest ends before ") + what, static_cast<int>(i + 1));
    return split_ws(lines[i++]);
  };
  auto fail = [&](const std::string& what) { throw ParseError("manifest: " + what, static_cast<int>(i)); };
  try {
    auto head = next("header");
    if (head.size() != 2 || head[0] != "mapfrd-dataset" || head[1] != "1") fail("not a dataset manifest");
    auto cfg = next("config");
    if (cfg.size() != 2 || cfg[0] != "config") fail("expected config line");
    m.config_hash = cfg[1];
    auto noise = next("noise");
    if (noise.size() != 5 || noise[0] != "noise") fail("expected noise line");
    m.noise.sigma = parse_number<double>("sigma", noise[1]);
    m.noise.latency_const = parse_number<double>("latency", noise[2]);
    m.noise.latency_jitter = parse_number<double>("jitter", noise[3]);
    m.noise.seed = parse_number<std::uint64_t>("seed", noise[4]);
    auto count = next("entries");
    if (count.size() != 2 || count[0] != "entries") fail("expected entries line");
    const int n = parse_number<int>("entries", count[1]);
    for (int k = 0; k < n; ++k) {
      auto t = next("entry");
      if (t.size() != 11) fail("entry needs 11 fields");
      DatasetEntry e;
      e.file = t[0];
      e.plan_file = t[1];
      e.instance_file = t[2];
      e.map_file = t[3];
      e.split = t[4];
      e.map = t[5];
      e.agents = parse_number<int>("agents", t[6]);
      e.instance_seed = parse_number<std::uint64_t>("seed", t[7]);
      e.sum_of_costs = parse_number<int>("soc", t[8]);
      e.nodes = parse_number<int>("nodes", t[9]);
      e.hash = t[10];
      if (e.split != "train" && e.split != "val" && e.split != "test") fail("unknown split '" + e.split + "'");
      m.entries.push_back(std::move(e));
    }
    auto fc = next("failures");
    if (fc.size() != 2 || fc[0] != "failures") fail("expected failures line");
    const int nf = parse_number<int>("failures", fc[1]);
    for (int k = 0; k < nf; ++k) {
      if (i >= lines.size()) fail("missing failure lines");
      m.failures.push_back(lines[i++]);
    }
  } catch (const ConfigError& e) {
    throw ParseError(std::string("manifest: ") + e.what(), static_cast<int>(i));
  }
  return m;
}

GenDataSummary gen_data(const ExperimentConfig& config) {
  config.validate();
  const fs::path root(config.out);
  fs::create_directories(root / "graphs");
  fs::create_directories(root / "plans");
  fs::create_directories(root / "instances");
  fs::create_directories(root / "maps");
  write_file((root / "config.txt").string(), config.canonical());

  const auto k_d = resolve_k_d(config);
  std::vector<GridMap> maps;
  for (std::size_t m = 0; m < config.maps.size(); ++m) {
    maps.push_back(resolve_map(config.maps[m], config.seed));
    write_file((root / "maps" / (map_tag(config.maps[m]) + ".map")).string(), serialize_map(maps.back()));
  }
  const auto keys = enumerate_instances(config);
  const auto spec = EstimatorSpec::parse(config.estimators.front());

  // Split per instance so iterations of one instance never straddle splits: shuffle the
  // instance indices of each (map, agents) group, 80/10/10 with at least one test and one
  // validation instance once the group has three.
  std::vector<std::string> split_of(keys.size(), "train");
  for (std::size_t g = 0; g < keys.size(); g += static_cast<std::size_t>(config.instances)) {
    const int n = config.instances;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
    Rng rng(derive_seed(config.seed, "split/" + std::to_string(g)));
    shuffle_portable(order, rng);
    int n_test = static_cast<int>(std::lround(0.1 * n)), n_val = n_test;
    if (n >= 3) {
      n_test = std::max(n_test, 1);
      n_val = std::max(n_val, 1);
    }
    for (int k = 0; k < n_test; ++k) split_of[g + static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = "test";
    for (int k = n_test; k < n_test + n_val; ++k) {
      split_of[g + static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = "val";
    }
  }

  struct Result {
    std::vector<DatasetEntry> entries;
    std::vector<std::string> failures;
  };
  std::vector<Result> results(keys.size());
  const NoiseModel noise = noise_for(config, derive_seed(config.seed, "label"));
  parallel_for(static_cast<int>(keys.size()), config.workers, [&](int idx) {
    const auto& key = keys[static_cast<std::size_t>(idx)];
    Result& res = results[static_cast<std::size_t>(idx)];
    const std::string label = instance_label(config, key);
    try {
      const GridMap& map = maps[key.map_index];
      GridInstance inst = build_instance(map, key, k_d.at({key.map_index, key.agents}));
      const std::string inst_file = "instances/" + label + ".txt";
      write_file((root / inst_file).string(), serialize_instance(inst));
      auto est = make_estimator(spec, sim_config_for(map), config.predictor, derive_seed(key.seed, "estimator"));
      std::vector<Plan> history;
      plan_instance(config, inst, *est, derive_seed(key.seed, "plan"), &history);
      NoiseModel per_instance = noise;
      per_instance.seed = derive_seed(noise.seed, label);
      auto data = label_dataset(history, sim_config_for(map), per_instance);
      for (const auto& err : data.errors) res.failures.push_back(label + ": " + err);
      for (std::size_t j = 0; j < data.graphs.size(); ++j) {
        const Plan& plan = history[static_cast<std::size_t>(data.source[j])];
        DatasetEntry e;
        const std::string stem = label + "_g" + std::to_string(j);
        e.file = "graphs/" + stem + ".adg";
        e.plan_file = "plans/" + stem + ".txt";
        e.instance_file = inst_file;
        e.map_file = "maps/" + map_tag(config.maps[key.map_index]) + ".map";
        e.split = split_of[static_cast<std::size_t>(idx)];
        e.map = map_tag(config.maps[key.map_index]);
        e.agents = key.agents;
        e.instance_seed = key.seed;
        e.sum_of_costs = plan.sum_of_costs();
        e.nodes = data.graphs[j].num_nodes();
        const std::string text = serialize_graph(data.graphs[j]);
        e.hash = hex64(fnv1a(text));
        write_file((root / e.file).string(), text);
        write_file((root / e.plan_file).string(), serialize_paths(plan.paths));
        res.entries.push_back(std::move(e));
      }
    } catch (const std::exception& e) {
      res.failures.push_back(label + ": " + e.what());
    }
  });

  GenDataSummary summary;
  summary.manifest.config_hash = config.hash();
  summary.manifest.noise = noise;
  for (auto& r : results) {
    for (auto& e : r.entries) summary.manifest.entries.push_back(std::move(e));
    for (auto& f : r.failures) summary.manifest.failures.push_back(std::move(f));
  }
  summary.instances = static_cast<int>(keys.size());
  summary.graphs = static_cast<int>(summary.manifest.entries.size());
  write_file((root / "manifest.txt").string(), serialize_manifest(summary.manifest));
  return summary;
}

std::vector<std::string> verify_dataset(const std::string& dir) {
  Manifest m = parse_manifest(read_file((fs::path(dir) / "manifest.txt").string()));
  std::vector<std::string> bad;
  for (const auto& e : m.entries) {
    const auto path = fs::path(dir) / e.file;
    if (!fs::exists(path) || hex64(fnv1a(read_file(path.string()))) != e.hash) bad.push_back(e.file);
  }
  return bad;
}

// ---- evaluate -----------------------------------------------------------------

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

void apply_vbs(std::vector<EvalRow>& rows, std::size_t methods, int* excluded) {
  int dropped = 0;
  for (std::size_t i = 0; i + methods <= rows.size(); i += methods) {
    bool all_ok = true;
    double best = INFINITY;
    for (std::size_t k = 0; k < methods; ++k) {
      all_ok = all_ok && rows[i + k].ok;
      if (rows[i + k].ok) best = std::min(best, rows[i + k].penalty);
    }
    if (!all_ok) {
      ++dropped;
      for (std::size_t k = 0; k < methods; ++k) rows[i + k].gap = NAN;
      continue;
    }
    // Average penalties are sums over agents divided by M, so the difference of averages
    // is the sum gap divided by M.
    for (std::size_t k = 0; k < methods; ++k) rows[i + k].gap = rows[i + k].penalty - best;
  }
  if (excluded) *excluded = dropped;
}

std::vector<EvalSummaryRow> summarize(const std::vector<EvalRow>& rows) {
  std::vector<EvalSummaryRow> out;
  std::map<std::tuple<std::string, int, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<std::tuple<std::string, int, std::string>> order;
  for (const auto& r : rows) {
    auto key = std::make_tuple(r.map, r.agents, r.method);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    if (r.ok && !std::isnan(r.gap)) {
      it->second.first.push_back(r.gap);
      it->second.second.push_back(r.penalty);
    }
  }
  for (const auto& key : order) {
    const auto& [gaps, pens] = groups[key];
    EvalSummaryRow s;
    std::tie(s.map, s.agents, s.method) = key;
    s.instances = static_cast<int>(gaps.size());
    s.mean_gap = mean(gaps);
    s.stderr_gap = std_error(gaps);
    s.mean_penalty = mean(pens);
    out.push_back(s);
  }
  return out;
}

EvalReport evaluate(const ExperimentConfig& config) {
  config.validate();
  if (config.estimators.size() < 2) throw ConfigError("evaluate needs at least two estimators");
  const auto k_d = resolve_k_d(config);
  std::vector<GridMap> maps;
  for (const auto& m : config.maps) maps.push_back(resolve_map(m, config.seed));
  const auto keys = enumerate_instances(config);
  const std::size_t methods = config.estimators.size();
  std::vector<EvalRow> rows(keys.size() * methods);
  parallel_for(static_cast<int>(keys.size()), config.workers, [&](int idx) {
    const auto& key = keys[static_cast<std::size_t>(idx)];
    const GridMap& map = maps[key.map_index];
    GridInstance inst = build_instance(map, key, k_d.at({key.map_index, key.agents}));
    // One noise draw per instance, shared by every method and unknown to the planners.
    const NoiseModel noise = noise_for(config, derive_seed(key.seed, "eval"));
    for (std::size_t k = 0; k < methods; ++k) {
      EvalRow& row = rows[static_cast<std::size_t>(idx) * methods + k];
      row.map = map_tag(config.maps[key.map_index]);
      row.agents = key.agents;
      row.instance = key.index;
      row.seed = key.seed;
      row.method = config.estimators[k];
      try {
        auto est = make_estimator(EstimatorSpec::parse(config.estimators[k]), sim_config_for(map), config.predictor,
                                  derive_seed(key.seed, "estimator"));
        Plan plan = plan_instance(config, inst, *est, derive_seed(key.seed, "plan"));
        auto out = simulate(build_adg(plan.actions), sim_config_for(map), noise);
        row.penalty = aggregate_times(out.arrival, inst.deadlines, config.penalty);
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  });
  EvalReport report;
  apply_vbs(rows, methods, &report.excluded);
  report.summary = summarize(rows);
  report.rows = std::move(rows);
  return report;
}

std::string eval_rows_csv(const std::vector<EvalRow>& rows, const std::string& config_hash) {
  std::string out = "map,agents,instance,seed,method,status,penalty,gap_per_agent,config_hash\n";
  for (const auto& r : rows) {
    out += r.map + "," + std::to_string(r.agents) + "," + std::to_string(r.instance) + "," + std::to_string(r.seed) +
           "," + csv_field(r.method) + "," + (r.ok ? "ok" : csv_field("failed: " + r.error)) + "," +
           (r.ok ? fixed(r.penalty, 9) : "") + "," + (std::isnan(r.gap) || !r.ok ? "" : fixed(r.gap, 9)) + "," +
           config_hash + "\n";
  }
  return out;
}

std::string eval_summary_csv(const std::vector<EvalSummaryRow>& rows, const std::string& config_hash) {
  std::string out = "map,agents,method,instances,mean_gap_per_agent,stderr,mean_penalty,config_hash\n";
  for (const auto& r : rows) {
    out += r.map + "," + std::to_string(r.agents) + "," + csv_field(r.method) + "," + std::to_string(r.instances) +
           "," + fixed(r.mean_gap, 9) + "," + fixed(r.stderr_gap, 9) + "," + fixed(r.mean_penalty, 9) + "," +
           config_hash + "\n";
  }
  return out;
}

// ---- mape ---------------------------------------------------------------------

std::vector<MapeRow> mape_table(const std::string& dataset_dir, const std::vector<std::string>& estimators,
                                const std::string& split, const std::string& predictor) {
  const fs::path root(dataset_dir);
  Manifest m = parse_manifest(read_file((root / "manifest.txt").string()));
  std::vector<const DatasetEntry*> chosen;
  for (const auto& e : m.entries) {
    if (e.split == split) chosen.push_back(&e);
  }
  if (chosen.empty()) throw std::runtime_error("split '" + split + "' of " + dataset_dir + " is empty");

  std::vector<MapeRow> out;
  std::map<std::string, GridMap> maps;
  for (const auto& name : estimators) {
    const auto spec = EstimatorSpec::parse(name);
    std::map<std::pair<std::string, int>, std::vector<double>> per_group;
    std::vector<std::pair<std::string, int>> order;
    std::unique_ptr<Estimator> est;
    for (const DatasetEntry* e : chosen) {
      auto& map = maps[e->map_file];
      if (map.size() == 0) map = load_map_file((root / e->map_file).string());
      EncodedGraph g = deserialize_graph(read_file((root / e->file).string()));
      if (!g.labels) throw std::runtime_error(e->file + " has no labels");
      GridInstance inst = parse_instance(read_file((root / e->instance_file).string()), map);
      Plan plan = make_plan(inst, parse_paths(read_file((root / e->plan_file).string())));
      if (!est) est = make_estimator(spec, sim_config_for(map), predictor);
      Estimate guess;
      if (auto* learned = dynamic_cast<LearnedEstimator*>(est.get())) {
        guess = learned->predict(g);
      } else {
        guess = est->estimate(plan, build_adg(plan.actions));
      }
      std::vector<double> p, l;
      for (int a = 0; a < g.num_agents; ++a) {
        const double label = (*g.labels)[static_cast<std::size_t>(a)];
        if (!(label > 0)) continue;
        p.push_back(guess.central_time(a));
        l.push_back(label);
      }
      if (l.empty()) continue;
      auto key = std::make_pair(e->map, e->agents);
      auto [it, fresh] = per_group.try_emplace(key);
      if (fresh) order.push_back(key);
      it->second.push_back(mapfrd::mape(p, l));
    }
    for (const auto& key : order) {
      const auto& v = per_group[key];
      out.push_back({key.first, key.second, name, static_cast<int>(v.size()), mean(v), std_error(v)});
    }
  }
  return out;
}

std::string mape_csv(const std::vector<MapeRow>& rows, const std::string& config_hash) {
  std::string out = "map,agents,estimator,graphs,mape_pct,stderr,config_hash\n";
  for (const auto& r : rows) {
    out += r.map + "," + std::to_string(r.agents) + "," + csv_field(r.estimator) + "," + std::to_string(r.graphs) +
           "," + fixed(r.mean, 6) + "," + fixed(r.stderr_mape, 6) + "," + config_hash + "\n";
  }
  return out;
}

// ---- runtime ------------------------------------------------------------------

std::vector<RuntimeRow> runtime_table(const ExperimentConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t) { return std::chrono::duration<double, std::milli>(clock::now() - t).count(); };
  std::vector<RuntimeRow> out;
  for (std::size_t m = 0; m < config.maps.size(); ++m) {
    GridMap map = resolve_map(config.maps[m], config.seed);
    for (int a : config.agents) {
      InstanceKey key{m, a, 0, derive_seed(config.seed, config.maps[m] + "/" + std::to_string(a) + "/0")};
      GridInstance inst = random_instance(map, a, key.seed);
      inst.deadlines.assign(static_cast<std::size_t>(a), 1.0);
      ConstExecEstimator pp_est(0.05, KinodynLimits{}.v_max, map.cell_size());
      LnsOptions opt;
      opt.seed = derive_seed(key.seed, "plan");
      Plan plan = LnsPlanner(inst, pp_est, config.penalty, opt).initial_solution();

      constexpr int kRepeats = 5;
      std::vector<double> build, enc;
      Adg adg;
      for (int r = 0; r < kRepeats; ++r) {
        auto t0 = clock::now();
        adg = build_adg(plan.actions);
        build.push_back(ms_since(t0));
        t0 = clock::now();
        auto g = encode(adg);
        enc.push_back(ms_since(t0));
      }
      std::sort(build.begin(), build.end());
      std::sort(enc.begin(), enc.end());
      for (const auto& name : config.estimators) {
        RuntimeRow row;
        row.map = map_tag(config.maps[m]);
        row.agents = a;
        row.nodes = static_cast<int>(adg.nodes.size());
        row.edges = static_cast<int>(adg.edges.size());
        row.build_ms = build[kRepeats / 2];
        row.encode_ms = enc[kRepeats / 2];
        row.estimator = name;
        auto est = make_estimator(EstimatorSpec::parse(name), sim_config_for(map), config.predictor);
        auto t0 = clock::now();
        est->estimate(plan, adg);
        row.estimate_ms = ms_since(t0);
        out.push_back(row);
      }
    }
  }
  return out;
}

std::string runtime_csv(const std::vector<RuntimeRow>& rows, const std::string& config_hash) {
  std::string out = "map,agents,nodes,edges,build_ms,encode_ms,estimator,estimate_ms,config_hash\n";
  for (const auto& r : rows) {
    out += r.map + "," + std::to_string(r.agents) + "," + std::to_string(r.nodes) + "," + std::to_string(r.edges) +
           "," + fixed(r.build_ms, 4) + "," + fixed(r.encode_ms, 4) + "," + csv_field(r.estimator) + "," +
           fixed(r.estimate_ms, 4) + "," + config_hash + "\n";
  }
  return out;
}

std::string calibration_csv(const ExperimentConfig& config, const std::vector<CalibrationRow>& rows) {
  std::string out = "map,agents,k_d,miss_rate,chosen,config_hash\n";
  const std::string h = config.hash();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.result.candidates.size(); ++i) {
      out += map_tag(config.maps[r.map_index]) + "," + std::to_string(r.agents) + "," + g17(r.result.candidates[i]) +
             "," + fixed(r.result.miss_rates[i], 6) + "," + (r.result.candidates[i] == r.result.k_d ? "1" : "0") + "," +
             h + "\n";
    }
  }
  return out;
}

}  // namespace mapfrd::bench
