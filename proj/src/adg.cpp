#include "mapfrd/adg.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <sstream>
#include <unordered_map>

#include "mapfrd/util.hpp"

namespace mapfrd {

int Adg::count(EdgeType t) const {
  return static_cast<int>(std::count_if(edges.begin(), edges.end(), [t](const AdgEdge& e) { return e.type == t; }));
}

namespace {

constexpr int kForever = std::numeric_limits<int>::max();

struct Visit {
  AgentId agent;
  int arrive;  // first timestep at the cell
  int leave;   // last timestep at the cell (departure step of the leaving move)
  int enter_node;
  int leave_node;
};

}  // namespace

Adg build_adg(std::span<const ActionPath> plan) {
  Adg adg;
  adg.num_agents = static_cast<int>(plan.size());
  adg.agent_nodes.resize(plan.size());
  std::unordered_map<CellId, std::vector<Visit>> visits;

  for (std::size_t a = 0; a < plan.size(); ++a) {
    const auto& actions = plan[a].actions;
    if (actions.empty()) continue;
    const int first = adg.num_nodes();
    for (std::size_t k = 0; k < actions.size(); ++k) {
      adg.agent_nodes[a].push_back(adg.num_nodes());
      adg.nodes.push_back({static_cast<AgentId>(a), static_cast<int>(k), actions[k]});
    }
    CellId cell = actions.front().from;
    Visit cur{static_cast<AgentId>(a), 0, kForever, -1, -1};
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const Action& act = actions[k];
      if (act.kind != ActionKind::MoveForward) continue;
      const int node = first + static_cast<int>(k);
      cur.leave = act.timestep;
      cur.leave_node = node;
      visits[cell].push_back(cur);
      cell = act.to;
      cur = {static_cast<AgentId>(a), act.timestep + 1, kForever, node, -1};
    }
    visits[cell].push_back(cur);
  }

  for (std::size_t a = 0; a < plan.size(); ++a) {
    const auto& ids = adg.agent_nodes[a];
    for (std::size_t k = 1; k < ids.size(); ++k) adg.edges.push_back({ids[k - 1], ids[k], EdgeType::Type1});
  }

  std::set<std::pair<int, int>> type2;
  auto leave_of = [&](const Visit& v) { return v.leave_node >= 0 ? v.leave_node : adg.agent_nodes[static_cast<std::size_t>(v.agent)].back(); };
  auto enter_of = [&](const Visit& v) { return v.enter_node >= 0 ? v.enter_node : adg.agent_nodes[static_cast<std::size_t>(v.agent)].front(); };
  auto link = [&](const Visit& before, const Visit& after) {
    int s = leave_of(before);
    int d = enter_of(after);
    if (s != d) type2.insert({s, d});
  };

  // Ordered by cell so edge insertion does not depend on hash iteration order.
  std::map<CellId, std::vector<Visit>> ordered(visits.begin(), visits.end());
  for (auto& [cell, vs] : ordered) {
    if (vs.size() < 2) continue;
    std::sort(vs.begin(), vs.end(), [](const Visit& x, const Visit& y) {
      return std::tie(x.arrive, x.agent) < std::tie(y.arrive, y.agent);
    });
    for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
      if (vs[i].agent != vs[i + 1].agent) link(vs[i], vs[i + 1]);
    }
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = i + 1; j < vs.size() && vs[j].arrive <= vs[i].leave; ++j) {
        if (vs[i].agent == vs[j].agent) continue;
        // Neither occupant can enter first.
        int a = enter_of(vs[i]), b = enter_of(vs[j]);
        type2.insert({a, b});
        type2.insert({b, a});
      }
    }
  }
  for (auto [s, d] : type2) adg.edges.push_back({s, d, EdgeType::Type2});

  adg.out_edges.resize(adg.nodes.size());
  adg.in_edges.resize(adg.nodes.size());
  for (std::size_t e = 0; e < adg.edges.size(); ++e) {
    adg.out_edges[static_cast<std::size_t>(adg.edges[e].src)].push_back(static_cast<int>(e));
    adg.in_edges[static_cast<std::size_t>(adg.edges[e].dst)].push_back(static_cast<int>(e));
  }
  return adg;
}

std::vector<int> topological_order(const Adg& adg) {
  const int n = adg.num_nodes();
  std::vector<int> indeg(static_cast<std::size_t>(n), 0);
  for (const auto& e : adg.edges) ++indeg[static_cast<std::size_t>(e.dst)];
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    if (indeg[static_cast<std::size_t>(v)] == 0) order.push_back(v);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (int e : adg.out_edges[static_cast<std::size_t>(order[i])]) {
      int d = adg.edges[static_cast<std::size_t>(e)].dst;
      if (--indeg[static_cast<std::size_t>(d)] == 0) order.push_back(d);
    }
  }
  if (static_cast<int>(order.size()) != n) order.clear();
  return order;
}

CycleCheck check_acyclic(const Adg& adg) {
  CycleCheck result;
  const int n = adg.num_nodes();
  // Mutual pairs first: they are the usual case (conflicts) and the shortest witness.
  std::set<std::pair<int, int>> seen_edges;
  for (const auto& e : adg.edges) {
    if (seen_edges.count({e.dst, e.src})) {
      result.acyclic = false;
      result.cycle = {e.dst, e.src};
      return result;
    }
    seen_edges.insert({e.src, e.dst});
  }
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<std::uint8_t> state(static_cast<std::size_t>(n), 0);
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  for (int root = 0; root < n && result.acyclic; ++root) {
    if (state[static_cast<std::size_t>(root)]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    state[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty() && result.acyclic) {
      auto& [v, next] = stack.back();
      const auto& outs = adg.out_edges[static_cast<std::size_t>(v)];
      if (next == outs.size()) {
        state[static_cast<std::size_t>(v)] = 2;
        stack.pop_back();
        continue;
      }
      int w = adg.edges[static_cast<std::size_t>(outs[next++])].dst;
      if (state[static_cast<std::size_t>(w)] == 0) {
        parent[static_cast<std::size_t>(w)] = v;
        state[static_cast<std::size_t>(w)] = 1;
        stack.push_back({w, 0});
      } else if (state[static_cast<std::size_t>(w)] == 1) {
        result.acyclic = false;
        for (int u = v; u != w; u = parent[static_cast<std::size_t>(u)]) result.cycle.push_back(u);
        result.cycle.push_back(w);
        std::reverse(result.cycle.begin(), result.cycle.end());
      }
    }
  }
  return result;
}

EncodedGraph encode(const Adg& adg) {
  namespace nf = node_feature;
  namespace ef = edge_feature;
  EncodedGraph g;
  g.num_agents = adg.num_agents;
  int makespan = 0;
  for (const auto& node : adg.nodes) {
    if (node.action.kind != ActionKind::Rotate) makespan = std::max(makespan, node.action.timestep + 1);
  }
  g.makespan = std::max(makespan, 1);
  const double agent_norm = std::max(adg.num_agents, 1);
  g.agents = adg.agent_nodes;

  g.nodes.resize(adg.nodes.size());
  for (const auto& ids : adg.agent_nodes) {
    // later same-type counts, filled back to front
    std::array<int, 3> later{};
    for (std::size_t k = ids.size(); k-- > 0;) {
      const int id = ids[k];
      const auto& node = adg.nodes[static_cast<std::size_t>(id)];
      auto& f = g.nodes[static_cast<std::size_t>(id)];
      const int kind = static_cast<int>(node.action.kind);
      f[nf::kMove + kind] = 1.0;
      f[nf::kTimestep] = node.action.timestep / g.makespan;
      f[nf::kAgent] = node.agent / agent_norm;
      f[nf::kPathIndex] = node.index;
      f[nf::kInDegree] = static_cast<double>(adg.in_edges[static_cast<std::size_t>(id)].size());
      f[nf::kOutDegree] = static_cast<double>(adg.out_edges[static_cast<std::size_t>(id)].size());
      f[nf::kPreceding] = static_cast<double>(k);
      f[nf::kFutureSameType] = later[static_cast<std::size_t>(kind)];
      ++later[static_cast<std::size_t>(kind)];
      bool type2_out = false;
      for (int e : adg.out_edges[static_cast<std::size_t>(id)]) {
        type2_out = type2_out || adg.edges[static_cast<std::size_t>(e)].type == EdgeType::Type2;
      }
      f[nf::kHasType2Out] = type2_out ? 1.0 : 0.0;
    }
  }

  g.edges.reserve(adg.edges.size());
  for (const auto& e : adg.edges) {
    const auto& s = adg.nodes[static_cast<std::size_t>(e.src)];
    const auto& d = adg.nodes[static_cast<std::size_t>(e.dst)];
    EncodedEdge out{e.src, e.dst, e.type, {}};
    out.features[ef::kType] = e.type == EdgeType::Type2 ? 1.0 : 0.0;
    out.features[ef::kIndexDiff] = d.index - s.index;
    out.features[ef::kTimestepDiff] = (d.action.timestep - s.action.timestep) / g.makespan;
    g.edges.push_back(out);
  }
  return g;
}

std::string serialize_graph(const EncodedGraph& g) {
  std::string out;
  out.reserve(64 + g.nodes.size() * 140 + g.edges.size() * 60);
  out += std::string(kGraphFormatVersion) + "\n";
  out += "counts agents " + std::to_string(g.num_agents) + " nodes " + std::to_string(g.nodes.size()) + " edges " +
         std::to_string(g.edges.size()) + " labels " + (g.labels ? "1" : "0") + "\n";
  out += "norm makespan " + fixed(g.makespan, kGraphDecimals) + " agents " + std::to_string(std::max(g.num_agents, 1)) + "\n";
  out += "features node 11 edge 3 preceding=all future=same-type\n";
  out += "partition\n";
  for (std::size_t a = 0; a < g.agents.size(); ++a) {
    out += std::to_string(a) + " " + std::to_string(g.agents[a].size());
    for (int id : g.agents[a]) out += " " + std::to_string(id);
    out += "\n";
  }
  out += "nodes\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    out += std::to_string(i);
    for (double v : g.nodes[i]) out += " " + fixed(v, kGraphDecimals);
    out += "\n";
  }
  out += "edges\n";
  for (const auto& e : g.edges) {
    out += std::to_string(e.src) + " " + std::to_string(e.dst) + " " + std::to_string(static_cast<int>(e.type));
    for (double v : e.features) out += " " + fixed(v, kGraphDecimals);
    out += "\n";
  }
  if (g.labels) {
    out += "labels\n";
    for (std::size_t a = 0; a < g.labels->size(); ++a) out += std::to_string(a) + " " + fixed((*g.labels)[a], kGraphDecimals) + "\n";
  }
  out += "end\n";
  return out;
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  std::vector<std::string> next(const char* section) {
    if (pos_ >= text_.size()) throw GraphFormatError(std::string("truncated graph file in section '") + section + "'");
    auto nl = text_.find('\n', pos_);
    auto line = text_.substr(pos_, nl == std::string_view::npos ? std::string_view::npos : nl - pos_);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    return split_ws(line);
  }

  void expect(const char* keyword) {
    auto tok = next(keyword);
    if (tok.size() != 1 || tok[0] != keyword) throw GraphFormatError(std::string("expected '") + keyword + "' section header");
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

template <class T>
T number(const std::string& s, const char* section) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw GraphFormatError(std::string("malformed number '") + s + "' in section '" + section + "'");
  }
  return v;
}

}  // namespace

EncodedGraph deserialize_graph(std::string_view text) {
  LineReader in(text);
  auto version = in.next("header");
  if (version.size() != 1 || version[0] != kGraphFormatVersion) {
    throw GraphFormatError("unsupported graph format version '" + (version.empty() ? std::string() : version[0]) + "'");
  }
  auto counts = in.next("counts");
  if (counts.size() != 9 || counts[0] != "counts" || counts[1] != "agents" || counts[3] != "nodes" ||
      counts[5] != "edges" || counts[7] != "labels") {
    throw GraphFormatError("malformed section 'counts'");
  }
  EncodedGraph g;
  g.num_agents = number<int>(counts[2], "counts");
  const int n_nodes = number<int>(counts[4], "counts");
  const int n_edges = number<int>(counts[6], "counts");
  const int has_labels = number<int>(counts[8], "counts");
  if (g.num_agents < 0 || n_nodes < 0 || n_edges < 0 || (has_labels != 0 && has_labels != 1)) {
    throw GraphFormatError("malformed section 'counts'");
  }

  auto norm = in.next("norm");
  if (norm.size() != 5 || norm[0] != "norm" || norm[1] != "makespan" || norm[3] != "agents") {
    throw GraphFormatError("malformed section 'norm'");
  }
  g.makespan = number<double>(norm[2], "norm");
  auto feat = in.next("features");
  if (feat.size() < 5 || feat[0] != "features" || feat[2] != "11" || feat[4] != "3") {
    throw GraphFormatError("feature dimensions must be node 11 edge 3");
  }

  in.expect("partition");
  g.agents.resize(static_cast<std::size_t>(g.num_agents));
  std::vector<int> seen(static_cast<std::size_t>(n_nodes), 0);
  for (int a = 0; a < g.num_agents; ++a) {
    auto tok = in.next("partition");
    if (tok.size() < 2 || number<int>(tok[0], "partition") != a) throw GraphFormatError("malformed section 'partition'");
    const int cnt = number<int>(tok[1], "partition");
    if (cnt < 0 || static_cast<int>(tok.size()) != cnt + 2) throw GraphFormatError("malformed section 'partition'");
    for (int k = 0; k < cnt; ++k) {
      int id = number<int>(tok[static_cast<std::size_t>(k) + 2], "partition");
      if (id < 0 || id >= n_nodes || seen[static_cast<std::size_t>(id)]++) {
        throw GraphFormatError("partition must cover every node exactly once");
      }
      g.agents[static_cast<std::size_t>(a)].push_back(id);
    }
  }
  if (std::count(seen.begin(), seen.end(), 1) != n_nodes) throw GraphFormatError("partition must cover every node exactly once");

  in.expect("nodes");
  g.nodes.resize(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    auto tok = in.next("nodes");
    if (tok.size() != node_feature::kCount + 1 || number<int>(tok[0], "nodes") != i) {
      throw GraphFormatError("malformed section 'nodes'");
    }
    for (int k = 0; k < node_feature::kCount; ++k) {
      g.nodes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = number<double>(tok[static_cast<std::size_t>(k) + 1], "nodes");
    }
  }

  in.expect("edges");
  g.edges.resize(static_cast<std::size_t>(n_edges));
  for (int i = 0; i < n_edges; ++i) {
    auto tok = in.next("edges");
    if (tok.size() != edge_feature::kCount + 3) throw GraphFormatError("malformed section 'edges'");
    auto& e = g.edges[static_cast<std::size_t>(i)];
    e.src = number<int>(tok[0], "edges");
    e.dst = number<int>(tok[1], "edges");
    int type = number<int>(tok[2], "edges");
    if (e.src < 0 || e.src >= n_nodes || e.dst < 0 || e.dst >= n_nodes || (type != 1 && type != 2)) {
      throw GraphFormatError("malformed section 'edges'");
    }
    e.type = static_cast<EdgeType>(type);
    for (int k = 0; k < edge_feature::kCount; ++k) {
      e.features[static_cast<std::size_t>(k)] = number<double>(tok[static_cast<std::size_t>(k) + 3], "edges");
    }
  }

  if (has_labels) {
    in.expect("labels");
    std::vector<double> labels(static_cast<std::size_t>(g.num_agents));
    for (int a = 0; a < g.num_agents; ++a) {
      auto tok = in.next("labels");
      if (tok.size() != 2 || number<int>(tok[0], "labels") != a) throw GraphFormatError("malformed section 'labels'");
      labels[static_cast<std::size_t>(a)] = number<double>(tok[1], "labels");
    }
    g.labels = std::move(labels);
  }
  in.expect("end");
  return g;
}

}  // namespace mapfrd
