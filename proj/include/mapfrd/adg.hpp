#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mapfrd/single_agent.hpp"

namespace mapfrd {

enum class EdgeType : std::uint8_t { Type1 = 1, Type2 = 2 };

struct AdgNode {
  AgentId agent = 0;
  int index = 0;  // position in the agent's action list
  Action action;
};

struct AdgEdge {
  int src = 0;
  int dst = 0;
  EdgeType type = EdgeType::Type1;
  bool operator==(const AdgEdge&) const = default;
};

// Action Dependency Graph. A Type2 edge src -> dst means dst may start only once src is done.
struct Adg {
  int num_agents = 0;
  std::vector<AdgNode> nodes;
  std::vector<AdgEdge> edges;
  std::vector<std::vector<int>> agent_nodes;  // node ids per agent, plan order
  std::vector<std::vector<int>> out_edges;    // edge ids per node
  std::vector<std::vector<int>> in_edges;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int count(EdgeType t) const;
};

// Type2 edges order every pair of successive visits to a cell by different agents
// (leaving action -> entering action). Overlapping visits, i.e. vertex conflicts, link
// the two entering actions in both directions; a missing leaving action stands in as the
// agent's last action and a missing entering action as its first.
Adg build_adg(std::span<const ActionPath> plan);

// A mutual pair is reported in preference to longer cycles.
struct CycleCheck {
  bool acyclic = true;
  std::vector<int> cycle;  // node ids, each with an edge to the next and last -> first
};

CycleCheck check_acyclic(const Adg& adg);
// Kahn order; empty when cyclic.
std::vector<int> topological_order(const Adg& adg);

namespace node_feature {
// Action one-hot (3), normalized timestep, normalized agent id, path index, in-degree,
// out-degree, preceding actions of the agent, later same-type actions of the agent,
// has-outgoing-Type2.
enum : int {
  kMove = 0, kRotate, kWait, kTimestep, kAgent, kPathIndex, kInDegree, kOutDegree,
  kPreceding, kFutureSameType, kHasType2Out, kCount
};
}  // namespace node_feature

namespace edge_feature {
// Type indicator (0 Type1, 1 Type2), path-index difference dst - src, normalized
// planned-timestep difference dst - src.
enum : int { kType = 0, kIndexDiff, kTimestepDiff, kCount };
}  // namespace edge_feature

struct EncodedEdge {
  int src = 0;
  int dst = 0;
  EdgeType type = EdgeType::Type1;
  std::array<double, edge_feature::kCount> features{};
};

struct EncodedGraph {
  int num_agents = 0;
  double makespan = 1.0;  // timestep normalizer
  std::vector<std::array<double, node_feature::kCount>> nodes;
  std::vector<EncodedEdge> edges;
  std::vector<std::vector<int>> agents;
  std::optional<std::vector<double>> labels;  // seconds per agent

  int num_nodes() const { return static_cast<int>(nodes.size()); }
};

EncodedGraph encode(const Adg& adg);

class GraphFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kGraphFormatVersion = "adgv1";
inline constexpr int kGraphDecimals = 9;

std::string serialize_graph(const EncodedGraph& g);
EncodedGraph deserialize_graph(std::string_view text);

}  // namespace mapfrd
