#pragma once

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mapfrd {

enum class PenaltyKind { Linear, Percentage, Quadratic };

const char* penalty_name(PenaltyKind k);
PenaltyKind parse_penalty(std::string_view name);

// Execution time in seconds.
struct PointTime {
  double seconds = 0.0;
};

// ln T ~ Normal(mu, sigma), natural-log seconds.
struct LogNormalTime {
  double mu = 0.0;
  double sigma = 0.0;
};

using AgentEstimate = std::variant<PointTime, LogNormalTime>;

struct Estimate {
  std::vector<AgentEstimate> agents;

  bool is_distribution() const;
  // Point value, or the median e^mu of a distribution.
  double central_time(std::size_t agent) const;
  std::vector<double> central_times() const;
};

// Standard normal CDF through erfc; absolute error well below 1e-12.
double normal_cdf(double z);

double point_penalty(double t, double deadline, PenaltyKind kind);
// E[phi(T, d)] for ln T ~ N(mu, sigma). sigma == 0 reduces to point_penalty(e^mu, d).
double expected_penalty(double mu, double sigma, double deadline, PenaltyKind kind);
double agent_penalty(const AgentEstimate& e, double deadline, PenaltyKind kind);

// Mean penalty over agents. Throws std::invalid_argument on length mismatch or when
// point and distribution estimates are mixed.
double aggregate(const Estimate& estimate, std::span<const double> deadlines, PenaltyKind kind);
double aggregate_times(std::span<const double> times, std::span<const double> deadlines, PenaltyKind kind);

}  // namespace mapfrd
