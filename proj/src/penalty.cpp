#include "mapfrd/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace mapfrd {

const char* penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::Linear: return "linear";
    case PenaltyKind::Percentage: return "percentage";
    case PenaltyKind::Quadratic: return "quadratic";
  }
  return "?";
}

PenaltyKind parse_penalty(std::string_view name) {
  if (name == "linear") return PenaltyKind::Linear;
  if (name == "percentage") return PenaltyKind::Percentage;
  if (name == "quadratic") return PenaltyKind::Quadratic;
  throw std::invalid_argument("unknown penalty kind '" + std::string(name) + "'");
}

bool Estimate::is_distribution() const {
  return !agents.empty() && std::holds_alternative<LogNormalTime>(agents.front());
}

double Estimate::central_time(std::size_t agent) const {
  const auto& e = agents.at(agent);
  if (const auto* p = std::get_if<PointTime>(&e)) return p->seconds;
  return std::exp(std::get<LogNormalTime>(e).mu);
}

std::vector<double> Estimate::central_times() const {
  std::vector<double> out;
  out.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) out.push_back(central_time(i));
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double point_penalty(double t, double deadline, PenaltyKind kind) {
  const double late = std::max(0.0, t - deadline);
  switch (kind) {
    case PenaltyKind::Linear: return late;
    case PenaltyKind::Percentage: return t > deadline ? 1.0 : 0.0;
    case PenaltyKind::Quadratic: return late * late;
  }
  return 0.0;
}

double expected_penalty(double mu, double sigma, double deadline, PenaltyKind kind) {
  if (sigma < 0) throw std::invalid_argument("sigma must be non-negative");
  if (!(deadline > 0)) throw std::invalid_argument("deadline must be positive");
  if (sigma == 0.0) return point_penalty(std::exp(mu), deadline, kind);
  const double log_d = std::log(deadline);
  const double z_d = (log_d - mu) / sigma;
  switch (kind) {
    case PenaltyKind::Percentage:
      return normal_cdf(-z_d);
    case PenaltyKind::Linear: {
      double v = std::exp(mu + 0.5 * sigma * sigma) * normal_cdf((mu + sigma * sigma - log_d) / sigma) -
                 deadline * normal_cdf(-z_d);
      return std::max(0.0, v);
    }
    case PenaltyKind::Quadratic: {
      // In z = (ln t - mu) / sigma the integrand is (e^{mu + sigma z} - d)^2 phi(z);
      // its mass sits around z = 2 sigma.
      const double inv_sqrt_2pi = 0.3989422804014327;
      auto f = [&](double z) {
        double late = std::exp(mu + sigma * z) - deadline;
        return late * late * inv_sqrt_2pi * std::exp(-0.5 * z * z);
      };
      // phi(z) underflows past |z| = 40; clipping keeps tiny-sigma spikes resolvable.
      const double lo = std::max(z_d, -40.0);
      const double hi = std::max(lo, 2.0 * sigma) + 14.0;
      return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 20, 1e-13);
    }
  }
  return 0.0;
}

double agent_penalty(const AgentEstimate& e, double deadline, PenaltyKind kind) {
  if (const auto* p = std::get_if<PointTime>(&e)) return point_penalty(p->seconds, deadline, kind);
  const auto& d = std::get<LogNormalTime>(e);
  return expected_penalty(d.mu, d.sigma, deadline, kind);
}

double aggregate(const Estimate& estimate, std::span<const double> deadlines, PenaltyKind kind) {
  if (estimate.agents.size() != deadlines.size()) throw std::invalid_argument("estimate and deadline counts differ");
  if (deadlines.empty()) return 0.0;
  const bool dist = estimate.is_distribution();
  double sum = 0.0;
  for (std::size_t i = 0; i < deadlines.size(); ++i) {
    if (std::holds_alternative<LogNormalTime>(estimate.agents[i]) != dist) {
      throw std::invalid_argument("point and distribution estimates cannot be mixed");
    }
    sum += agent_penalty(estimate.agents[i], deadlines[i], kind);
  }
  return sum / static_cast<double>(deadlines.size());
}

double aggregate_times(std::span<const double> times, std::span<const double> deadlines, PenaltyKind kind) {
  if (times.size() != deadlines.size()) throw std::invalid_argument("time and deadline counts differ");
  if (times.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) sum += point_penalty(times[i], deadlines[i], kind);
  return sum / static_cast<double>(times.size());
}

}  // namespace mapfrd
