#include <gtest/gtest.h>

#include <cmath>

#include "mapfrd/penalty.hpp"
#include "oracles.hpp"

using namespace mapfrd;

namespace {

// E[(T - d)+] by Simpson in z-space, where T = e^{mu + sigma z}.
double linear_quadrature(double mu, double s, double d) {
  const double zd = (std::log(d) - mu) / s;
  auto f = [&](double z) {
    return std::max(0.0, std::exp(mu + s * z) - d) * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI);
  };
  return oracle::simpson(f, zd, std::max(zd, 2 * s) + 12, 200000);
}

}  // namespace

TEST(PointPenalty, Examples) {
  EXPECT_EQ(point_penalty(90, 100, PenaltyKind::Linear), 0.0);
  EXPECT_EQ(point_penalty(110, 100, PenaltyKind::Linear), 10.0);
  EXPECT_EQ(point_penalty(110, 100, PenaltyKind::Percentage), 1.0);
  EXPECT_EQ(point_penalty(110, 100, PenaltyKind::Quadratic), 100.0);
  for (auto k : {PenaltyKind::Linear, PenaltyKind::Percentage, PenaltyKind::Quadratic}) {
    EXPECT_EQ(point_penalty(100, 100, k), 0.0);
  }
}

TEST(ExpectedPenalty, PercentageAtMedianIsHalf) {
  EXPECT_NEAR(expected_penalty(std::log(100.0), 0.5, 100, PenaltyKind::Percentage), 0.5, 1e-15);
}

TEST(ExpectedPenalty, DegenerateSigma) {
  EXPECT_NEAR(expected_penalty(std::log(110.0), 0.0, 100, PenaltyKind::Linear), 10.0, 1e-12);
  EXPECT_NEAR(expected_penalty(std::log(110.0), 0.0, 100, PenaltyKind::Quadratic), 100.0, 1e-9);
  EXPECT_EQ(expected_penalty(std::log(110.0), 0.0, 100, PenaltyKind::Percentage), 1.0);
}

TEST(ExpectedPenalty, LinearMatchesQuadratureExample) {
  const double mu = std::log(100.0);
  EXPECT_NEAR(expected_penalty(mu, 0.5, 120, PenaltyKind::Linear), linear_quadrature(mu, 0.5, 120), 1e-6);
}

TEST(ExpectedPenalty, LinearMatchesQuadratureGrid) {
  for (double m : {10.0, 55.0, 300.0, 1000.0, 3000.0}) {
    const double mu = std::log(m);
    for (double s : {0.01, 0.05, 0.2, 0.5, 1.0}) {
      for (double k : {0.5, 1.0, 2.0}) {
        const double d = k * m;
        EXPECT_NEAR(expected_penalty(mu, s, d, PenaltyKind::Linear), linear_quadrature(mu, s, d), 1e-6)
            << "mu=ln " << m << " sigma=" << s << " d=" << d;
      }
    }
  }
}

TEST(ExpectedPenalty, QuadraticMatchesPartialMoments) {
  for (double m : {10.0, 300.0, 3000.0}) {
    for (double s : {0.01, 0.2, 1.0}) {
      for (double k : {0.5, 1.0, 2.0}) {
        const double want = oracle::quadratic_closed_form(std::log(m), s, k * m);
        EXPECT_NEAR(expected_penalty(std::log(m), s, k * m, PenaltyKind::Quadratic), want, 1e-9 * std::max(1.0, want));
      }
    }
  }
}

TEST(ExpectedPenalty, PercentageBoundedAndMonotoneInDeadline) {
  for (auto kind : {PenaltyKind::Linear, PenaltyKind::Percentage, PenaltyKind::Quadratic}) {
    double prev = INFINITY;
    for (double d = 5; d <= 400; d *= 1.3) {
      double p = expected_penalty(std::log(100.0), 0.4, d, kind);
      EXPECT_LE(p, prev + 1e-12);
      if (kind == PenaltyKind::Percentage) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
      prev = p;
    }
  }
}

TEST(ExpectedPenalty, ConvergesToPointAsSigmaVanishes) {
  for (double t : {80.0, 120.0}) {
    for (auto kind : {PenaltyKind::Linear, PenaltyKind::Percentage, PenaltyKind::Quadratic}) {
      double point = point_penalty(t, 100, kind);
      double e = expected_penalty(std::log(t), 1e-6, 100, kind);
      EXPECT_NEAR(e, point, 1e-3 * std::max(1.0, point));
    }
  }
}

TEST(ExpectedPenalty, RejectsBadArguments) {
  EXPECT_THROW(expected_penalty(0, -1, 1, PenaltyKind::Linear), std::invalid_argument);
  EXPECT_THROW(expected_penalty(0, 1, 0, PenaltyKind::Linear), std::invalid_argument);
}

TEST(Aggregate, Examples) {
  std::vector<double> d{10, 10, 10, 10};
  Estimate on_time{{PointTime{1}, PointTime{2}, PointTime{3}, PointTime{4}}};
  EXPECT_EQ(aggregate(on_time, d, PenaltyKind::Linear), 0.0);
  Estimate one_late{{PointTime{1}, PointTime{18}, PointTime{3}, PointTime{4}}};
  EXPECT_DOUBLE_EQ(aggregate(one_late, d, PenaltyKind::Linear), 2.0);
  EXPECT_DOUBLE_EQ(aggregate(one_late, d, PenaltyKind::Percentage), 0.25);
  Estimate mixed{{PointTime{1}, LogNormalTime{1, 0.1}, PointTime{3}, PointTime{4}}};
  EXPECT_THROW(aggregate(mixed, d, PenaltyKind::Linear), std::invalid_argument);
  EXPECT_THROW(aggregate(on_time, std::vector<double>{1, 2}, PenaltyKind::Linear), std::invalid_argument);
  std::vector<double> times{1, 18, 3, 4};
  EXPECT_DOUBLE_EQ(aggregate_times(times, d, PenaltyKind::Quadratic), 16.0);
}

TEST(Aggregate, CentralTimeOfDistributionIsMedian) {
  Estimate e{{LogNormalTime{std::log(50.0), 0.3}}};
  EXPECT_TRUE(e.is_distribution());
  EXPECT_NEAR(e.central_time(0), 50.0, 1e-12);
}

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(normal_cdf(0), 0.5);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-3.0), 0.0013498980316300946, 1e-16);
}

TEST(PenaltyKind, Names) {
  for (auto k : {PenaltyKind::Linear, PenaltyKind::Percentage, PenaltyKind::Quadratic}) {
    EXPECT_EQ(parse_penalty(penalty_name(k)), k);
  }
  EXPECT_THROW(parse_penalty("cubic"), std::invalid_argument);
}
