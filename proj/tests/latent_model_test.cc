#include "ctc/latent_model.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace ctc {
namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Unnormalized Gaussian mass of bin k, taken from the upper tail so far
// bins keep their relative precision.
double raw_bin(std::int64_t k, double sigma) {
  const double a = (std::abs(static_cast<double>(k)) - 0.5) / sigma;
  const double b = (std::abs(static_cast<double>(k)) + 0.5) / sigma;
  return phi(-a) - phi(-b);
}

double grid_mass(double sigma, int depth) {
  const double half = static_cast<double>((pow3(depth) - 1) / 2);
  return phi((half + 0.5) / sigma) - phi(-(half + 0.5) / sigma);
}

TEST(QuantizeCenter, RoundsHalfAwayFromZero) {
  const Shape shape{1, 1, 4};
  const auto field = GaussianField::per_channel(shape, {0.0}, {1.0});
  const RealTensor y(shape, std::vector<double>{0.0, 2.49, 2.5, -2.5});
  const auto q = quantize_center(y, field);
  EXPECT_EQ(q.values[0], 0);
  EXPECT_EQ(q.values[1], 2);
  EXPECT_EQ(q.values[2], 3);
  EXPECT_EQ(q.values[3], -3);
  EXPECT_EQ(q.clamped, 0u);
}

TEST(QuantizeCenter, ClampsToFixedDepthAndCounts) {
  const Shape shape{1, 1, 3};
  const auto field = GaussianField::per_channel(shape, {1.0}, {1.0});
  const RealTensor y(shape, std::vector<double>{10.0, -10.0, 1.0});
  const auto q = quantize_center_at_depth(y, field, 2);
  EXPECT_EQ(q.values[0], 4);
  EXPECT_EQ(q.values[1], -4);
  EXPECT_EQ(q.values[2], 0);
  EXPECT_EQ(q.clamped, 2u);
}

TEST(QuantizeCenter, EmpiricalPmfMatchesBinPmf) {
  const Shape shape{1, 1000, 1000};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealTensor y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = normal(rng);
  const auto field = GaussianField::per_channel(shape, {0.0}, {1.0});
  const auto q = quantize_center_at_depth(y, field, 3);
  std::vector<double> hist(27, 0.0);
  for (std::size_t i = 0; i < q.values.size(); ++i) hist[q.values[i] + 13] += 1.0;
  double tv = 0.0;
  for (int k = -13; k <= 13; ++k)
    tv += std::abs(hist[k + 13] / y.size() - bin_pmf(k, 1.0, 3));
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(BinPmf, MatchesErfOracle) {
  EXPECT_NEAR(bin_pmf(0, 1.0, 3), raw_bin(0, 1.0) / grid_mass(1.0, 3), 1e-15);
  EXPECT_NEAR(bin_pmf(0, 1.0, 7), 0.38292492254802624, 1e-12);
  for (int k = -4; k <= 4; ++k)
    EXPECT_NEAR(bin_pmf(k, 2.0, 2), raw_bin(k, 2.0) / grid_mass(2.0, 2), 1e-15);
}

TEST(BinPmf, WideScaleIsUniform) {
  for (int k = -4; k <= 4; ++k) EXPECT_NEAR(bin_pmf(k, 1e6, 2), 1.0 / 9.0, 1e-6);
}

TEST(BinPmf, SumsToOne) {
  for (int depth : {1, 3, 5, 8}) {
    for (double sigma : {1e-3, 0.05, 0.7, 1.0, 3.3, 40.0, 1e4}) {
      const DiscretePrior prior(sigma, depth);
      const std::int64_t half = BinGrid{depth}.half();
      double sum = 0.0;
      for (std::int64_t k = -half; k <= half; ++k) sum += prior.pmf(k);
      EXPECT_NEAR(sum, 1.0, 1e-12) << "sigma " << sigma << " depth " << depth;
    }
  }
}

TEST(BinPmf, RejectsBadScaleAndIndex) {
  EXPECT_THROW(bin_pmf(0, 0.0, 2), Error);
  EXPECT_THROW(bin_pmf(0, -1.0, 2), Error);
  EXPECT_THROW(bin_pmf(5, 1.0, 2), Error);
}

TEST(IntervalStats, SymmetricIntervalHasZeroMean) {
  for (double sigma : {0.3, 1.0, 2.0, 17.0})
    EXPECT_EQ(interval_stats(-4, 4, sigma, 3).mean, 0.0);
  EXPECT_EQ(interval_stats(-3000, 3000, 500.0, 9).mean, 0.0);
}

TEST(IntervalStats, SingletonIsExact) {
  for (double sigma : {0.1, 1.0, 50.0}) {
    const auto s = interval_stats(2, 2, sigma, 3);
    EXPECT_EQ(s.mean, 2.0);
    EXPECT_EQ(s.second_moment, 4.0);
  }
}

TEST(IntervalStats, FourBinOracle) {
  double mass = 0.0, m1 = 0.0, m2 = 0.0;
  for (int k = 1; k <= 4; ++k) {
    const double p = raw_bin(k, 2.0);
    mass += p;
    m1 += k * p;
    m2 += k * k * p;
  }
  const auto s = interval_stats(1, 4, 2.0, 2);
  EXPECT_NEAR(s.mean, m1 / mass, 1e-12);
  EXPECT_NEAR(s.second_moment, m2 / mass, 1e-12);
  EXPECT_NEAR(s.mass, mass / grid_mass(2.0, 2), 1e-14);
}

TEST(IntervalStats, WideIntervalsAgreeWithDirectSums) {
  std::mt19937_64 rng(3);
  const int depth = 9;
  const std::int64_t half = BinGrid{depth}.half();
  std::uniform_int_distribution<std::int64_t> pick(-half, half);
  for (double sigma : {3.0, 150.0, 4000.0}) {
    const DiscretePrior prior(sigma, depth);
    for (int trial = 0; trial < 50; ++trial) {
      std::int64_t lo = pick(rng), hi = pick(rng);
      if (lo > hi) std::swap(lo, hi);
      double mass = 0.0, m1 = 0.0;
      for (std::int64_t k = lo; k <= hi; ++k) {
        mass += prior.pmf(k);
        m1 += k * prior.pmf(k);
      }
      const auto s = prior.stats(lo, hi);
      EXPECT_NEAR(s.mass, mass, 1e-13 + 1e-12 * mass);
      if (mass > 1e-200) EXPECT_NEAR(s.mean, m1 / mass, 1e-9 * (1 + std::abs(s.mean)));
    }
  }
}

TEST(IntervalStats, MassIsSumOfThirds) {
  const DiscretePrior prior(5.0, 6);
  for (std::int64_t lo : {-364, -40, 7}) {
    const std::int64_t w = 81;
    const double whole = prior.stats(lo, lo + 3 * w - 1).mass;
    double parts = 0.0;
    for (int t = 0; t < 3; ++t) parts += prior.stats(lo + t * w, lo + (t + 1) * w - 1).mass;
    EXPECT_NEAR(whole, parts, 1e-14);
  }
}

TEST(IntervalStats, ZeroMassReportsMidpoint) {
  const auto s = interval_stats(100, 120, 0.5, 5);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.mass, 0.0);
  EXPECT_EQ(s.mean, 110.0);
}

TEST(IntervalStats, ConditionalMeanMinimizesSquaredError) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> log_sigma(-2.0, 4.0);
  std::uniform_int_distribution<int> pick(-121, 121);
  for (int trial = 0; trial < 200; ++trial) {
    const double sigma = std::exp(log_sigma(rng));
    const DiscretePrior prior(sigma, 5);
    int lo = pick(rng), hi = pick(rng);
    if (lo > hi) std::swap(lo, hi);
    const auto s = prior.stats(lo, hi);
    if (s.degenerate) continue;
    const auto risk = [&](double c) {
      double r = 0.0;
      for (int k = lo; k <= hi; ++k) r += prior.pmf(k) * (k - c) * (k - c);
      return r / s.mass;
    };
    const double best = risk(s.mean);
    EXPECT_LE(best, risk(0.5 * (lo + hi)) + 1e-10);
    for (int j = 0; j <= 100; ++j) EXPECT_LE(best, risk(lo + (hi - lo) * j / 100.0) + 1e-10);
  }
}

TEST(ChooseDepth, Examples) {
  const Shape shape{1, 1, 1};
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{0.0})), 1);
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{4.0})), 2);
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{-1093.0})), 7);
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{1094.0})), 8);
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{1e12})), kDefaultMaxDepth);
  EXPECT_EQ(choose_depth(RealTensor(shape, std::vector<double>{1e12}), 4), 4);
}

TEST(GaussianField, ValidatesParameters) {
  const Shape shape{2, 2, 2};
  EXPECT_THROW(GaussianField::per_channel(shape, {0.0}, {1.0}), Error);
  EXPECT_THROW(GaussianField::per_channel(shape, {0.0, 0.0}, {1.0, 0.0}), Error);
  const auto f = GaussianField::per_channel(shape, {1.0, -2.0}, {1.0, 3.0});
  EXPECT_EQ(f.mean(5), -2.0);
  EXPECT_EQ(f.scale(3), 1.0);
}

TEST(PriorSet, SharesTablesByScale) {
  const Shape shape{1, 1, 4};
  const auto f = GaussianField::per_element(shape, {0, 0, 0, 0}, {1.0, 2.0, 1.0, 2.0});
  const PriorSet priors(f, 3);
  EXPECT_EQ(&priors.at(0), &priors.at(2));
  EXPECT_NE(&priors.at(0), &priors.at(1));
  EXPECT_EQ(priors.at(3).sigma(), 2.0);
}

}  // namespace
}  // namespace ctc
