#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pivodl/dp.hpp"

using namespace pivodl;
using namespace pivodl::dp;

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double skew = 0.0;
  double excess_kurtosis = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : xs) {
    const double d = x - m.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.sd = std::sqrt(m2);
  m.skew = m3 / std::pow(m2, 1.5);
  m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return m;
}

}  // namespace

TEST(Clip, Examples) {
  EXPECT_DOUBLE_EQ(clip_leaf(5.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(clip_leaf(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(clip_leaf(-3.0, 2.0), -2.0);
}

TEST(Sigma, DefaultValue) {
  DpParams p;
  const double expect = std::sqrt(5.0 * std::log(1e5)) / 8.0;
  EXPECT_NEAR(noise_sigma(p), expect, 1e-12);
  EXPECT_NEAR(noise_sigma(p), 0.9484, 1e-4);
}

TEST(Sigma, Scaling) {
  DpParams p;
  const double base = noise_sigma(p);
  DpParams twice = p;
  twice.epsilon *= 2;
  EXPECT_NEAR(noise_sigma(twice), base / 2, 1e-12);
  DpParams longer = p;
  longer.steps *= 4;
  EXPECT_NEAR(noise_sigma(longer), base * 2, 1e-12);
}

TEST(Params, Validation) {
  DpParams p;
  EXPECT_NO_THROW(p.validate());
  for (auto mutate : std::vector<void (*)(DpParams&)>{
           [](DpParams& q) { q.epsilon = 0; }, [](DpParams& q) { q.delta = 1.0; },
           [](DpParams& q) { q.clip = -1; }, [](DpParams& q) { q.sample_rate = 1.5; },
           [](DpParams& q) { q.steps = 0; }}) {
    DpParams q;
    mutate(q);
    EXPECT_THROW(q.validate(), std::invalid_argument);
  }
}

TEST(Perturb, ZeroSigmaReturnsClippedValue) {
  Rng rng(1);
  const auto r = perturb_leaf(0.7, 2.0, 0.0, rng);
  EXPECT_EQ(r.value, 0.7);
  EXPECT_EQ(perturb_leaf(5.0, 2.0, 0.0, rng).value, 2.0);
}

TEST(Perturb, EmpiricalDistribution) {
  DpParams p;
  const double sd = 2.0 * p.clip * noise_sigma(p);
  EXPECT_NEAR(sd, 3.794, 1e-3);
  Rng rng(42);
  std::vector<double> xs(100000);
  for (auto& x : xs) {
    const auto r = perturb_leaf(5.0, p, rng);
    ASSERT_TRUE(r.was_perturbed);
    x = r.value;
  }
  const auto m = moments(xs);
  EXPECT_NEAR(m.sd, sd, 0.02 * sd);
  EXPECT_NEAR(m.mean, 2.0, 4 * sd / std::sqrt(1e5));
  EXPECT_NEAR(m.skew, 0.0, 0.05);
  EXPECT_NEAR(m.excess_kurtosis, 0.0, 0.1);
}

TEST(Perturb, DisabledParamsAreRejected) {
  DpParams p;
  p.enabled = false;
  Rng rng(3);
  EXPECT_THROW(perturb_leaf(5.0, p, rng), std::logic_error);
}
