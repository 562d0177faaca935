#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "grpo_agg/divergence.hpp"
#include "test_support.hpp"

using namespace grpo_agg;
using testing_support::random_distribution;

namespace {

const Distribution kHalf{0.5, 0.5};
const Distribution kRef{0.8, 0.2};

// Central difference along coordinate i, treating the value as a function of
// unconstrained probabilities.
template <typename F>
double central_difference(F&& f, Distribution x, std::size_t i) {
  const double h = 1e-6 * x[i];
  x[i] += h;
  const double up = f(x);
  x[i] -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Unclamped forms of the values, so finite differences see the smooth function.
double raw_kl0(const Distribution& pi, const Distribution& ref, const Distribution& old) {
  double t = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double x = ref[i] / pi[i];
    t += old[i] * (x - std::log(x) - 1.0);
  }
  return t;
}

double raw_kl(const Distribution& pi, const Distribution& ref) {
  double t = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) t += pi[i] * std::log(pi[i] / ref[i]);
  return t;
}

double raw_reverse_kl(const Distribution& pi, const Distribution& ref) {
  double t = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) t += ref[i] * std::log(ref[i] / pi[i]);
  return t;
}

void expect_relative(double analytic, double numeric, double tol) {
  EXPECT_LE(std::abs(analytic - numeric), tol * std::max(1.0, std::abs(analytic)))
      << "analytic " << analytic << " numeric " << numeric;
}

}  // namespace

TEST(Kl0, Examples) {
  EXPECT_EQ(kl0(kRef, kRef, kHalf), 0.0);
  EXPECT_NEAR(kl0(kHalf, kRef, kHalf), 0.22314355131420976, 1e-12);
  const double expected = 0.9 * (1.6 - std::log(1.6) - 1.0) + 0.1 * (0.4 - std::log(0.4) - 1.0);
  EXPECT_NEAR(kl0(kHalf, kRef, Distribution{0.9, 0.1}), expected, 1e-15);
  EXPECT_NEAR(kl0(kHalf, kRef, Distribution{0.9, 0.1}), 0.14863, 5e-6);
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl(kRef, kRef), 0.0);
  EXPECT_NEAR(kl(kHalf, kRef), 0.22314355131420976, 1e-12);
  EXPECT_NEAR(kl(Distribution{1.0, 0.0}, kHalf), std::log(2.0), 1e-15);
}

TEST(ReverseKl, Examples) {
  EXPECT_EQ(reverse_kl(kRef, kRef), 0.0);
  EXPECT_NEAR(reverse_kl(kHalf, kRef), 0.19274475702175753, 1e-12);
  EXPECT_NEAR(reverse_kl(Distribution{0.9, 0.1}, Distribution{1.0, 0.0}), 0.10536051565782635, 1e-12);
  EXPECT_EQ(reverse_kl(Distribution{1.0, 0.0}, kHalf), std::numeric_limits<double>::infinity());
}

TEST(Gradients, Examples) {
  for (double g : kl0_grad(kRef, kRef, kRef)) EXPECT_EQ(g, 0.0);
  const auto g = kl0_grad(kHalf, kRef, kHalf);
  EXPECT_NEAR(g[0], -0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.6, 1e-15);
  for (double v : kl_grad(kRef, kRef)) EXPECT_EQ(v, 1.0);
  const auto k = kl_grad(kHalf, kRef);
  EXPECT_NEAR(k[0], 0.5299963707542643, 1e-12);
  EXPECT_NEAR(k[1], 1.916290731874155, 1e-12);
}

TEST(Divergences, UnbiasednessAndNonnegativity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    const Distribution pi = random_distribution(n, rng, 0.0);
    const Distribution ref = random_distribution(n, rng, 0.0);
    const Distribution old = random_distribution(n, rng, 0.0);
    EXPECT_NEAR(kl0(pi, ref, pi), kl(pi, ref), 1e-12);
    EXPECT_GE(kl0(pi, ref, old), 0.0);
    EXPECT_GE(kl(pi, ref), 0.0);
    EXPECT_GE(reverse_kl(pi, ref), 0.0);
  }
}

TEST(Divergences, GradientEquivalenceWithReverseKl) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    const Distribution pi = random_distribution(n, rng, 0.01);
    const Distribution ref = random_distribution(n, rng, 0.01);
    const auto a = kl0_grad(pi, ref, pi);
    const auto b = reverse_kl_grad(pi, ref);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i] + 1.0, 1e-12);
  }
}

TEST(Divergences, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 5;
    const Distribution pi = random_distribution(n, rng, 0.05);
    const Distribution ref = random_distribution(n, rng, 0.05);
    const Distribution old = random_distribution(n, rng, 0.05);
    const auto g0 = kl0_grad(pi, ref, old);
    const auto g1 = kl_grad(pi, ref);
    const auto g2 = reverse_kl_grad(pi, ref);
    for (std::size_t i = 0; i < n; ++i) {
      expect_relative(g0[i], central_difference([&](const Distribution& x) { return raw_kl0(x, ref, old); }, pi, i), 1e-6);
      expect_relative(g1[i], central_difference([&](const Distribution& x) { return raw_kl(x, ref); }, pi, i), 1e-6);
      expect_relative(g2[i], central_difference([&](const Distribution& x) { return raw_reverse_kl(x, ref); }, pi, i), 1e-6);
    }
  }
}

TEST(Divergences, SupportViolations) {
  EXPECT_THROW(kl(Distribution{0.5, 0.5}, Distribution{1.0, 0.0}), SupportError);
  EXPECT_THROW(kl0(Distribution{1.0, 0.0}, kHalf, kHalf), SupportError);
  EXPECT_THROW(kl0(Distribution{0.5, 0.5}, Distribution{1.0, 0.0}, kHalf), SupportError);
  EXPECT_THROW(kl(Distribution{1.0}, kHalf), ValidationError);
}
