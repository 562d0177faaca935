#ifndef GRPO_AGG_TEST_SUPPORT_HPP_
#define GRPO_AGG_TEST_SUPPORT_HPP_

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "grpo_agg/grpo_agg.hpp"

namespace testing_support {

using namespace grpo_agg;

inline ContextSpec make_context(const std::vector<double>& ref, const std::vector<RewardSpec>& rewards,
                                std::string id = "q") {
  ContextSpec c;
  c.id = std::move(id);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    c.outputs.push_back({std::string(1, static_cast<char>('a' + i)), ref[i], rewards[i]});
  }
  return c;
}

inline ContextSpec deterministic_context(const std::vector<double>& ref, const std::vector<double>& r) {
  std::vector<RewardSpec> rewards;
  for (double v : r) rewards.push_back(RewardSpec::deterministic(v));
  return make_context(ref, rewards);
}

/// Binary question, deterministic rewards (1, 0).
inline ContextSpec binary_question(double pi_ref_a) { return deterministic_context({pi_ref_a, 1.0 - pi_ref_a}, {1.0, 0.0}); }

inline Hyperparams hyper(double beta, GroupSize g, Penalty p = Penalty::kl0,
                         Normalisation n = Normalisation::shift_scale) {
  return Hyperparams{beta, g, p, n};
}

inline Distribution random_distribution(std::size_t n, std::mt19937_64& rng, double lo = 0.02) {
  Distribution p(n);
  double total = 0.0;
  for (double& v : p) {
    v = lo + uniform01(rng);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

/// Random context with n outputs; each reward is deterministic or Bernoulli with even odds.
inline ContextSpec random_context(std::size_t n, std::mt19937_64& rng) {
  std::vector<RewardSpec> rewards;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = uniform01(rng);
    rewards.push_back(uniform01(rng) < 0.5 ? RewardSpec::deterministic(v) : RewardSpec::bernoulli(v));
  }
  return make_context(random_distribution(n, rng, 0.05), rewards);
}

/// Closed form for the two-answer question with groups of two, written out
/// directly from the quadratic root.
inline double eq14(double pi_ref, double ratio) {
  return 0.5 * ((1.0 - ratio) + std::sqrt((1.0 - ratio) * (1.0 - ratio) + 4.0 * ratio * pi_ref));
}

}  // namespace testing_support

#endif  // GRPO_AGG_TEST_SUPPORT_HPP_
