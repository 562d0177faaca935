#ifndef GRPO_AGG_PREFERENCE_HPP_
#define GRPO_AGG_PREFERENCE_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "grpo_agg/core.hpp"

namespace grpo_agg {

/// Largest number of random reward slots enumerated exactly (2^20 outcomes).
inline constexpr int kMaxEnumeratedRandomSlots = 20;

/// Largest number of companion multisets enumerated exactly.
inline constexpr double kMaxCompanionMultisets = 1e6;

// -----------------------------------------------------------------------------
// Advantages

namespace detail {

inline bool all_equal(std::span<const double> r) {
  for (double x : r) {
    if (x != r[0]) return false;
  }
  return true;
}

inline double mean_of(std::span<const double> r) {
  double s = 0.0;
  for (double x : r) s += x;
  return s / static_cast<double>(r.size());
}

inline double population_std(std::span<const double> r, double mean) {
  double s = 0.0;
  for (double x : r) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(r.size()));
}

/// Advantage of the element at `index` without materialising the whole vector.
inline double advantage_at(std::span<const double> rewards, std::size_t index, Normalisation mode) {
  if (all_equal(rewards)) return 0.0;
  const double m = mean_of(rewards);
  if (mode == Normalisation::shift_only) return rewards[index] - m;
  return (rewards[index] - m) / population_std(rewards, m);
}

}  // namespace detail

/// Group-normalised advantages. All-equal rewards give all zeros (0/0 := 0).
inline std::vector<double> advantages(std::span<const double> rewards, Normalisation mode) {
  if (rewards.size() < 2) throw ValidationError("advantages need at least two rewards");
  std::vector<double> a(rewards.size(), 0.0);
  if (detail::all_equal(rewards)) return a;
  const double m = detail::mean_of(rewards);
  const double scale = mode == Normalisation::shift_scale ? detail::population_std(rewards, m) : 1.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - m) / scale;
  return a;
}

// -----------------------------------------------------------------------------
// Group-relative preference for a fixed group

/// Expected advantage of `target` placed first in a group with the given
/// companions, the expectation taken over the reward distributions. Random
/// rewards are enumerated exactly; each joint outcome applies 0/0 := 0.
inline double group_preference(std::size_t target, std::span<const std::size_t> others,
                               const ContextSpec& context, Normalisation mode) {
  const std::size_t g = others.size() + 1;
  if (g < 2) throw ValidationError("group_preference needs at least one companion");
  std::vector<const RewardSpec*> slots;
  slots.reserve(g);
  slots.push_back(&context.outputs.at(target).reward);
  for (std::size_t o : others) slots.push_back(&context.outputs.at(o).reward);

  std::vector<double> rewards(g);
  std::vector<std::size_t> random_slots;
  for (std::size_t i = 0; i < g; ++i) {
    if (slots[i]->is_random()) {
      random_slots.push_back(i);
    } else {
      rewards[i] = slots[i]->outcomes().front().value;
    }
  }
  if (random_slots.empty()) return detail::advantage_at(rewards, 0, mode);
  if (random_slots.size() > static_cast<std::size_t>(kMaxEnumeratedRandomSlots)) {
    throw EnumerationLimitError(detail::concat("exact reward enumeration over ", random_slots.size(),
                                               " random slots exceeds ", kMaxEnumeratedRandomSlots,
                                               "; use Monte Carlo"));
  }

  // Walk all 2^k success/failure patterns of the random slots.
  const std::uint64_t patterns = std::uint64_t{1} << random_slots.size();
  double total = 0.0;
  for (std::uint64_t bits = 0; bits < patterns; ++bits) {
    double weight = 1.0;
    for (std::size_t k = 0; k < random_slots.size(); ++k) {
      const double p = slots[random_slots[k]]->parameter();
      const bool success = (bits >> k) & 1U;
      rewards[random_slots[k]] = success ? 1.0 : 0.0;
      weight *= success ? p : 1.0 - p;
    }
    total += weight * detail::advantage_at(rewards, 0, mode);
  }
  return total;
}

/// P(r_o > r_o') for independent reward draws; ties count for neither side.
inline double pairwise_preference(std::size_t o, std::size_t o_prime, const ContextSpec& context) {
  double p = 0.0;
  for (const auto& a : context.outputs.at(o).reward.outcomes()) {
    for (const auto& b : context.outputs.at(o_prime).reward.outcomes()) {
      if (a.value > b.value) p += a.probability * b.probability;
    }
  }
  return p;
}

// -----------------------------------------------------------------------------
// Expected group-relative preference

struct ExactMethod {};

struct MonteCarloMethod {
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

using PreferenceMethod = std::variant<ExactMethod, MonteCarloMethod>;

struct GroupPreferenceQuery {
  std::size_t target = 0;
  Distribution policy;  // companion sampling distribution
  int group_size = 2;
  PreferenceMethod method = ExactMethod{};
};

struct PreferenceEstimate {
  double value = 0.0;
  double standard_error = 0.0;  // zero exactly for exact enumeration
};

namespace detail {

inline double multiset_count(std::size_t n, std::size_t m) {
  // C(n + m - 1, m)
  double c = 1.0;
  for (std::size_t k = 1; k <= m; ++k) {
    c *= static_cast<double>(n - 1 + k) / static_cast<double>(k);
  }
  return c;
}

/// Calls visit(companions, weight) for every multiset of m companions drawn
/// i.i.d. from `policy`, with its multinomial probability.
template <typename Visitor>
void for_each_companion_multiset(std::span<const double> policy, std::size_t m, Visitor&& visit) {
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < policy.size(); ++i) {
    if (policy[i] > 0.0) support.push_back(i);
  }
  if (support.empty()) throw ValidationError("companion policy has empty support");
  const double count = multiset_count(support.size(), m);
  if (count > kMaxCompanionMultisets) {
    throw EnumerationLimitError(concat("exact enumeration needs ", format_number(count),
                                       " companion multisets (limit ",
                                       format_number(kMaxCompanionMultisets), "); use Monte Carlo"));
  }

  // log m! for multinomial coefficients
  std::vector<double> log_factorial(m + 1, 0.0);
  for (std::size_t k = 1; k <= m; ++k) log_factorial[k] = log_factorial[k - 1] + std::log(double(k));

  // Nondecreasing index sequences over the support enumerate multisets once each.
  std::vector<std::size_t> pick(m, 0);
  std::vector<std::size_t> companions(m);
  while (true) {
    double log_w = log_factorial[m];
    std::size_t run = 0;
    for (std::size_t k = 0; k < m; ++k) {
      companions[k] = support[pick[k]];
      log_w += std::log(policy[companions[k]]);
      ++run;
      if (k + 1 == m || pick[k + 1] != pick[k]) {
        log_w -= log_factorial[run];
        run = 0;
      }
    }
    visit(std::span<const std::size_t>(companions), std::exp(log_w));

    // advance
    std::size_t k = m;
    while (k > 0 && pick[k - 1] + 1 == support.size()) --k;
    if (k == 0) break;
    const std::size_t next = pick[k - 1] + 1;
    for (std::size_t j = k - 1; j < m; ++j) pick[j] = next;
  }
}

}  // namespace detail

/// Exact P_G(o | policy) for every output o of the context at once, sharing the
/// companion enumeration.
inline std::vector<double> expected_group_preferences(std::span<const double> policy,
                                                      const ContextSpec& context, int group_size,
                                                      Normalisation mode) {
  if (group_size < 2) throw ValidationError(detail::concat("group_size ", group_size, " < 2"));
  validate_distribution(policy, context);
  const std::size_t n = context.size();
  std::vector<double> prefs(n, 0.0);
  detail::for_each_companion_multiset(
      policy, static_cast<std::size_t>(group_size - 1),
      [&](std::span<const std::size_t> companions, double weight) {
        for (std::size_t o = 0; o < n; ++o) {
          prefs[o] += weight * group_preference(o, companions, context, mode);
        }
      });
  return prefs;
}

inline PreferenceEstimate expected_group_preference(const GroupPreferenceQuery& q,
                                                    const ContextSpec& context, Normalisation mode) {
  if (q.group_size < 2) throw ValidationError(detail::concat("group_size ", q.group_size, " < 2"));
  if (q.target >= context.size()) throw ValidationError("target output out of range");
  validate_distribution(q.policy, context);

  if (std::holds_alternative<ExactMethod>(q.method)) {
    double value = 0.0;
    detail::for_each_companion_multiset(
        q.policy, static_cast<std::size_t>(q.group_size - 1),
        [&](std::span<const std::size_t> companions, double weight) {
          value += weight * group_preference(q.target, companions, context, mode);
        });
    return {value, 0.0};
  }

  // Monte Carlo: draw companions and every reward, evaluate the first advantage.
  const auto& mc = std::get<MonteCarloMethod>(q.method);
  if (mc.samples < 1) throw ValidationError("monte carlo needs at least one sample");
  std::mt19937_64 rng(mc.seed);
  const std::size_t g = static_cast<std::size_t>(q.group_size);
  std::vector<double> rewards(g);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < mc.samples; ++s) {
    rewards[0] = context.outputs[q.target].reward.draw(rng);
    for (std::size_t i = 1; i < g; ++i) {
      const std::size_t o = sample_index(q.policy, rng);
      rewards[i] = context.outputs[o].reward.draw(rng);
    }
    const double a = detail::advantage_at(rewards, 0, mode);
    sum += a;
    sum_sq += a * a;
  }
  const double n = static_cast<double>(mc.samples);
  const double mean = sum / n;
  const double var = mc.samples > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

// -----------------------------------------------------------------------------
// Large-group limit

struct RewardMoments {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean and standard deviation of the reward of an output drawn from pi,
/// including per-output reward noise (law of total variance).
inline RewardMoments reward_moments(std::span<const double> pi, const ContextSpec& context) {
  validate_distribution(pi, context);
  double first = std::numeric_limits<double>::quiet_NaN();
  bool constant_mean = true;
  double mean = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] <= 0.0) continue;
    const double r = context.outputs[i].reward.mean();
    if (std::isnan(first)) first = r;
    if (r != first) constant_mean = false;
    mean += pi[i] * r;
  }
  // Keep exact ties exact so the limit preference is exactly zero.
  if (constant_mean) mean = first;
  double var = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] <= 0.0) continue;
    const double d = context.outputs[i].reward.mean() - mean;
    var += pi[i] * (context.outputs[i].reward.variance() + d * d);
  }
  return {mean, std::sqrt(var)};
}

/// Large-group preference of output o against pi: (r(o) - E r)/sigma under
/// shift_scale, r(o) - E r under shift_only; zero when sigma is zero.
inline double limit_preference(std::size_t o, std::span<const double> pi, const ContextSpec& context,
                               Normalisation mode = Normalisation::shift_scale) {
  const RewardMoments m = reward_moments(pi, context);
  const double diff = context.outputs.at(o).reward.mean() - m.mean;
  if (mode == Normalisation::shift_only) return diff;
  if (m.stddev == 0.0) return 0.0;
  return diff / m.stddev;
}

inline std::vector<double> limit_preferences(std::span<const double> pi, const ContextSpec& context,
                                             Normalisation mode = Normalisation::shift_scale) {
  const RewardMoments m = reward_moments(pi, context);
  std::vector<double> prefs(context.size(), 0.0);
  for (std::size_t o = 0; o < context.size(); ++o) {
    const double diff = context.outputs[o].reward.mean() - m.mean;
    if (mode == Normalisation::shift_only) {
      prefs[o] = diff;
    } else if (m.stddev > 0.0) {
      prefs[o] = diff / m.stddev;
    }
  }
  return prefs;
}

/// P_G(o | pi) for every output under the given group size, exact for finite G.
inline std::vector<double> preference_vector(std::span<const double> pi, const ContextSpec& context,
                                             GroupSize group_size, Normalisation mode) {
  if (group_size.is_limit()) return limit_preferences(pi, context, mode);
  return expected_group_preferences(pi, context, group_size.size(), mode);
}

/// As above, but with an explicit estimation method for finite G.
inline std::vector<double> preference_vector(std::span<const double> pi, const ContextSpec& context,
                                             GroupSize group_size, Normalisation mode,
                                             const PreferenceMethod& method) {
  if (group_size.is_limit() || std::holds_alternative<ExactMethod>(method)) {
    return preference_vector(pi, context, group_size, mode);
  }
  std::vector<double> prefs(context.size());
  for (std::size_t o = 0; o < context.size(); ++o) {
    GroupPreferenceQuery q{o, Distribution(pi.begin(), pi.end()), group_size.size(), method};
    prefs[o] = expected_group_preference(q, context, mode).value;
  }
  return prefs;
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_PREFERENCE_HPP_
