#ifndef GRPO_AGG_TRAINER_HPP_
#define GRPO_AGG_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "grpo_agg/core.hpp"
#include "grpo_agg/preference.hpp"

// Sampled tabular GRPO: per-context softmax logits trained on the clipped
// group surrogate with the per-sample reference penalty.

namespace grpo_agg {

/// Raised when a probability on the reference support underflows.
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

/// Probabilities below this on the reference support abort training.
inline constexpr double kProbabilityFloor = 1e-12;

struct TrainerConfig {
  double epsilon = 0.2;
  double learning_rate = 0.05;
  std::size_t steps = 20000;
  std::size_t groups_per_step = 8;
  std::size_t inner_updates_per_old_policy = 1;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 100;  // 0: final step only
};

struct Checkpoint {
  std::size_t step = 0;
  PolicyTable policy;
  double objective_estimate = 0.0;  // mean sampled surrogate at the old policy
  std::optional<double> distance_to_target;
};

struct TrainTrace {
  std::vector<Checkpoint> checkpoints;
  std::size_t clipped_samples = 0;
  std::size_t total_samples = 0;
  double max_advantage_sum = 0.0;  // largest |sum_i A_i| over all groups

  double clipped_fraction() const {
    return total_samples == 0 ? 0.0 : static_cast<double>(clipped_samples) / static_cast<double>(total_samples);
  }
};

/// Softmax over the reference support; zero elsewhere.
inline Distribution softmax(std::span<const double> logits, std::span<const double> ref) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (ref[i] > 0.0) top = std::max(top, logits[i]);
  }
  Distribution p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (ref[i] <= 0.0) continue;
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

/// One sampled group: output indices and their observed rewards.
struct SampledGroup {
  std::vector<std::size_t> outputs;
  std::vector<double> rewards;
};

struct SurrogateGradient {
  std::vector<double> logits;  // d/d logits of (1/G) sum_i (clipped ratio term - beta D_i)
  double value = 0.0;
  std::size_t clipped = 0;
};

/// Gradient of one group's surrogate with respect to the logits.
inline SurrogateGradient group_surrogate_gradient(std::span<const double> pi, std::span<const double> pi_old,
                                                  std::span<const double> ref, const SampledGroup& group,
                                                  std::span<const double> advantage, double beta,
                                                  double epsilon, Penalty penalty) {
  const std::size_t n = pi.size();
  const double inv_g = 1.0 / static_cast<double>(group.outputs.size());
  SurrogateGradient out;
  out.logits.assign(n, 0.0);
  for (std::size_t s = 0; s < group.outputs.size(); ++s) {
    const std::size_t o = group.outputs[s];
    const double a = advantage[s];
    const double ratio = pi[o] / pi_old[o];
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    const double unclipped_term = ratio * a;
    const double clipped_term = clipped * a;

    // d value / d pi(o), then through softmax: d pi(o)/d theta_k = pi(o)(delta - pi(k)).
    double d_pi = 0.0;
    double value = std::min(unclipped_term, clipped_term);
    if (unclipped_term <= clipped_term) {
      d_pi += a / pi_old[o];
    } else {
      ++out.clipped;
    }
    const double x = ref[o] / pi[o];
    if (penalty == Penalty::kl0) {
      value -= beta * (x - std::log(x) - 1.0);
      d_pi -= beta * (1.0 / pi[o] - ref[o] / (pi[o] * pi[o]));
    } else {
      value -= beta * ratio * (x - std::log(x) - 1.0);
      d_pi -= beta * std::log(pi[o] / ref[o]) / pi_old[o];
    }
    out.value += inv_g * value;
    for (std::size_t k = 0; k < n; ++k) {
      out.logits[k] += inv_g * d_pi * pi[o] * ((k == o ? 1.0 : 0.0) - pi[k]);
    }
  }
  return out;
}

/// Draws a group of G outputs from pi_old with fresh reward draws.
inline SampledGroup sample_group(std::span<const double> pi_old, const ContextSpec& context, int group_size,
                                 std::mt19937_64& rng) {
  SampledGroup g;
  g.outputs.resize(group_size);
  g.rewards.resize(group_size);
  for (int i = 0; i < group_size; ++i) {
    g.outputs[i] = sample_index(pi_old, rng);
    g.rewards[i] = context.outputs[g.outputs[i]].reward.draw(rng);
  }
  return g;
}

/// Runs the sampled training loop. Deterministic given cfg.seed. Starts from
/// `initial` when given, otherwise from the reference policy.
inline TrainTrace train(const Scenario& scenario, const TrainerConfig& cfg,
                        const std::optional<PolicyTable>& target = std::nullopt,
                        const std::optional<PolicyTable>& initial = std::nullopt) {
  validate(scenario);
  const Hyperparams& h = scenario.hyper;
  if (h.group_size.is_limit()) throw ValidationError("training needs a finite group_size");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (cfg.steps < 1) throw ValidationError("steps must be at least 1");
  if (cfg.groups_per_step < 1) throw ValidationError("groups_per_step must be at least 1");
  if (cfg.inner_updates_per_old_policy < 1) throw ValidationError("inner_updates_per_old_policy must be at least 1");
  if (target) validate_policy(*target, scenario);

  const std::size_t num_contexts = scenario.contexts.size();
  std::vector<Distribution> refs;
  std::vector<std::vector<double>> logits;
  const PolicyTable start = initial ? *initial : reference_policy(scenario);
  validate_policy(start, scenario);
  for (std::size_t k = 0; k < num_contexts; ++k) {
    refs.push_back(scenario.contexts[k].reference());
    std::vector<double> theta(refs[k].size(), 0.0);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (refs[k][i] <= 0.0) continue;
      if (start[k][i] <= 0.0) throw ValidationError("initial policy must cover the reference support");
      theta[i] = std::log(start[k][i]);
    }
    logits.push_back(std::move(theta));
  }
  std::vector<double> weights;
  for (const auto& c : scenario.contexts) weights.push_back(c.weight);

  auto snapshot = [&] {
    PolicyTable p;
    for (std::size_t k = 0; k < num_contexts; ++k) p.push_back(softmax(logits[k], refs[k]));
    return p;
  };

  std::mt19937_64 rng(cfg.seed);
  TrainTrace trace;
  const int G = h.group_size.size();
  double objective_sum = 0.0;
  std::size_t objective_count = 0;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const std::size_t k = sample_index(weights, rng);
    const ContextSpec& context = scenario.contexts[k];
    const Distribution pi_old = softmax(logits[k], refs[k]);

    std::vector<SampledGroup> groups;
    std::vector<std::vector<double>> advs;
    for (std::size_t b = 0; b < cfg.groups_per_step; ++b) {
      groups.push_back(sample_group(pi_old, context, G, rng));
      advs.push_back(advantages(groups.back().rewards, h.normalisation));
      double sum = 0.0;
      for (double a : advs.back()) sum += a;
      trace.max_advantage_sum = std::max(trace.max_advantage_sum, std::abs(sum));
    }

    for (std::size_t u = 0; u < cfg.inner_updates_per_old_policy; ++u) {
      const Distribution pi = softmax(logits[k], refs[k]);
      std::vector<double> grad(pi.size(), 0.0);
      double value = 0.0;
      for (std::size_t b = 0; b < groups.size(); ++b) {
        const auto g = group_surrogate_gradient(pi, pi_old, refs[k], groups[b], advs[b], h.beta,
                                                cfg.epsilon, h.penalty);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g.logits[i];
        value += g.value;
        trace.clipped_samples += g.clipped;
        trace.total_samples += groups[b].outputs.size();
      }
      const double scale = cfg.learning_rate / static_cast<double>(groups.size());
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (refs[k][i] > 0.0) logits[k][i] += scale * grad[i];
      }
      if (u == 0) {
        objective_sum += value / static_cast<double>(groups.size());
        ++objective_count;
      }
    }

    const Distribution updated = softmax(logits[k], refs[k]);
    for (std::size_t i = 0; i < updated.size(); ++i) {
      if (refs[k][i] > 0.0 && !(updated[i] >= kProbabilityFloor)) {
        throw TrainingDivergedError(detail::concat("step ", step, ": probability of output '",
                                                   context.outputs[i].id, "' in context '", context.id,
                                                   "' fell to ", detail::format_number(updated[i])));
      }
    }

    const bool checkpoint = step == cfg.steps || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0);
    if (checkpoint) {
      Checkpoint c;
      c.step = step;
      c.policy = snapshot();
      c.objective_estimate = objective_count ? objective_sum / static_cast<double>(objective_count) : 0.0;
      objective_sum = 0.0;
      objective_count = 0;
      if (target) {
        double d = 0.0;
        for (std::size_t j = 0; j < num_contexts; ++j) d = std::max(d, sup_distance(c.policy[j], (*target)[j]));
        c.distance_to_target = d;
      }
      trace.checkpoints.push_back(std::move(c));
    }
  }
  return trace;
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_TRAINER_HPP_
