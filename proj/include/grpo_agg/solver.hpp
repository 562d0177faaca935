#ifndef GRPO_AGG_SOLVER_HPP_
#define GRPO_AGG_SOLVER_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "grpo_agg/core.hpp"
#include "grpo_agg/divergence.hpp"
#include "grpo_agg/preference.hpp"

namespace grpo_agg {

/// The three knobs that select a stationary condition.
struct Variant {
  Penalty penalty = Penalty::kl0;
  Normalisation normalisation = Normalisation::shift_scale;
  GroupSize group_size = GroupSize::finite(2);

  static Variant of(const Hyperparams& h) { return {h.penalty, h.normalisation, h.group_size}; }

  friend bool operator==(const Variant&, const Variant&) = default;
};

inline std::string to_string(const Variant& v) {
  return detail::concat(to_string(v.penalty), "/", to_string(v.normalisation), "/G=",
                        to_string(v.group_size));
}

struct SolverConfig {
  double damping = 0.5;
  std::size_t max_iterations = 100000;
  double tolerance = 1e-10;  // on the stationarity residual
  PreferenceMethod preference_method = ExactMethod{};
  std::optional<Distribution> initial;  // defaults to the reference policy
};

struct SolveResult {
  Distribution pi;
  double kkt_residual = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // sup-norm step sizes
  double mean_preference = 0.0;  // E_{o~pi}[P_G(o|pi)] at the returned point
};

/// Steps whose pooling denominators fall below this are taken with half damping.
inline constexpr double kDenominatorGuard = 1e-9;

// -----------------------------------------------------------------------------
// Objective and stationarity

/// Reference penalty of the variant: kl0 against pi_old, or KL(pi||ref).
inline double penalty_value(std::span<const double> pi, std::span<const double> ref,
                            std::span<const double> pi_old, Penalty penalty) {
  return penalty == Penalty::kl0 ? kl0(pi, ref, pi_old) : kl(pi, ref);
}

/// Per-context objective without clipping:
/// E_{o~pi}[P_G(o|pi_old)] - beta * penalty(pi, ref; pi_old).
inline double objective(std::span<const double> pi, std::span<const double> pi_old,
                        const ContextSpec& context, const Hyperparams& hyper) {
  validate_distribution(pi, context);
  const auto prefs = preference_vector(pi_old, context, hyper.group_size, hyper.normalisation);
  double reward = 0.0;
  for (std::size_t o = 0; o < pi.size(); ++o) reward += pi[o] * prefs[o];
  const Distribution ref = context.reference();
  return reward - hyper.beta * penalty_value(pi, ref, pi_old, hyper.penalty);
}

namespace detail {

inline double mean_under(std::span<const double> pi, std::span<const double> values) {
  double m = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] > 0.0) m += pi[i] * values[i];
  }
  return m;
}

/// Log-pool weights ref * exp(x/beta), normalised, with the max subtracted.
inline Distribution log_pool(std::span<const double> ref, std::span<const double> x, double beta) {
  double x_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] > 0.0) x_max = std::max(x_max, x[i]);
  }
  Distribution u(ref.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] <= 0.0) continue;
    u[i] = ref[i] * std::exp((x[i] - x_max) / beta);
    z += u[i];
  }
  for (double& v : u) v /= z;
  return u;
}

/// Residual of the stationary condition for given preferences P(o|pi).
inline double stationarity_residual(std::span<const double> pi, std::span<const double> prefs,
                                    std::span<const double> ref, double beta, Penalty penalty) {
  double r = 0.0;
  if (penalty == Penalty::direct_kl) {
    const Distribution target = log_pool(ref, prefs, beta);
    for (std::size_t o = 0; o < pi.size(); ++o) r = std::max(r, std::abs(pi[o] - target[o]));
    return r;
  }
  const double mean_pref = mean_under(pi, prefs);
  for (std::size_t o = 0; o < pi.size(); ++o) {
    if (ref[o] <= 0.0) {
      r = std::max(r, pi[o]);
      continue;
    }
    r = std::max(r, std::abs((1.0 - (prefs[o] - mean_pref) / beta) * pi[o] - ref[o]));
  }
  return r;
}

struct PoolingStep {
  Distribution target;
  double min_denominator = 1.0;
};

/// g-pooling target ref(o) / (1 - (P(o) - lambda)/beta), where lambda is the
/// multiplier that makes the target sum to one. At a fixed point lambda equals
/// E_{o~pi}[P(o)], recovering the stationary condition.
inline PoolingStep g_pool(std::span<const double> ref, std::span<const double> prefs, double beta) {
  const std::size_t n = ref.size();
  std::size_t top = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (ref[i] > 0.0 && (top == n || prefs[i] > prefs[top])) top = i;
  }
  std::vector<double> gap(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) gap[i] = prefs[top] - prefs[i];

  // Solve f(t) = beta * sum ref/(t + gap) = 1 for t in (0, beta]; f is convex
  // and decreasing, so Newton from the left end increases monotonically.
  auto f = [&](double t, double* df) {
    double v = 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ref[i] <= 0.0) continue;
      const double w = 1.0 / (t + gap[i]);
      v += ref[i] * w;
      d -= ref[i] * w * w;
    }
    *df = beta * d;
    return beta * v - 1.0;
  };
  double t = beta * ref[top];
  for (int iter = 0; iter < 200; ++iter) {
    double df = 0.0;
    const double fv = f(t, &df);
    if (fv <= 0.0) break;
    const double next = std::min(t - fv / df, beta);
    if (!(next > t)) break;
    if (next - t <= 1e-17 * t) {
      t = next;
      break;
    }
    t = next;
  }

  PoolingStep step;
  step.target.assign(n, 0.0);
  step.min_denominator = std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ref[i] <= 0.0) continue;
    const double denom = (t + gap[i]) / beta;
    step.min_denominator = std::min(step.min_denominator, denom);
    step.target[i] = ref[i] / denom;
    z += step.target[i];
  }
  for (double& v : step.target) v /= z;
  return step;
}

inline void check_config(const SolverConfig& cfg) {
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw ValidationError("damping must lie in (0,1]");
  if (!(cfg.tolerance > 0.0)) throw ValidationError("tolerance must be positive");
  if (cfg.max_iterations < 1) throw ValidationError("max_iterations must be positive");
}

inline void renormalise(Distribution& pi) {
  double z = 0.0;
  for (double v : pi) z += v;
  for (double& v : pi) v /= z;
}

}  // namespace detail

/// Violation of the stationary condition at pi for the variant in `hyper`.
/// kl0 penalty: max_o |(1 - (P(o|pi) - E P)/beta) pi(o) - ref(o)|.
/// direct_kl penalty: max_o |pi(o) - ref(o) exp(P(o|pi)/beta) / Z|.
inline double kkt_residual(std::span<const double> pi, const ContextSpec& context,
                           const Hyperparams& hyper) {
  validate_distribution(pi, context);
  const auto prefs = preference_vector(pi, context, hyper.group_size, hyper.normalisation);
  return detail::stationarity_residual(pi, prefs, context.reference(), hyper.beta, hyper.penalty);
}

/// Damped fixed-point iteration on the stationary condition, started from the
/// reference policy unless cfg.initial is set. Each step pools the reference
/// with the current preferences (g-pooling for kl0, log-pooling for direct_kl)
/// and moves a `damping` fraction of the way there.
inline SolveResult solve_stationary(const ContextSpec& context, const Hyperparams& hyper,
                                    const SolverConfig& cfg = {}) {
  validate(context);
  validate(hyper);
  detail::check_config(cfg);
  const Distribution ref = context.reference();
  Distribution pi = cfg.initial ? *cfg.initial : ref;
  validate_distribution(pi, context);

  SolveResult result;
  Distribution best = pi;
  double best_residual = std::numeric_limits<double>::infinity();
  double best_mean = 0.0;

  for (std::size_t it = 0;; ++it) {
    const auto prefs = preference_vector(pi, context, hyper.group_size, hyper.normalisation,
                                         cfg.preference_method);
    const double residual =
        detail::stationarity_residual(pi, prefs, ref, hyper.beta, hyper.penalty);
    const double mean_pref = detail::mean_under(pi, prefs);
    if (residual < best_residual) {
      best_residual = residual;
      best = pi;
      best_mean = mean_pref;
    }
    if (residual <= cfg.tolerance) {
      result.converged = true;
      result.iterations = it;
      break;
    }
    if (it == cfg.max_iterations) {
      result.iterations = it;
      break;
    }

    double damping = cfg.damping;
    Distribution target;
    if (hyper.penalty == Penalty::kl0) {
      auto step = detail::g_pool(ref, prefs, hyper.beta);
      if (step.min_denominator <= kDenominatorGuard) damping *= 0.5;
      target = std::move(step.target);
    } else {
      target = detail::log_pool(ref, prefs, hyper.beta);
    }
    Distribution next(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) next[i] = (1.0 - damping) * pi[i] + damping * target[i];
    detail::renormalise(next);
    const double delta = sup_distance(next, pi);
    result.trace.push_back(delta);
    pi = std::move(next);
    if (delta == 0.0) {
      result.iterations = it + 1;
      break;
    }
  }
  result.pi = std::move(best);
  result.kkt_residual = best_residual;
  result.mean_preference = best_mean;
  return result;
}

/// A stationary point reached from one start, with its self-consistent objective.
struct StationaryPoint {
  SolveResult result;
  double objective = 0.0;
  std::size_t start = 0;
};

/// Runs the solver from the reference policy and from one vertex-biased start
/// per supported output; returns distinct limits ordered by objective value.
inline std::vector<StationaryPoint> solve_multistart(const ContextSpec& context,
                                                     const Hyperparams& hyper,
                                                     const SolverConfig& cfg = {},
                                                     double distinct_tolerance = 1e-6) {
  const Distribution ref = context.reference();
  std::vector<Distribution> starts{ref};
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (ref[k] <= 0.0) continue;
    Distribution s(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) s[i] = 0.1 * ref[i] + (i == k ? 0.9 : 0.0);
    starts.push_back(std::move(s));
  }

  std::vector<StationaryPoint> points;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    SolverConfig c = cfg;
    c.initial = starts[k];
    SolveResult r = solve_stationary(context, hyper, c);
    const bool seen = std::any_of(points.begin(), points.end(), [&](const StationaryPoint& p) {
      return sup_distance(p.result.pi, r.pi) <= distinct_tolerance;
    });
    if (seen) continue;
    const double value = objective(r.pi, r.pi, context, hyper);
    points.push_back({std::move(r), value, k});
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const StationaryPoint& a, const StationaryPoint& b) {
                     return a.objective > b.objective;
                   });
  return points;
}

// -----------------------------------------------------------------------------
// Baseline aggregators

/// RLHF aggregate: pi(o) proportional to ref(o) exp(r(o)/beta).
inline Distribution rlhf_aggregate(const ContextSpec& context, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  validate(context);
  return detail::log_pool(context.reference(), context.expected_rewards(), beta);
}

/// NLHF equilibrium: pi(o) proportional to ref(o) exp(E_{o'~pi}[P(o > o')]/beta),
/// found by damped fixed-point iteration. kkt_residual holds the sup-norm
/// violation of that condition.
inline SolveResult nlhf_aggregate(const ContextSpec& context, double beta,
                                  const SolverConfig& cfg = {}) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  validate(context);
  detail::check_config(cfg);
  const std::size_t n = context.size();
  std::vector<double> pairwise(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) pairwise[a * n + b] = pairwise_preference(a, b, context);
  }
  const Distribution ref = context.reference();
  Distribution pi = cfg.initial ? *cfg.initial : ref;
  validate_distribution(pi, context);

  auto target_of = [&](const Distribution& p) {
    std::vector<double> win(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) win[a] += p[b] * pairwise[a * n + b];
    }
    return detail::log_pool(ref, win, beta);
  };

  SolveResult result;
  for (std::size_t it = 0;; ++it) {
    const Distribution target = target_of(pi);
    const double residual = sup_distance(pi, target);
    result.kkt_residual = residual;
    if (residual <= cfg.tolerance) {
      result.converged = true;
      result.iterations = it;
      break;
    }
    if (it == cfg.max_iterations) {
      result.iterations = it;
      break;
    }
    Distribution next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = (1.0 - cfg.damping) * pi[i] + cfg.damping * target[i];
    detail::renormalise(next);
    result.trace.push_back(sup_distance(next, pi));
    pi = std::move(next);
  }
  result.pi = std::move(pi);
  return result;
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_SOLVER_HPP_
