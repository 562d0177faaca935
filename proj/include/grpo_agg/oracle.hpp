#ifndef GRPO_AGG_ORACLE_HPP_
#define GRPO_AGG_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "grpo_agg/core.hpp"
#include "grpo_agg/divergence.hpp"
#include "grpo_agg/preference.hpp"
#include "grpo_agg/solver.hpp"

// Brute-force path to stationary policies: maximise the objective against a
// frozen old policy (best response), then iterate best responses. Shares no
// code with the solver's pooling map.

namespace grpo_agg {

struct GridSearch {
  std::size_t resolution = 200;
};

struct ProjectedAscent {
  double step = 0.1;
  std::size_t iters = 50000;
};

struct OracleConfig {
  std::variant<GridSearch, ProjectedAscent> method = ProjectedAscent{};
  std::size_t outer_iterations = 1000;
  double tolerance = 1e-9;
};

struct OracleResult {
  Distribution pi;
  std::vector<double> trace;  // sup-norm change per best response
  bool converged = false;
  double kkt_residual = 0.0;
  std::size_t cycle_length = 0;  // nonzero when the iteration revisits an earlier point
};

/// Largest number of outputs accepted by the grid method.
inline constexpr std::size_t kMaxGridOutputs = 5;

namespace detail {

/// Objective against a fixed old policy with its preferences precomputed;
/// -infinity where the penalty is infinite.
class FrozenObjective {
 public:
  FrozenObjective(std::span<const double> pi_old, const ContextSpec& context, const Hyperparams& hyper)
      : pi_old_(pi_old.begin(), pi_old.end()),
        ref_(context.reference()),
        prefs_(preference_vector(pi_old, context, hyper.group_size, hyper.normalisation)),
        beta_(hyper.beta),
        penalty_(hyper.penalty) {}

  double operator()(std::span<const double> pi) const {
    double reward = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (penalty_ == Penalty::kl0 && pi_old_[i] > 0.0 && pi[i] <= 0.0) {
        return -std::numeric_limits<double>::infinity();
      }
      reward += pi[i] * prefs_[i];
    }
    return reward - beta_ * penalty_value(pi, ref_, pi_old_, penalty_);
  }

  std::vector<double> gradient(std::span<const double> pi) const {
    std::vector<double> g = penalty_ == Penalty::kl0 ? kl0_grad(pi, ref_, pi_old_) : kl_grad(pi, ref_);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = prefs_[i] - beta_ * g[i];
    return g;
  }

  std::span<const double> reference() const { return ref_; }

 private:
  Distribution pi_old_;
  Distribution ref_;
  std::vector<double> prefs_;
  double beta_;
  Penalty penalty_;
};

/// Euclidean projection of y onto {x : x_i >= floor on `active`, x_i = 0 off
/// it, sum x = 1}.
inline Distribution project_to_simplex(std::span<const double> y, std::span<const std::size_t> active,
                                       double floor) {
  const std::size_t k = active.size();
  const double mass = 1.0 - floor * static_cast<double>(k);
  std::vector<double> v(k);
  for (std::size_t j = 0; j < k; ++j) v[j] = y[active[j]] - floor;
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    cumulative += sorted[j];
    const double t = (cumulative - mass) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) theta = t;
  }
  Distribution x(y.size(), 0.0);
  for (std::size_t j = 0; j < k; ++j) x[active[j]] = std::max(v[j] - theta, 0.0) + floor;
  return x;
}

inline std::vector<std::size_t> support_of(std::span<const double> ref) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] > 0.0) s.push_back(i);
  }
  return s;
}

inline Distribution grid_best_response(const FrozenObjective& J, std::size_t n, std::size_t resolution) {
  const auto active = support_of(J.reference());
  const std::size_t k = active.size();
  Distribution best;
  double best_value = -std::numeric_limits<double>::infinity();
  Distribution x(n, 0.0);
  std::vector<std::size_t> counts(k, 0);

  // Compositions of `resolution` into k parts, last part implied.
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t j, std::size_t left) {
    if (j + 1 == k) {
      counts[j] = left;
      for (std::size_t m = 0; m < k; ++m) {
        x[active[m]] = static_cast<double>(counts[m]) / static_cast<double>(resolution);
      }
      const double v = J(x);
      if (v > best_value) {
        best_value = v;
        best = x;
      }
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      counts[j] = c;
      walk(j + 1, left - c);
    }
  };
  walk(0, resolution);
  if (best.empty()) throw ValidationError("grid search found no point with finite objective");
  return best;
}

inline Distribution ascent_best_response(const FrozenObjective& J, std::span<const double> pi_old,
                                         const ProjectedAscent& cfg) {
  constexpr double kFloor = 1e-13;
  const auto active = support_of(J.reference());
  const Distribution ref(J.reference().begin(), J.reference().end());

  // Start from whichever of pi_old and ref scores higher.
  Distribution x = project_to_simplex(pi_old, active, kFloor);
  {
    const Distribution r = project_to_simplex(ref, active, kFloor);
    if (J(r) > J(x)) x = r;
  }
  double value = J(x);
  double step = cfg.step;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const auto g = J.gradient(x);
    Distribution y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + step * g[i];
    y = project_to_simplex(y, active, kFloor);
    const double candidate = J(y);
    if (candidate >= value) {
      const double move = sup_distance(x, y);
      x = std::move(y);
      value = candidate;
      step = std::min(step * 1.5, 1e6);
      if (move <= 1e-15) break;
    } else {
      step *= 0.5;
      if (step < 1e-30) break;
    }
  }
  return x;
}

}  // namespace detail

/// Argmax over the simplex of objective(., pi_old) by lattice enumeration or
/// projected gradient ascent.
inline Distribution best_response(std::span<const double> pi_old, const ContextSpec& context,
                                  const Hyperparams& hyper, const OracleConfig& cfg) {
  validate(context);
  validate(hyper);
  validate_distribution(pi_old, context);
  const detail::FrozenObjective J(pi_old, context, hyper);
  if (const auto* grid = std::get_if<GridSearch>(&cfg.method)) {
    if (context.size() > kMaxGridOutputs) {
      throw ValidationError(detail::concat("grid oracle supports at most ", kMaxGridOutputs,
                                           " outputs, context '", context.id, "' has ",
                                           context.size()));
    }
    if (grid->resolution < 1) throw ValidationError("grid resolution must be positive");
    return detail::grid_best_response(J, context.size(), grid->resolution);
  }
  return detail::ascent_best_response(J, pi_old, std::get<ProjectedAscent>(cfg.method));
}

/// Best-response iteration from the reference policy.
inline OracleResult oracle_stationary(const ContextSpec& context, const Hyperparams& hyper,
                                      const OracleConfig& cfg = {}) {
  OracleResult result;
  Distribution pi = context.reference();
  std::vector<Distribution> history{pi};
  for (std::size_t t = 0; t < cfg.outer_iterations; ++t) {
    Distribution next = best_response(pi, context, hyper, cfg);
    const double delta = sup_distance(next, pi);
    result.trace.push_back(delta);
    pi = std::move(next);
    if (delta <= cfg.tolerance) {
      result.converged = true;
      break;
    }
    // Revisiting a point other than the previous one means a cycle.
    const std::size_t lookback = std::min<std::size_t>(history.size(), 16);
    for (std::size_t back = 2; back <= lookback; ++back) {
      if (sup_distance(history[history.size() - back], pi) <= cfg.tolerance) {
        result.cycle_length = back;
        break;
      }
    }
    history.push_back(pi);
    if (result.cycle_length != 0) break;
  }
  result.kkt_residual = kkt_residual(pi, context, hyper);
  result.pi = std::move(pi);
  return result;
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_ORACLE_HPP_
