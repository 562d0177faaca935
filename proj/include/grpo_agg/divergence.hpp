#ifndef GRPO_AGG_DIVERGENCE_HPP_
#define GRPO_AGG_DIVERGENCE_HPP_

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "grpo_agg/core.hpp"

// Reference-policy divergences and their gradients with respect to raw
// probabilities. Callers keep iterates on the simplex.

namespace grpo_agg {

namespace detail {

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError(concat("distribution lengths differ: ", a.size(), " vs ", b.size()));
  }
}

inline SupportError support_violation(const char* what, std::size_t index) {
  return SupportError(concat(what, " (index ", index, ")"));
}

}  // namespace detail

/// E_{x~pi_old}[ref/pi - log(ref/pi) - 1]: the expected per-sample penalty of
/// the group objective. Requires supp(pi_old) in supp(pi) in supp(ref).
inline double kl0(std::span<const double> pi, std::span<const double> ref,
                  std::span<const double> pi_old) {
  detail::require_same_length(pi, ref);
  detail::require_same_length(pi, pi_old);
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] > 0.0 && ref[i] <= 0.0) throw detail::support_violation("pi outside ref support", i);
    if (pi_old[i] <= 0.0) continue;
    if (pi[i] <= 0.0) throw detail::support_violation("pi_old outside pi support", i);
    const double x = ref[i] / pi[i];
    total += pi_old[i] * (x - std::log(x) - 1.0);
  }
  return std::max(total, 0.0);
}

/// KL(pi || ref).
inline double kl(std::span<const double> pi, std::span<const double> ref) {
  detail::require_same_length(pi, ref);
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] <= 0.0) continue;
    if (ref[i] <= 0.0) throw detail::support_violation("pi outside ref support", i);
    total += pi[i] * std::log(pi[i] / ref[i]);
  }
  return std::max(total, 0.0);
}

/// KL(ref || pi). Returns +infinity when pi misses part of ref's support.
inline double reverse_kl(std::span<const double> pi, std::span<const double> ref) {
  detail::require_same_length(pi, ref);
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (ref[i] <= 0.0) continue;
    if (pi[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += ref[i] * std::log(ref[i] / pi[i]);
  }
  return std::max(total, 0.0);
}

/// d kl0 / d pi(o) = -pi_old ref / pi^2 + pi_old / pi. Zero where pi_old is zero.
inline std::vector<double> kl0_grad(std::span<const double> pi, std::span<const double> ref,
                                    std::span<const double> pi_old) {
  detail::require_same_length(pi, ref);
  detail::require_same_length(pi, pi_old);
  std::vector<double> g(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi_old[i] <= 0.0) continue;
    if (pi[i] <= 0.0) throw detail::support_violation("kl0 gradient divides by zero", i);
    if (ref[i] <= 0.0 && pi[i] > 0.0) throw detail::support_violation("pi outside ref support", i);
    g[i] = -pi_old[i] * ref[i] / (pi[i] * pi[i]) + pi_old[i] / pi[i];
  }
  return g;
}

/// d KL(pi||ref) / d pi(o) = log(pi/ref) + 1 on the reference support.
inline std::vector<double> kl_grad(std::span<const double> pi, std::span<const double> ref) {
  detail::require_same_length(pi, ref);
  std::vector<double> g(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (ref[i] <= 0.0) {
      if (pi[i] > 0.0) throw detail::support_violation("pi outside ref support", i);
      continue;
    }
    if (pi[i] <= 0.0) throw detail::support_violation("kl gradient takes log of zero", i);
    g[i] = std::log(pi[i] / ref[i]) + 1.0;
  }
  return g;
}

/// d KL(ref||pi) / d pi(o) = -ref/pi.
inline std::vector<double> reverse_kl_grad(std::span<const double> pi, std::span<const double> ref) {
  detail::require_same_length(pi, ref);
  std::vector<double> g(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (ref[i] <= 0.0) continue;
    if (pi[i] <= 0.0) throw detail::support_violation("reverse kl gradient divides by zero", i);
    g[i] = -ref[i] / pi[i];
  }
  return g;
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_DIVERGENCE_HPP_
