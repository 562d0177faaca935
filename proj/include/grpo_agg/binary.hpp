#ifndef GRPO_AGG_BINARY_HPP_
#define GRPO_AGG_BINARY_HPP_

#include <cmath>
#include <numbers>
#include <vector>

#include "grpo_agg/core.hpp"

// Closed-form stationary policies for two-answer questions. Answer a is the
// (weakly) preferred one throughout: gamma >= 0, r(a) > r(b).

namespace grpo_agg {

struct BinaryQuestion {
  double pi_ref_a = 0.5;
  double gamma = 1.0;  // P(a > b) - P(b > a)
  double beta = 1.0;
};

namespace detail {

inline void check_binary(double pi_ref_a, double beta) {
  if (!(pi_ref_a >= 0.0 && pi_ref_a <= 1.0)) throw ValidationError("pi_ref_a must lie in [0,1]");
  if (!(beta >= 0.0) || std::isnan(beta)) throw ValidationError("beta must be nonnegative");
}

}  // namespace detail

/// Groups of two, kl0 penalty: the nonnegative root of
/// pi^2 - (1 - beta/gamma) pi - (beta/gamma) pi_ref = 0.
inline double binary_g2(const BinaryQuestion& q) {
  detail::check_binary(q.pi_ref_a, q.beta);
  if (!(q.gamma >= 0.0 && q.gamma <= 1.0)) {
    throw ValidationError("gamma must lie in [0,1]; swap labels so that a is preferred");
  }
  if (q.gamma == 0.0) return q.pi_ref_a;
  const double ratio = q.beta / q.gamma;
  const double b = 1.0 - ratio;
  const double root = std::sqrt(b * b + 4.0 * ratio * q.pi_ref_a);
  // Rationalised form avoids cancellation when beta/gamma is large.
  if (b >= 0.0) return 0.5 * (b + root);
  return 2.0 * ratio * q.pi_ref_a / (root - b);
}

/// Large-group limit, kl0 penalty, deterministic rewards with r(a) > r(b).
inline double binary_limit(double pi_ref_a, double beta) {
  detail::check_binary(pi_ref_a, beta);
  const double b2 = beta * beta;
  const double root = std::sqrt(1.0 + 4.0 * b2 * pi_ref_a * (1.0 - pi_ref_a));
  return (2.0 * b2 * pi_ref_a + 1.0 + root) / (2.0 * (1.0 + b2));
}

/// Groups of two, direct KL penalty: pi(a) proportional to exp(gamma/(2 beta)) pi_ref(a).
inline double binary_g2_direct_kl(const BinaryQuestion& q) {
  detail::check_binary(q.pi_ref_a, q.beta);
  if (!(q.beta > 0.0)) throw ValidationError("beta must be positive");
  if (q.pi_ref_a == 0.0) return 0.0;
  if (q.pi_ref_a == 1.0) return 1.0;
  // e^{g/2b} p / (e^{g/2b} p + e^{-g/2b}(1-p)) = p / (p + e^{-g/b}(1-p))
  return q.pi_ref_a / (q.pi_ref_a + std::exp(-q.gamma / q.beta) * (1.0 - q.pi_ref_a));
}

// -----------------------------------------------------------------------------
// Large-group limit with the direct KL penalty

/// Derivative of the self-consistent objective, divided by beta:
/// h(x) = 1/(beta sqrt(x(1-x))) - logit(x) + logit(pi_ref).
inline double direct_kl_limit_h(double x, double pi_ref_a, double beta) {
  return 1.0 / (beta * std::sqrt(x * (1.0 - x))) - std::log(x / (1.0 - x)) +
         std::log(pi_ref_a / (1.0 - pi_ref_a));
}

/// Minimiser of h on (0,1): (1 + sqrt(1 - 1/(1+beta^2)))/2.
inline double direct_kl_limit_turning_point(double beta) {
  return 0.5 * (1.0 + std::sqrt(1.0 - 1.0 / (1.0 + beta * beta)));
}

struct StationaryCandidate {
  enum class Kind { interior_root, boundary };

  double pi_a = 0.0;
  double objective_value = 0.0;  // -beta KL(pi||ref); the reward term vanishes at pi_old = pi
  double potential = 0.0;        // arcsin(2x-1) - beta KL: antiderivative of beta h
  double h_value = 0.0;          // h at the candidate (roots only)
  Kind kind = Kind::interior_root;
};

struct StationaryCandidates {
  std::vector<StationaryCandidate> candidates;
  std::size_t selected = 0;

  const StationaryCandidate& best() const { return candidates.at(selected); }
};

namespace detail {

inline double bernoulli_kl(double x, double p) {
  double v = 0.0;
  if (x > 0.0) v += x * std::log(x / p);
  if (x < 1.0) v += (1.0 - x) * std::log((1.0 - x) / (1.0 - p));
  return v;
}

/// Bisection to adjacent doubles on a bracket where h changes sign; returns
/// the endpoint with the smaller |h|.
template <typename F>
double bisect(F&& h, double lo, double hi) {
  double h_lo = h(lo);
  double h_hi = h(hi);
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double h_mid = h(mid);
    if (h_mid == 0.0) return mid;
    if ((h_mid > 0.0) == (h_lo > 0.0)) {
      lo = mid;
      h_lo = h_mid;
    } else {
      hi = mid;
      h_hi = h_mid;
    }
  }
  return std::abs(h_lo) <= std::abs(h_hi) ? lo : hi;
}

}  // namespace detail

/// Stationary candidates in the large-group limit under the direct KL penalty.
/// h decreases on (0, x*] and increases on [x*, 1) and diverges at both ends,
/// so there are two interior roots iff h(x*) < 0. The boundary pi_a = 1 is
/// always a candidate. The candidate with the largest objective_value is
/// selected, ties going to the larger pi_a.
inline StationaryCandidates binary_limit_direct_kl(double pi_ref_a, double beta) {
  if (!(pi_ref_a > 0.0 && pi_ref_a < 1.0)) throw ValidationError("pi_ref_a must lie in (0,1)");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  auto h = [&](double x) { return direct_kl_limit_h(x, pi_ref_a, beta); };
  auto make = [&](double x, StationaryCandidate::Kind kind) {
    StationaryCandidate c;
    c.pi_a = x;
    c.kind = kind;
    const double div = detail::bernoulli_kl(x, pi_ref_a);
    c.objective_value = -beta * div;
    c.potential = std::asin(2.0 * x - 1.0) - beta * div;
    c.h_value = kind == StationaryCandidate::Kind::boundary ? 0.0 : h(x);
    return c;
  };

  constexpr double kEdge = 1e-15;
  const double turning = direct_kl_limit_turning_point(beta);
  const double h_turning = h(turning);

  StationaryCandidates out;
  if (h_turning == 0.0) {
    out.candidates.push_back(make(turning, StationaryCandidate::Kind::interior_root));
  } else if (h_turning < 0.0) {
    if (h(kEdge) > 0.0) {
      out.candidates.push_back(make(detail::bisect(h, kEdge, turning), StationaryCandidate::Kind::interior_root));
    }
    if (h(1.0 - kEdge) > 0.0) {
      out.candidates.push_back(make(detail::bisect(h, turning, 1.0 - kEdge), StationaryCandidate::Kind::interior_root));
    }
  }
  out.candidates.push_back(make(1.0, StationaryCandidate::Kind::boundary));

  for (std::size_t i = 1; i < out.candidates.size(); ++i) {
    const auto& c = out.candidates[i];
    const auto& s = out.candidates[out.selected];
    if (c.objective_value > s.objective_value ||
        (c.objective_value == s.objective_value && c.pi_a > s.pi_a)) {
      out.selected = i;
    }
  }
  return out;
}

inline std::string_view to_string(StationaryCandidate::Kind k) {
  return k == StationaryCandidate::Kind::boundary ? "boundary" : "interior_root";
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_BINARY_HPP_
