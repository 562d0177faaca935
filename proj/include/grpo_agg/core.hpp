#ifndef GRPO_AGG_CORE_HPP_
#define GRPO_AGG_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace grpo_agg {

// -----------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario document (bad JSON, wrong types, unknown keys).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A domain invariant does not hold (probabilities, support, hyperparameters).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A distribution puts mass where the operation requires none, or vice versa.
class SupportError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Exact enumeration would exceed the combinatorial guard.
class EnumerationLimitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// -----------------------------------------------------------------------------
// Numeric conventions

/// Tolerance on probability sums, both at load time and when validating policies.
inline constexpr double kProbabilityTolerance = 1e-12;

using Distribution = std::vector<double>;

namespace detail {

inline std::string format_number(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace detail

/// Uniform draw in [0,1) built from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw of an index from a probability vector.
inline std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

/// Sup-norm distance between two distributions of equal length.
inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// -----------------------------------------------------------------------------
// Rewards

/// Expected reward r(o|q), either fixed or a Bernoulli success probability.
class RewardSpec {
 public:
  enum class Kind { deterministic, bernoulli };

  /// One possible reward value and its probability.
  struct Outcome {
    double value;
    double probability;
  };

  static RewardSpec deterministic(double value) {
    if (!std::isfinite(value)) throw ValidationError("deterministic reward must be finite");
    return RewardSpec(Kind::deterministic, value);
  }

  static RewardSpec bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError(detail::concat("bernoulli p ", detail::format_number(p),
                                           " outside [0,1]"));
    }
    return RewardSpec(Kind::bernoulli, p);
  }

  Kind kind() const { return kind_; }
  bool is_bernoulli() const { return kind_ == Kind::bernoulli; }

  /// Deterministic value, or the success probability for Bernoulli rewards.
  double parameter() const { return parameter_; }

  double mean() const { return parameter_; }

  double variance() const {
    return kind_ == Kind::bernoulli ? parameter_ * (1.0 - parameter_) : 0.0;
  }

  /// True when a draw can take more than one value.
  bool is_random() const {
    return kind_ == Kind::bernoulli && parameter_ > 0.0 && parameter_ < 1.0;
  }

  /// Support of the reward distribution; degenerate Bernoulli collapses to one point.
  std::vector<Outcome> outcomes() const {
    if (kind_ == Kind::deterministic) return {{parameter_, 1.0}};
    if (parameter_ <= 0.0) return {{0.0, 1.0}};
    if (parameter_ >= 1.0) return {{1.0, 1.0}};
    return {{1.0, parameter_}, {0.0, 1.0 - parameter_}};
  }

  template <typename Urbg>
  double draw(Urbg& rng) const {
    if (kind_ == Kind::deterministic) return parameter_;
    return uniform01(rng) < parameter_ ? 1.0 : 0.0;
  }

  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;

 private:
  RewardSpec(Kind kind, double parameter) : kind_(kind), parameter_(parameter) {}

  Kind kind_;
  double parameter_;
};

// -----------------------------------------------------------------------------
// Scenario

struct OutputSpec {
  std::string id;
  double ref_prob = 0.0;
  RewardSpec reward = RewardSpec::deterministic(0.0);

  /// Outputs with zero reference mass are kept but never receive policy mass.
  bool in_support() const { return ref_prob > 0.0; }

  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct ContextSpec {
  std::string id;
  double weight = 1.0;
  std::vector<OutputSpec> outputs;

  std::size_t size() const { return outputs.size(); }

  Distribution reference() const {
    Distribution pi(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) pi[i] = outputs[i].ref_prob;
    return pi;
  }

  std::vector<double> expected_rewards() const {
    std::vector<double> r(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) r[i] = outputs[i].reward.mean();
    return r;
  }

  std::size_t index_of(std::string_view output_id) const {
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (outputs[i].id == output_id) return i;
    }
    throw ValidationError(detail::concat("context '", id, "' has no output '", output_id, "'"));
  }

  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

enum class Penalty { kl0, direct_kl };
enum class Normalisation { shift_scale, shift_only };

/// Group size G >= 2, or the symbolic large-group limit.
class GroupSize {
 public:
  static constexpr GroupSize limit() { return GroupSize(0); }

  static GroupSize finite(int g) {
    if (g < 2) {
      throw ValidationError(detail::concat("group_size ", g, " < 2"));
    }
    return GroupSize(g);
  }

  constexpr bool is_limit() const { return size_ == 0; }

  /// Finite group size; meaningless for the limit.
  constexpr int size() const { return size_; }

  friend constexpr bool operator==(GroupSize, GroupSize) = default;

 private:
  explicit constexpr GroupSize(int g) : size_(g) {}
  int size_;
};

struct Hyperparams {
  double beta = 0.04;
  GroupSize group_size = GroupSize::limit();
  Penalty penalty = Penalty::kl0;
  Normalisation normalisation = Normalisation::shift_scale;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct Scenario {
  std::vector<ContextSpec> contexts;
  Hyperparams hyper;

  const ContextSpec& context(std::string_view id) const {
    for (const auto& c : contexts) {
      if (c.id == id) return c;
    }
    throw ValidationError(detail::concat("scenario has no context '", id, "'"));
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// One distribution per context, index-aligned with Scenario::contexts and
/// each context's outputs.
using PolicyTable = std::vector<Distribution>;

inline PolicyTable reference_policy(const Scenario& s) {
  PolicyTable pi;
  pi.reserve(s.contexts.size());
  for (const auto& c : s.contexts) pi.push_back(c.reference());
  return pi;
}

inline std::string_view to_string(Penalty p) { return p == Penalty::kl0 ? "kl0" : "direct_kl"; }

inline std::string_view to_string(Normalisation n) {
  return n == Normalisation::shift_scale ? "shift_scale" : "shift_only";
}

inline std::string to_string(GroupSize g) {
  return g.is_limit() ? std::string("limit") : std::to_string(g.size());
}

// -----------------------------------------------------------------------------
// Validation

/// Checks hyperparameter invariants.
inline void validate(const Hyperparams& h) {
  if (!(h.beta > 0.0) || !std::isfinite(h.beta)) {
    throw ValidationError(detail::concat("beta ", detail::format_number(h.beta), " must be > 0"));
  }
  if (!h.group_size.is_limit() && h.group_size.size() < 2) {
    throw ValidationError(detail::concat("group_size ", h.group_size.size(), " < 2"));
  }
}

/// Checks a context's invariants. Does not renormalize.
inline void validate(const ContextSpec& c) {
  if (c.outputs.size() < 2) {
    throw ValidationError(detail::concat("context '", c.id, "' needs at least two outputs"));
  }
  if (!(c.weight >= 0.0)) {
    throw ValidationError(detail::concat("context '", c.id, "' has negative weight"));
  }
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& o : c.outputs) {
    if (!seen.insert(o.id).second) {
      throw ValidationError(detail::concat("context '", c.id, "': duplicate output id '", o.id, "'"));
    }
    if (!(o.ref_prob >= 0.0 && o.ref_prob <= 1.0)) {
      throw ValidationError(detail::concat("context '", c.id, "' output '", o.id, "': ref_prob ",
                                           detail::format_number(o.ref_prob), " outside [0,1]"));
    }
    total += o.ref_prob;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    throw ValidationError(detail::concat("context '", c.id, "': ref probabilities sum to ",
                                         detail::format_number(total), " (expected 1)"));
  }
}

inline void validate(const Scenario& s) {
  if (s.contexts.empty()) throw ValidationError("scenario needs at least one context");
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& c : s.contexts) {
    if (!seen.insert(c.id).second) {
      throw ValidationError(detail::concat("duplicate context id '", c.id, "'"));
    }
    validate(c);
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    throw ValidationError(detail::concat("context weights sum to ", detail::format_number(total),
                                         " (expected 1)"));
  }
  validate(s.hyper);
}

/// Validates a single distribution against a context: length, nonnegativity,
/// normalisation, and support inside the reference support.
inline void validate_distribution(std::span<const double> pi, const ContextSpec& c) {
  if (pi.size() != c.outputs.size()) {
    throw ValidationError(detail::concat("context '", c.id, "': policy has ", pi.size(),
                                         " entries, expected ", c.outputs.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const auto& o = c.outputs[i];
    if (!(pi[i] >= 0.0) || !std::isfinite(pi[i])) {
      throw ValidationError(detail::concat("context '", c.id, "' output '", o.id,
                                           "': probability ", detail::format_number(pi[i]),
                                           " is negative or not finite"));
    }
    if (pi[i] > 0.0 && !o.in_support()) {
      throw SupportError(detail::concat("context '", c.id, "' output '", o.id, "': probability ",
                                        detail::format_number(pi[i]),
                                        " outside the reference support"));
    }
    total += pi[i];
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    throw ValidationError(detail::concat("context '", c.id, "': policy probabilities sum to ",
                                         detail::format_number(total), " (expected 1)"));
  }
}

inline void validate_policy(const PolicyTable& pi, const Scenario& s) {
  if (pi.size() != s.contexts.size()) {
    throw ValidationError(detail::concat("policy covers ", pi.size(), " contexts, scenario has ",
                                         s.contexts.size()));
  }
  for (std::size_t k = 0; k < pi.size(); ++k) validate_distribution(pi[k], s.contexts[k]);
}

// -----------------------------------------------------------------------------
// Scenario documents (JSON)

namespace detail {

using nlohmann::json;

inline void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw ParseError(concat(where, ": expected a JSON object"));
}

inline void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ParseError(concat(where, ": unknown key '", it.key(), "'"));
    }
  }
}

inline const json& require_key(const json& j, const char* key, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(concat(where, ": missing key '", key, "'"));
  return *it;
}

inline double require_number(const json& j, const char* key, std::string_view where) {
  const json& v = require_key(j, key, where);
  if (!v.is_number()) throw ParseError(concat(where, ": '", key, "' must be a number"));
  return v.get<double>();
}

inline std::string require_string(const json& j, const char* key, std::string_view where) {
  const json& v = require_key(j, key, where);
  if (!v.is_string()) throw ParseError(concat(where, ": '", key, "' must be a string"));
  return v.get<std::string>();
}

inline RewardSpec parse_reward(const json& j, std::string_view where) {
  require_object(j, where);
  const std::string kind = require_string(j, "kind", where);
  if (kind == "deterministic") {
    reject_unknown_keys(j, {"kind", "value"}, where);
    return RewardSpec::deterministic(require_number(j, "value", where));
  }
  if (kind == "bernoulli") {
    reject_unknown_keys(j, {"kind", "p"}, where);
    return RewardSpec::bernoulli(require_number(j, "p", where));
  }
  throw ParseError(concat(where, ": unknown reward kind '", kind, "'"));
}

inline GroupSize parse_group_size(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "limit") return GroupSize::limit();
    throw ParseError("hyper: group_size must be an integer or \"limit\"");
  }
  if (!v.is_number_integer()) throw ParseError("hyper: group_size must be an integer or \"limit\"");
  const auto g = v.get<std::int64_t>();
  if (g < 2) throw ValidationError(concat("group_size ", g, " < 2"));
  if (g > std::numeric_limits<int>::max()) throw ValidationError("group_size too large");
  return GroupSize::finite(static_cast<int>(g));
}

inline Hyperparams parse_hyper(const json& j) {
  require_object(j, "hyper");
  reject_unknown_keys(j, {"beta", "group_size", "penalty", "normalisation"}, "hyper");
  Hyperparams h;
  h.beta = require_number(j, "beta", "hyper");
  h.group_size = parse_group_size(require_key(j, "group_size", "hyper"));
  if (j.contains("penalty")) {
    const std::string p = require_string(j, "penalty", "hyper");
    if (p == "kl0") {
      h.penalty = Penalty::kl0;
    } else if (p == "direct_kl") {
      h.penalty = Penalty::direct_kl;
    } else {
      throw ParseError(concat("hyper: unknown penalty '", p, "'"));
    }
  }
  if (j.contains("normalisation")) {
    const std::string n = require_string(j, "normalisation", "hyper");
    if (n == "shift_scale") {
      h.normalisation = Normalisation::shift_scale;
    } else if (n == "shift_only") {
      h.normalisation = Normalisation::shift_only;
    } else {
      throw ParseError(concat("hyper: unknown normalisation '", n, "'"));
    }
  }
  return h;
}

// Sums already within summation rounding of 1 are left alone so that a
// serialized scenario reloads bit-identically.
inline bool needs_rescale(double total, std::size_t n) {
  return std::abs(total - 1.0) > 4.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
}

inline void renormalize(std::vector<OutputSpec>& outputs) {
  double total = 0.0;
  for (const auto& o : outputs) total += o.ref_prob;
  if (!needs_rescale(total, outputs.size())) return;
  for (auto& o : outputs) o.ref_prob /= total;
}

}  // namespace detail

inline nlohmann::json hyper_to_json(const Hyperparams& h) {
  nlohmann::json j;
  j["beta"] = h.beta;
  if (h.group_size.is_limit()) {
    j["group_size"] = "limit";
  } else {
    j["group_size"] = h.group_size.size();
  }
  j["penalty"] = std::string(to_string(h.penalty));
  j["normalisation"] = std::string(to_string(h.normalisation));
  return j;
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json contexts = nlohmann::json::array();
  for (const auto& c : s.contexts) {
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& o : c.outputs) {
      nlohmann::json reward;
      if (o.reward.is_bernoulli()) {
        reward = {{"kind", "bernoulli"}, {"p", o.reward.parameter()}};
      } else {
        reward = {{"kind", "deterministic"}, {"value", o.reward.parameter()}};
      }
      outputs.push_back({{"id", o.id}, {"ref_prob", o.ref_prob}, {"reward", reward}});
    }
    contexts.push_back({{"id", c.id}, {"weight", c.weight}, {"outputs", outputs}});
  }
  return {{"contexts", contexts}, {"hyper", hyper_to_json(s.hyper)}};
}

inline std::string serialize(const Scenario& s) { return to_json(s).dump(2); }

/// Parses a JSON scenario document in strict mode. Reference probabilities and
/// context weights within tolerance of 1 are renormalized once, here.
inline Scenario scenario_from_json(const nlohmann::json& doc) {
  using namespace detail;
  require_object(doc, "scenario");
  reject_unknown_keys(doc, {"contexts", "hyper"}, "scenario");

  Scenario s;
  const json& contexts = require_key(doc, "contexts", "scenario");
  if (!contexts.is_array()) throw ParseError("scenario: 'contexts' must be an array");
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    const std::string where = concat("contexts[", k, "]");
    const json& cj = contexts[k];
    require_object(cj, where);
    reject_unknown_keys(cj, {"id", "weight", "outputs"}, where);
    ContextSpec c;
    c.id = require_string(cj, "id", where);
    c.weight = require_number(cj, "weight", where);
    const json& outputs = require_key(cj, "outputs", where);
    if (!outputs.is_array()) throw ParseError(concat(where, ": 'outputs' must be an array"));
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const std::string owhere = concat(where, ".outputs[", i, "]");
      const json& oj = outputs[i];
      require_object(oj, owhere);
      reject_unknown_keys(oj, {"id", "ref_prob", "reward"}, owhere);
      OutputSpec o;
      o.id = require_string(oj, "id", owhere);
      o.ref_prob = require_number(oj, "ref_prob", owhere);
      o.reward = parse_reward(require_key(oj, "reward", owhere), concat(owhere, ".reward"));
      c.outputs.push_back(std::move(o));
    }
    s.contexts.push_back(std::move(c));
  }
  s.hyper = parse_hyper(require_key(doc, "hyper", "scenario"));

  validate(s);
  double total_weight = 0.0;
  for (const auto& c : s.contexts) total_weight += c.weight;
  const bool rescale_weights = needs_rescale(total_weight, s.contexts.size());
  for (auto& c : s.contexts) {
    if (rescale_weights) c.weight /= total_weight;
    renormalize(c.outputs);
  }
  return s;
}

inline Scenario load_scenario(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  return scenario_from_json(doc);
}

}  // namespace grpo_agg

#endif  // GRPO_AGG_CORE_HPP_
