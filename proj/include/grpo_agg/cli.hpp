#ifndef GRPO_AGG_CLI_HPP_
#define GRPO_AGG_CLI_HPP_

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "grpo_agg/grpo_agg.hpp"

// Command-line front end. run_command is the whole program; main() only
// forwards argv so the subcommands can be driven in-process by tests.

namespace grpo_agg::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInvalid = 2, kNotConverged = 3 };

/// 17 significant digits, round-trippable.
inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(detail::concat("cannot read '", path, "'"));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario read_scenario(const std::string& path) { return load_scenario(read_file(path)); }

/// Evaluates fn(i) for i in [0, n) on a few threads; results come back in index order.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// -----------------------------------------------------------------------------
// Binary questions

/// Two-output context for a question with margin gamma >= 0 in favour of a.
/// shift_scale uses Bernoulli rewards (gamma, 0), so P(a > b) - P(b > a) = gamma;
/// shift_only uses deterministic rewards (gamma, 0).
inline ContextSpec binary_context(double pi_ref_a, double gamma, Normalisation mode) {
  ContextSpec c;
  c.id = "q";
  const RewardSpec ra = mode == Normalisation::shift_scale ? RewardSpec::bernoulli(gamma)
                                                           : RewardSpec::deterministic(gamma);
  const RewardSpec rb = mode == Normalisation::shift_scale ? RewardSpec::bernoulli(0.0)
                                                           : RewardSpec::deterministic(0.0);
  c.outputs.push_back({"a", pi_ref_a, ra});
  c.outputs.push_back({"b", 1.0 - pi_ref_a, rb});
  return c;
}

/// Stationary pi(a) for a binary question. Uses a closed form when the variant
/// has one and the solver otherwise. gamma < 0 is handled by swapping labels.
/// In the large-group shift_scale cases only the sign of gamma matters.
inline double binary_stationary(double pi_ref_a, double beta, double gamma, const Variant& v,
                                const SolverConfig& cfg = {}) {
  if (!(pi_ref_a >= 0.0 && pi_ref_a <= 1.0)) throw ValidationError("pi_ref_a must lie in [0,1]");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  if (std::isnan(gamma)) throw ValidationError("gamma must be a number");
  if (gamma < 0.0) return 1.0 - binary_stationary(1.0 - pi_ref_a, beta, -gamma, v, cfg);
  if (gamma == 0.0 || (pi_ref_a == 0.0 && v.penalty == Penalty::direct_kl)) return pi_ref_a;

  if (v.normalisation == Normalisation::shift_scale) {
    if (v.penalty == Penalty::kl0) {
      if (v.group_size == GroupSize::finite(2)) return binary_g2({pi_ref_a, gamma, beta});
      if (v.group_size.is_limit()) return binary_limit(pi_ref_a, beta);
    } else {
      if (v.group_size == GroupSize::finite(2)) return binary_g2_direct_kl({pi_ref_a, gamma, beta});
      if (v.group_size.is_limit()) {
        if (pi_ref_a == 1.0) return 1.0;
        return binary_limit_direct_kl(pi_ref_a, beta).best().pi_a;
      }
    }
    if (gamma > 1.0) throw ValidationError("gamma must lie in [0,1] for shift_scale");
  }
  Hyperparams h{beta, v.group_size, v.penalty, v.normalisation};
  const SolveResult r = solve_stationary(binary_context(pi_ref_a, gamma, v.normalisation), h, cfg);
  if (!r.converged) throw Error("solver did not converge");
  return r.pi[0];
}

// -----------------------------------------------------------------------------
// Sweep specifications

struct SweepCurve {
  double fixed = 0.0;  // beta when sweeping pi_ref_a, pi_ref_a when sweeping beta
  double gamma = 1.0;
};

struct SweepSpec {
  std::string axis = "pi_ref_a";
  std::vector<double> grid;
  std::vector<SweepCurve> curves;
  Variant variant;
};

inline Variant parse_variant(const nlohmann::json& j) {
  using namespace detail;
  require_object(j, "variant");
  reject_unknown_keys(j, {"penalty", "normalisation", "group_size"}, "variant");
  nlohmann::json h = j;
  h["beta"] = 1.0;
  if (!h.contains("group_size")) h["group_size"] = 2;
  return Variant::of(parse_hyper(h));
}

inline SweepSpec parse_sweep(const std::string& text) {
  using namespace detail;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  require_object(doc, "sweep");
  reject_unknown_keys(doc, {"axis", "grid", "curves", "variant"}, "sweep");
  SweepSpec s;
  s.axis = require_string(doc, "axis", "sweep");
  if (s.axis != "pi_ref_a" && s.axis != "beta") throw ParseError("sweep: axis must be \"pi_ref_a\" or \"beta\"");
  const std::string fixed_key = s.axis == "pi_ref_a" ? "beta" : "pi_ref_a";

  const auto& grid = require_key(doc, "grid", "sweep");
  if (!grid.is_array() || grid.empty()) throw ParseError("sweep: 'grid' must be a nonempty array");
  for (const auto& v : grid) {
    if (!v.is_number()) throw ParseError("sweep: grid values must be numbers");
    s.grid.push_back(v.get<double>());
  }
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    const double x = s.grid[i];
    if (s.axis == "pi_ref_a" && !(x >= 0.0 && x <= 1.0)) throw ValidationError("sweep: pi_ref_a grid must lie in [0,1]");
    if (s.axis == "beta" && !(x > 0.0)) throw ValidationError("sweep: beta grid must be positive");
    if (i > 0 && !(x > s.grid[i - 1])) throw ValidationError("sweep: grid must be strictly increasing");
  }

  const auto& curves = require_key(doc, "curves", "sweep");
  if (!curves.is_array() || curves.empty()) throw ParseError("sweep: 'curves' must be a nonempty array");
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const std::string where = concat("curves[", k, "]");
    require_object(curves[k], where);
    reject_unknown_keys(curves[k], {"beta", "pi_ref_a", "gamma"}, where);
    SweepCurve c;
    c.fixed = require_number(curves[k], fixed_key.c_str(), where);
    if (curves[k].contains("gamma")) c.gamma = require_number(curves[k], "gamma", where);
    s.curves.push_back(c);
  }
  if (doc.contains("variant")) s.variant = parse_variant(doc["variant"]);
  return s;
}

struct SweepRow {
  std::size_t curve = 0;
  double pi_ref_a = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double pi_a = 0.0;
};

/// Evaluates every (curve, grid point); rows ordered by curve, then grid index.
inline std::vector<SweepRow> run_sweep(const SweepSpec& s) {
  const std::size_t m = s.grid.size();
  return parallel_map<SweepRow>(s.curves.size() * m, [&](std::size_t idx) {
    const std::size_t k = idx / m;
    const double x = s.grid[idx % m];
    SweepRow row;
    row.curve = k;
    row.gamma = s.curves[k].gamma;
    row.pi_ref_a = s.axis == "pi_ref_a" ? x : s.curves[k].fixed;
    row.beta = s.axis == "pi_ref_a" ? s.curves[k].fixed : x;
    row.pi_a = binary_stationary(row.pi_ref_a, row.beta, row.gamma, s.variant);
    return row;
  });
}

// -----------------------------------------------------------------------------
// Trainer configuration

inline TrainerConfig parse_trainer_config(const std::string& text) {
  using namespace detail;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  require_object(doc, "trainer config");
  reject_unknown_keys(doc, {"epsilon", "learning_rate", "steps", "groups_per_step", "inner_updates_per_old_policy",
                            "seed", "checkpoint_every"},
                      "trainer config");
  TrainerConfig cfg;
  auto count = [&](const char* key, std::size_t& field) {
    if (!doc.contains(key)) return;
    const auto& v = doc[key];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ParseError(concat("trainer config: '", key, "' must be a nonnegative integer"));
    }
    field = v.get<std::size_t>();
  };
  if (doc.contains("epsilon")) cfg.epsilon = require_number(doc, "epsilon", "trainer config");
  if (doc.contains("learning_rate")) cfg.learning_rate = require_number(doc, "learning_rate", "trainer config");
  count("steps", cfg.steps);
  count("groups_per_step", cfg.groups_per_step);
  count("inner_updates_per_old_policy", cfg.inner_updates_per_old_policy);
  count("checkpoint_every", cfg.checkpoint_every);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) throw ParseError("trainer config: 'seed' must be an integer");
    cfg.seed = doc["seed"].is_number_unsigned() ? doc["seed"].get<std::uint64_t>()
                                                : static_cast<std::uint64_t>(doc["seed"].get<std::int64_t>());
  }
  return cfg;
}

// -----------------------------------------------------------------------------
// Oracle campaign cases

/// Case 0 is the scenario itself; later cases keep its shape (output counts,
/// reward kinds, group size, variant) and redraw reference probabilities,
/// reward parameters and beta from the seed.
inline Scenario oracle_case(const Scenario& base, std::size_t index, std::uint64_t seed) {
  if (index == 0) return base;
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * index);
  Scenario s = base;
  s.hyper.beta = 0.1 * std::exp(std::log(50.0) * uniform01(rng));
  for (auto& c : s.contexts) {
    double total = 0.0;
    for (auto& o : c.outputs) {
      o.ref_prob = 0.05 + 0.95 * uniform01(rng);
      total += o.ref_prob;
    }
    for (auto& o : c.outputs) {
      o.ref_prob /= total;
      const double v = uniform01(rng);
      o.reward = o.reward.is_bernoulli() ? RewardSpec::bernoulli(v) : RewardSpec::deterministic(v);
    }
  }
  return s;
}

struct OracleRow {
  std::string context_id;
  double beta = 0.0;
  bool solver_converged = false;
  bool oracle_converged = false;
  std::size_t cycle_length = 0;
  double discrepancy = 0.0;
  double solver_residual = 0.0;
  double oracle_residual = 0.0;
};

// -----------------------------------------------------------------------------
// Subcommands

namespace detail_cli {

inline std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path, std::ios::binary);
  if (!file) throw ValidationError(grpo_agg::detail::concat("cannot write '", path, "'"));
  return file;
}

inline void write_solution_rows(std::ostream& out, const ContextSpec& c, std::size_t start, const SolveResult& r,
                                double value) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << c.id << ',' << start << ',' << c.outputs[i].id << ',' << num(c.outputs[i].ref_prob) << ','
        << num(r.pi[i]) << ',' << num(value) << ',' << num(r.kkt_residual) << ',' << r.iterations << ','
        << (r.converged ? 1 : 0) << '\n';
  }
}

}  // namespace detail_cli

inline int cmd_solve(const std::string& path, const SolverConfig& cfg, bool multistart, std::ostream& out) {
  const Scenario s = read_scenario(path);
  out << "context_id,start,output_id,pi_ref,pi,objective,kkt_residual,iterations,converged\n";
  bool all_converged = true;
  for (const auto& c : s.contexts) {
    if (multistart) {
      for (const auto& p : solve_multistart(c, s.hyper, cfg)) {
        all_converged = all_converged && p.result.converged;
        detail_cli::write_solution_rows(out, c, p.start, p.result, p.objective);
      }
    } else {
      const SolveResult r = solve_stationary(c, s.hyper, cfg);
      all_converged = all_converged && r.converged;
      detail_cli::write_solution_rows(out, c, 0, r, objective(r.pi, r.pi, c, s.hyper));
    }
  }
  return all_converged ? kOk : kNotConverged;
}

inline int cmd_closed_form(double p, double beta, double gamma, const std::string& which, std::ostream& out) {
  if (which == "g2") {
    out << num(binary_stationary(p, beta, gamma, {Penalty::kl0, Normalisation::shift_scale, GroupSize::finite(2)}))
        << '\n';
  } else if (which == "limit") {
    out << num(binary_stationary(p, beta, gamma, {Penalty::kl0, Normalisation::shift_scale, GroupSize::limit()}))
        << '\n';
  } else if (which == "g2-direct-kl") {
    out << num(binary_stationary(p, beta, gamma,
                                 {Penalty::direct_kl, Normalisation::shift_scale, GroupSize::finite(2)}))
        << '\n';
  } else {
    // Candidate listing, reported in the caller's labels.
    out << "candidate,kind,pi_a,objective,potential,h,selected\n";
    if (gamma == 0.0) {
      out << "0,tie," << num(p) << ",0,0,0,1\n";
      return kOk;
    }
    const bool swapped = gamma < 0.0;
    const auto cands = binary_limit_direct_kl(swapped ? 1.0 - p : p, beta);
    for (std::size_t i = 0; i < cands.candidates.size(); ++i) {
      const auto& c = cands.candidates[i];
      out << i << ',' << to_string(c.kind) << ',' << num(swapped ? 1.0 - c.pi_a : c.pi_a) << ','
          << num(c.objective_value) << ',' << num(c.potential) << ',' << num(c.h_value) << ','
          << (i == cands.selected ? 1 : 0) << '\n';
    }
  }
  return kOk;
}

inline int cmd_sweep(const std::string& path, const std::string& output, std::ostream& out) {
  const SweepSpec spec = parse_sweep(read_file(path));
  const auto rows = run_sweep(spec);
  std::ofstream file;
  std::ostream& os = detail_cli::open_output(output, file, out);
  const std::string variant = to_string(spec.variant);
  os << "curve,variant,pi_ref_a,beta,gamma,pi_a\n";
  for (const auto& r : rows) {
    os << r.curve << ',' << variant << ',' << num(r.pi_ref_a) << ',' << num(r.beta) << ',' << num(r.gamma) << ','
       << num(r.pi_a) << '\n';
  }
  return kOk;
}

inline int cmd_oracle_verify(const std::string& path, std::size_t cases, std::uint64_t seed,
                             std::size_t grid_resolution, std::ostream& out, std::ostream& err) {
  const Scenario base = read_scenario(path);
  if (cases < 1) throw ValidationError("--cases must be at least 1");
  OracleConfig ocfg;
  if (grid_resolution > 0) ocfg.method = GridSearch{grid_resolution};

  const auto results = parallel_map<std::vector<OracleRow>>(cases, [&](std::size_t k) {
    const Scenario s = oracle_case(base, k, seed);
    std::vector<OracleRow> rows;
    for (const auto& c : s.contexts) {
      const SolveResult r = solve_stationary(c, s.hyper);
      const OracleResult o = oracle_stationary(c, s.hyper, ocfg);
      rows.push_back({c.id, s.hyper.beta, r.converged, o.converged, o.cycle_length, sup_distance(r.pi, o.pi),
                      r.kkt_residual, o.kkt_residual});
    }
    return rows;
  });

  out << "case,context_id,beta,solver_converged,oracle_converged,cycle_length,max_discrepancy,solver_residual,"
         "oracle_residual\n";
  std::size_t failures = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    bool ok = true;
    for (const auto& r : results[k]) {
      out << k << ',' << r.context_id << ',' << num(r.beta) << ',' << (r.solver_converged ? 1 : 0) << ','
          << (r.oracle_converged ? 1 : 0) << ',' << r.cycle_length << ',' << num(r.discrepancy) << ','
          << num(r.solver_residual) << ',' << num(r.oracle_residual) << '\n';
      ok = ok && r.solver_converged && r.oracle_converged;
      if (r.solver_converged && r.oracle_converged) worst = std::max(worst, r.discrepancy);
    }
    if (!ok) ++failures;
  }
  err << "cases " << cases << ", not converged " << failures << ", max discrepancy " << num(worst) << '\n';
  return failures == 0 ? kOk : kNotConverged;
}

inline int cmd_train(const std::string& path, const std::string& config_path, const std::string& output,
                     std::ostream& out, std::ostream& err) {
  const Scenario s = read_scenario(path);
  const TrainerConfig cfg = parse_trainer_config(read_file(config_path));

  // Distance to the solver's stationary policy is reported when it is cheap to get.
  std::optional<PolicyTable> target;
  try {
    PolicyTable t;
    for (const auto& c : s.contexts) {
      const SolveResult r = solve_stationary(c, s.hyper);
      if (!r.converged) throw Error("no target");
      t.push_back(r.pi);
    }
    target = std::move(t);
  } catch (const Error&) {
    target.reset();
  }

  const TrainTrace trace = train(s, cfg, target);
  std::ofstream file;
  std::ostream& os = detail_cli::open_output(output, file, out);
  os << "# seed=" << cfg.seed << " steps=" << cfg.steps << " groups_per_step=" << cfg.groups_per_step
     << " inner_updates_per_old_policy=" << cfg.inner_updates_per_old_policy
     << " learning_rate=" << num(cfg.learning_rate) << " epsilon=" << num(cfg.epsilon)
     << " beta=" << num(s.hyper.beta) << " group_size=" << to_string(s.hyper.group_size)
     << " penalty=" << to_string(s.hyper.penalty) << " normalisation=" << to_string(s.hyper.normalisation)
     << '\n';
  os << "step,context_id,output_id,probability\n";
  for (const auto& cp : trace.checkpoints) {
    for (std::size_t k = 0; k < s.contexts.size(); ++k) {
      const auto& c = s.contexts[k];
      for (std::size_t i = 0; i < c.size(); ++i) {
        os << cp.step << ',' << c.id << ',' << c.outputs[i].id << ',' << num(cp.policy[k][i]) << '\n';
      }
    }
  }
  const Checkpoint& last = trace.checkpoints.back();
  err << "clipped fraction " << num(trace.clipped_fraction()) << ", objective estimate "
      << num(last.objective_estimate);
  if (last.distance_to_target) err << ", distance to stationary policy " << num(*last.distance_to_target);
  err << '\n';
  return kOk;
}

inline int cmd_estimate(const std::string& path, const std::string& output_id, const std::string& context_id,
                        std::size_t samples, std::uint64_t seed, std::ostream& out) {
  const Scenario s = read_scenario(path);
  const ContextSpec& c = s.context(context_id);
  const auto o = c.index_of(output_id);
  const Distribution ref = c.reference();
  out << "context_id,output_id,group_size,method,value,standard_error\n";
  auto row = [&](std::string_view method, const PreferenceEstimate& e) {
    out << c.id << ',' << output_id << ',' << to_string(s.hyper.group_size) << ',' << method << ','
        << num(e.value) << ',' << num(e.standard_error) << '\n';
  };
  if (s.hyper.group_size.is_limit()) {
    row("limit", {limit_preference(o, ref, c, s.hyper.normalisation), 0.0});
    return kOk;
  }
  GroupPreferenceQuery q{o, ref, s.hyper.group_size.size(), ExactMethod{}};
  if (samples == 0) {
    row("exact", expected_group_preference(q, c, s.hyper.normalisation));
    return kOk;
  }
  q.method = MonteCarloMethod{samples, seed};
  row("monte_carlo", expected_group_preference(q, c, s.hyper.normalisation));
  return kOk;
}

inline int cmd_baselines(const std::string& path, double beta, std::ostream& out) {
  Scenario s = read_scenario(path);
  s.hyper.beta = beta;
  validate(s.hyper);
  out << "context_id,output_id,pi_ref,rlhf,nlhf,grpo\n";
  bool converged = true;
  for (const auto& c : s.contexts) {
    const Distribution rlhf = rlhf_aggregate(c, beta);
    const SolveResult nlhf = nlhf_aggregate(c, beta);
    const SolveResult grpo = solve_stationary(c, s.hyper);
    converged = converged && nlhf.converged && grpo.converged;
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << c.id << ',' << c.outputs[i].id << ',' << num(c.outputs[i].ref_prob) << ',' << num(rlhf[i]) << ','
          << num(nlhf.pi[i]) << ',' << num(grpo.pi[i]) << '\n';
    }
  }
  return converged ? kOk : kNotConverged;
}

/// Parses argv (argv[0] is the program name) and runs one subcommand.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Stationary policies of group-relative preference optimisation"};
  app.require_subcommand(1);

  std::string scenario, output, config, context_id, output_id, which = "g2";
  SolverConfig scfg;
  bool multistart = false;
  double pi_ref = 0.5, beta = 1.0, gamma = 1.0;
  std::size_t cases = 50, samples = 10000, resolution = 0;
  std::uint64_t seed = 0;

  auto* solve = app.add_subcommand("solve", "stationary policy of every context");
  solve->add_option("scenario", scenario, "scenario JSON")->required();
  solve->add_option("--tol", scfg.tolerance, "residual tolerance")->check(CLI::PositiveNumber);
  solve->add_option("--damping", scfg.damping, "damping in (0,1]")->check(CLI::Range(0.0, 1.0));
  solve->add_option("--max-iter", scfg.max_iterations, "iteration cap");
  solve->add_flag("--multistart", multistart, "also start from vertex-biased policies");

  auto* closed = app.add_subcommand("closed-form", "binary closed forms");
  closed->add_option("--pi-ref", pi_ref, "reference probability of answer a")->required();
  closed->add_option("--beta", beta, "penalty weight")->required();
  closed->add_option("--gamma", gamma, "confidence margin of a over b");
  closed->add_option("--case", which, "closed form")
      ->required()
      ->check(CLI::IsMember({"g2", "limit", "g2-direct-kl", "limit-direct-kl"}));

  auto* sweep = app.add_subcommand("sweep", "binary curve families");
  sweep->add_option("spec", scenario, "sweep spec JSON")->required();
  sweep->add_option("-o,--output", output, "CSV path (default stdout)");

  auto* verify = app.add_subcommand("oracle-verify", "solver against best-response iteration");
  verify->add_option("scenario", scenario, "scenario JSON")->required();
  verify->add_option("--cases", cases, "number of cases (the scenario plus seeded variations)");
  verify->add_option("--seed", seed, "seed for the variations");
  verify->add_option("--grid", resolution, "use grid best responses at this resolution");

  auto* trainc = app.add_subcommand("train", "sampled tabular training");
  trainc->add_option("scenario", scenario, "scenario JSON")->required();
  trainc->add_option("--config", config, "trainer config JSON")->required();
  trainc->add_option("-o,--output", output, "CSV path (default stdout)");

  auto* estimate = app.add_subcommand("estimate", "group preference of one output under the reference policy");
  estimate->add_option("scenario", scenario, "scenario JSON")->required();
  estimate->add_option("--output", output_id, "output id")->required();
  estimate->add_option("--context", context_id, "context id")->required();
  estimate->add_option("--samples", samples, "Monte Carlo samples (0: exact)");
  estimate->add_option("--seed", seed, "seed");

  auto* baselines = app.add_subcommand("baselines", "RLHF, NLHF and GRPO side by side");
  baselines->add_option("scenario", scenario, "scenario JSON")->required();
  baselines->add_option("--beta", beta, "penalty weight")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("grpo-agg");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return cmd_solve(scenario, scfg, multistart, out);
    if (*closed) return cmd_closed_form(pi_ref, beta, gamma, which, out);
    if (*sweep) return cmd_sweep(scenario, output, out);
    if (*verify) return cmd_oracle_verify(scenario, cases, seed, resolution, out, err);
    if (*trainc) return cmd_train(scenario, config, output, out, err);
    if (*estimate) return cmd_estimate(scenario, output_id, context_id, samples, seed, out);
    if (*baselines) return cmd_baselines(scenario, beta, out);
  } catch (const TrainingDivergedError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kUsage;
}

}  // namespace grpo_agg::cli

#endif  // GRPO_AGG_CLI_HPP_
