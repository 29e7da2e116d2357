#pragma once

// Discrete-time grid dynamics: s_{t+1} = f(s_t, a_t, w_t).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gridshield/grid.hpp"

namespace gridshield {

class InfeasibleBaseError : public GridError {
public:
  using GridError::GridError;
};

enum class ActionKind { NoOp, DisconnectLine, ReconnectLine, Redispatch };

struct Action {
  ActionKind kind = ActionKind::NoOp;
  int line = -1;
  int gen = -1;
  double delta = 0.0;

  static Action noop() { return {}; }
  static Action disconnect(int l) { return {ActionKind::DisconnectLine, l, -1, 0.0}; }
  static Action reconnect(int l) { return {ActionKind::ReconnectLine, l, -1, 0.0}; }
  static Action redispatch(int g, double d) { return {ActionKind::Redispatch, -1, g, d}; }

  bool is_noop() const { return kind == ActionKind::NoOp; }
  bool operator==(const Action&) const = default;
};

inline std::string to_string(const Action& a) {
  switch (a.kind) {
    case ActionKind::NoOp: return "noop";
    case ActionKind::DisconnectLine: return "disconnect:" + std::to_string(a.line);
    case ActionKind::ReconnectLine: return "reconnect:" + std::to_string(a.line);
    case ActionKind::Redispatch: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "redispatch:%d:%+.6g", a.gen, a.delta);
      return buf;
    }
  }
  return "?";
}

struct EnvConfig {
  int horizon = 200;
  double load_noise_sigma = 0.02;
  bool stress_mode = false;
  int stress_outage_step = 10;
  int reconnection_cooldown = 3;
  bool redispatch_enabled = false;
  double redispatch_fraction = 0.1;  // quantum = fraction * p_max, capped by ramp
  double collapse_penalty = 100.0;
  int overload_grace = 3;            // consecutive overloaded steps tolerated
};

enum class FailureMode { TimeLimit, ThermalCollapse, InfeasibleTopology, Unknown };

inline const char* to_string(FailureMode f) {
  switch (f) {
    case FailureMode::TimeLimit: return "time_limit";
    case FailureMode::ThermalCollapse: return "thermal_collapse";
    case FailureMode::InfeasibleTopology: return "infeasible_topology";
    case FailureMode::Unknown: return "unknown";
  }
  return "unknown";
}

using Rng = std::mt19937_64;

struct EnvState {
  int t = 0;
  LineStatus line_status;
  std::vector<int> cooldowns;
  std::vector<int> out_since;  // step at which each out-of-service line went out, -1 if in service
  std::vector<double> gen_setpoints;
  std::vector<double> load_demands;
  PowerFlowSolution last_solution;
  int overload_streak = 0;
  Rng rng;

  bool operator==(const EnvState&) const = default;
};

struct Disturbance {
  std::vector<double> load_multipliers;
  std::vector<int> forced_outages;

  bool operator==(const Disturbance&) const = default;
};

struct StepOutcome {
  EnvState next_state;
  Action applied;  // the action actually executed (NoOp if the request was infeasible)
  Disturbance disturbance;
  double reward = 0.0;
  bool terminated = false;
  std::optional<FailureMode> failure;
  std::vector<double> rho;

  bool operator==(const StepOutcome&) const = default;
};

/// Redispatch step size for generator g.
inline double redispatch_quantum(const GenSpec& g, const EnvConfig& cfg) {
  return std::min(cfg.redispatch_fraction * g.p_max, g.ramp_limit);
}

/// Solves the power flow implied by the state's setpoints, demands and topology.
inline PowerFlowSolution solve_state(const GridSpec& spec, const EnvState& s) {
  const auto p = bus_injections(spec, s.gen_setpoints, s.load_demands);
  return solve_dc_power_flow(spec, p, s.line_status);
}

inline EnvState reset(const GridSpec& spec, const EnvConfig& cfg, std::uint64_t seed) {
  require_valid(spec);
  (void)cfg;
  const double demand = spec.total_base_demand();
  const double capacity = spec.total_p_max();
  if (demand > capacity)
    throw InfeasibleBaseError("reset: total base demand " + std::to_string(demand) +
                              " exceeds total p_max " + std::to_string(capacity));

  EnvState s;
  s.t = 0;
  s.line_status = all_in_service(spec);
  s.cooldowns.assign(spec.line_count(), 0);
  s.out_since.assign(spec.line_count(), -1);
  const double share = capacity > 0.0 ? demand / capacity : 0.0;
  for (const auto& g : spec.generators)
    s.gen_setpoints.push_back(std::clamp(g.p_max * share, g.p_min, g.p_max));
  for (const auto& d : spec.loads) s.load_demands.push_back(d.base_demand);
  s.rng.seed(seed);
  s.last_solution = solve_state(spec, s);
  return s;
}

/// [NoOp] ++ disconnects ++ reconnects ++ (optionally) +/- redispatch per generator.
inline std::vector<Action> enumerate_actions(const GridSpec& spec, const EnvConfig& cfg) {
  std::vector<Action> acts;
  acts.reserve(1 + 2 * spec.line_count() + 2 * spec.generators.size());
  acts.push_back(Action::noop());
  for (std::size_t l = 0; l < spec.line_count(); ++l) acts.push_back(Action::disconnect(static_cast<int>(l)));
  for (std::size_t l = 0; l < spec.line_count(); ++l) acts.push_back(Action::reconnect(static_cast<int>(l)));
  if (cfg.redispatch_enabled) {
    for (std::size_t g = 0; g < spec.generators.size(); ++g) {
      const double q = redispatch_quantum(spec.generators[g], cfg);
      acts.push_back(Action::redispatch(static_cast<int>(g), +q));
      acts.push_back(Action::redispatch(static_cast<int>(g), -q));
    }
  }
  return acts;
}

inline bool is_feasible(const EnvState& s, const Action& a, const GridSpec& spec, const EnvConfig& cfg) {
  switch (a.kind) {
    case ActionKind::NoOp: return true;
    case ActionKind::DisconnectLine:
      return a.line >= 0 && static_cast<std::size_t>(a.line) < spec.line_count() &&
             s.line_status[static_cast<std::size_t>(a.line)];
    case ActionKind::ReconnectLine:
      return a.line >= 0 && static_cast<std::size_t>(a.line) < spec.line_count() &&
             !s.line_status[static_cast<std::size_t>(a.line)] &&
             s.cooldowns[static_cast<std::size_t>(a.line)] == 0;
    case ActionKind::Redispatch: {
      if (!cfg.redispatch_enabled) return false;
      if (a.gen < 0 || static_cast<std::size_t>(a.gen) >= spec.generators.size()) return false;
      const auto& g = spec.generators[static_cast<std::size_t>(a.gen)];
      if (std::abs(a.delta) > g.ramp_limit) return false;
      const double next = s.gen_setpoints[static_cast<std::size_t>(a.gen)] + a.delta;
      return next >= g.p_min && next <= g.p_max;
    }
  }
  return false;
}

inline std::vector<bool> feasible_actions(const EnvState& s, const std::vector<Action>& actions,
                                          const GridSpec& spec, const EnvConfig& cfg) {
  std::vector<bool> mask(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) mask[i] = is_feasible(s, actions[i], spec, cfg);
  return mask;
}

inline std::vector<bool> feasible_actions(const EnvState& s, const GridSpec& spec, const EnvConfig& cfg) {
  return feasible_actions(s, enumerate_actions(spec, cfg), spec, cfg);
}

/// Applies a control action to topology and setpoints. Infeasible requests
/// degrade to NoOp; the executed action is returned. `cooldown` is the
/// reconnection lockout started by a disconnection.
inline Action apply_action(EnvState& s, const Action& a, const GridSpec& spec, const EnvConfig& cfg,
                           int cooldown) {
  if (!is_feasible(s, a, spec, cfg)) return Action::noop();
  switch (a.kind) {
    case ActionKind::NoOp: break;
    case ActionKind::DisconnectLine: {
      const auto l = static_cast<std::size_t>(a.line);
      s.line_status[l] = false;
      s.cooldowns[l] = cooldown;
      s.out_since[l] = s.t;
      break;
    }
    case ActionKind::ReconnectLine: {
      const auto l = static_cast<std::size_t>(a.line);
      s.line_status[l] = true;
      s.out_since[l] = -1;
      break;
    }
    case ActionKind::Redispatch: s.gen_setpoints[static_cast<std::size_t>(a.gen)] += a.delta; break;
  }
  return a;
}

/// The line the stress scenario knocks out: the most loaded line still in service.
inline int stress_target(const EnvState& s) {
  int best = -1;
  double best_rho = -1.0;
  for (std::size_t l = 0; l < s.line_status.size(); ++l) {
    if (!s.line_status[l]) continue;
    const double r = l < s.last_solution.rho.size() ? s.last_solution.rho[l] : 0.0;
    if (r > best_rho) {
      best_rho = r;
      best = static_cast<int>(l);
    }
  }
  return best;
}

/// Load multipliers ~ N(1, sigma) truncated to [0.8, 1.2] by rejection; one
/// forced outage at the stress step. Advances the state's rng.
inline Disturbance sample_disturbance(EnvState& s, const GridSpec& spec, const EnvConfig& cfg) {
  Disturbance w;
  w.load_multipliers.assign(spec.loads.size(), 1.0);
  if (cfg.load_noise_sigma > 0.0) {
    std::normal_distribution<double> normal(1.0, cfg.load_noise_sigma);
    for (auto& m : w.load_multipliers) {
      double x = normal(s.rng);
      while (x < 0.8 || x > 1.2) x = normal(s.rng);
      m = x;
    }
  }
  if (cfg.stress_mode && s.t == cfg.stress_outage_step) {
    const int target = stress_target(s);
    if (target >= 0) w.forced_outages.push_back(target);
  }
  return w;
}

/// r = 1 + clamp(m, -1, 1), minus the collapse penalty on a failure termination.
inline double compute_reward(std::span<const double> rho, bool terminated_by_collapse, const EnvConfig& cfg) {
  double r = 1.0 + std::clamp(safety_margin(rho), -1.0, 1.0);
  if (terminated_by_collapse) r -= cfg.collapse_penalty;
  return r;
}

inline FailureMode classify_termination(const EnvState& s, const EnvConfig& cfg) {
  if (s.t >= cfg.horizon) return FailureMode::TimeLimit;
  if (!s.last_solution.feasible) return FailureMode::InfeasibleTopology;
  if (s.overload_streak >= cfg.overload_grace) return FailureMode::ThermalCollapse;
  return FailureMode::Unknown;
}

inline StepOutcome step(const EnvState& state, const Action& action, const GridSpec& spec,
                        const EnvConfig& cfg) {
  StepOutcome out;
  EnvState& s = out.next_state;
  s = state;

  // Existing lockouts tick down before this step's events start new ones.
  for (auto& c : s.cooldowns)
    if (c > 0) --c;

  out.applied = apply_action(s, action, spec, cfg, cfg.reconnection_cooldown);

  out.disturbance = sample_disturbance(s, spec, cfg);
  for (std::size_t d = 0; d < spec.loads.size(); ++d)
    s.load_demands[d] = spec.loads[d].base_demand * out.disturbance.load_multipliers[d];
  for (int l : out.disturbance.forced_outages) {
    const auto li = static_cast<std::size_t>(l);
    s.line_status[li] = false;
    s.cooldowns[li] = cfg.reconnection_cooldown;
    s.out_since[li] = s.t;
  }

  s.last_solution = solve_state(spec, s);
  out.rho = s.last_solution.rho;
  const double peak = out.rho.empty() ? 0.0 : max_loading(out.rho);
  s.overload_streak = (s.last_solution.feasible && peak > 1.0) ? s.overload_streak + 1 : 0;
  s.t += 1;

  const bool failed = !s.last_solution.feasible || s.overload_streak >= cfg.overload_grace;
  out.terminated = failed || s.t >= cfg.horizon;
  if (out.terminated) out.failure = classify_termination(s, cfg);
  const bool collapse = out.failure && *out.failure != FailureMode::TimeLimit;
  out.reward = out.rho.empty() ? (collapse ? 1.0 - cfg.collapse_penalty : 1.0)
                               : compute_reward(out.rho, collapse, cfg);
  return out;
}

}  // namespace gridshield
