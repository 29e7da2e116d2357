#pragma once

// Runtime safety layer: one-step prediction, admissibility against rho_max,
// L0-minimal corrective projection and CBF-style pre-masking.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gridshield/environment.hpp"

namespace gridshield {

enum class ShieldMode { Off, Veto, Projection, CbfMask };

inline const char* to_string(ShieldMode m) {
  switch (m) {
    case ShieldMode::Off: return "off";
    case ShieldMode::Veto: return "veto";
    case ShieldMode::Projection: return "projection";
    case ShieldMode::CbfMask: return "cbf_mask";
  }
  return "off";
}

/// NoOp followed by every single-line disconnection.
inline std::vector<Action> default_candidates(const GridSpec& spec) {
  std::vector<Action> c{Action::noop()};
  for (std::size_t l = 0; l < spec.line_count(); ++l) c.push_back(Action::disconnect(static_cast<int>(l)));
  return c;
}

struct ShieldConfig {
  ShieldMode mode = ShieldMode::Projection;
  double rho_max = 0.98;
  std::vector<Action> candidate_set;  // empty = default_candidates(spec)
};

struct ShieldDecision {
  Action executed;
  Action proposed;
  bool vetoed = false;
  bool corrected = false;
  bool last_resort = false;  // NoOp executed because nothing admissible was found
  double predicted_rho_max = 0.0;
  int l0_distance = 0;

  bool operator==(const ShieldDecision&) const = default;
};

struct Prediction {
  std::vector<double> rho;
  bool feasible = true;

  /// +inf for an infeasible topology, which no threshold admits.
  double max_rho() const {
    if (!feasible) return std::numeric_limits<double>::infinity();
    return rho.empty() ? 0.0 : max_loading(rho);
  }
};

/// One-step lookahead with zero disturbance: the action is applied to a copy
/// of the state and the power flow re-solved at current demands.
inline Prediction predict(const EnvState& state, const Action& action, const GridSpec& spec,
                          const EnvConfig& env_cfg) {
  EnvState copy = state;
  apply_action(copy, action, spec, env_cfg, 0);
  const auto sol = solve_state(spec, copy);
  return {sol.rho, sol.feasible};
}

/// Env-feasible, predicted topology feasible, and predicted max rho <= rho_max.
inline bool is_admissible(const EnvState& state, const Action& action, const GridSpec& spec,
                          const EnvConfig& env_cfg, const ShieldConfig& cfg) {
  if (!is_feasible(state, action, spec, env_cfg)) return false;
  return predict(state, action, spec, env_cfg).max_rho() <= cfg.rho_max;
}

inline std::vector<Action> admissible_set(const EnvState& state, const std::vector<Action>& candidates,
                                          const GridSpec& spec, const EnvConfig& env_cfg,
                                          const ShieldConfig& cfg) {
  std::vector<Action> out;
  for (const auto& a : candidates)
    if (is_admissible(state, a, spec, env_cfg, cfg)) out.push_back(a);
  return out;
}

/// Control-change encoding: per-line status delta followed by per-generator
/// setpoint delta.
inline std::vector<double> encode_action(const Action& a, const GridSpec& spec) {
  std::vector<double> e(spec.line_count() + spec.generators.size(), 0.0);
  switch (a.kind) {
    case ActionKind::NoOp: break;
    case ActionKind::DisconnectLine: e[static_cast<std::size_t>(a.line)] = -1.0; break;
    case ActionKind::ReconnectLine: e[static_cast<std::size_t>(a.line)] = +1.0; break;
    case ActionKind::Redispatch: e[spec.line_count() + static_cast<std::size_t>(a.gen)] = a.delta; break;
  }
  return e;
}

/// Number of control components in which the two actions differ.
inline int l0_distance(const Action& a, const Action& b, const GridSpec& spec) {
  const auto ea = encode_action(a, spec);
  const auto eb = encode_action(b, spec);
  int d = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) d += ea[i] != eb[i] ? 1 : 0;
  return d;
}

namespace detail {

inline const std::vector<Action>& candidates_or_default(const ShieldConfig& cfg, const GridSpec& spec,
                                                        std::vector<Action>& storage) {
  if (!cfg.candidate_set.empty()) return cfg.candidate_set;
  storage = default_candidates(spec);
  return storage;
}

}  // namespace detail

struct Correction {
  Action action;
  std::size_t index = 0;
  int l0 = 0;
  double predicted_rho_max = 0.0;
};

/// Corrective search over the candidate set. Among admissible candidates the
/// winner minimises (l0 to proposal, predicted max rho, candidate index).
/// Returns nullopt when no candidate is admissible.
inline std::optional<Correction> best_correction(const EnvState& state, const Action& proposed,
                                                 const std::vector<Action>& candidates,
                                                 const GridSpec& spec, const EnvConfig& env_cfg,
                                                 const ShieldConfig& cfg) {
  std::optional<Correction> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    if (!is_feasible(state, a, spec, env_cfg)) continue;
    const double r = predict(state, a, spec, env_cfg).max_rho();
    if (!(r <= cfg.rho_max)) continue;
    const int d = l0_distance(a, proposed, spec);
    if (!best || d < best->l0 || (d == best->l0 && r < best->predicted_rho_max)) best = Correction{a, i, d, r};
  }
  return best;
}

/// Two-branch execution: admissible proposals pass through untouched;
/// otherwise Veto falls back to NoOp and Projection picks the L0-closest
/// admissible candidate. With no admissible candidate NoOp is executed and
/// flagged as a last resort.
inline ShieldDecision project(const EnvState& state, const Action& proposed, const GridSpec& spec,
                              const EnvConfig& env_cfg, const ShieldConfig& cfg) {
  ShieldDecision d;
  d.proposed = proposed;
  const bool feasible = is_feasible(state, proposed, spec, env_cfg);
  const double proposed_rho =
      feasible ? predict(state, proposed, spec, env_cfg).max_rho() : std::numeric_limits<double>::infinity();
  if (feasible && proposed_rho <= cfg.rho_max) {
    d.executed = proposed;
    d.predicted_rho_max = proposed_rho;
    return d;
  }

  d.vetoed = true;
  if (cfg.mode == ShieldMode::Projection) {
    std::vector<Action> storage;
    const auto& cands = detail::candidates_or_default(cfg, spec, storage);
    if (auto c = best_correction(state, proposed, cands, spec, env_cfg, cfg)) {
      d.executed = c->action;
      d.corrected = true;
      d.predicted_rho_max = c->predicted_rho_max;
      d.l0_distance = c->l0;
      return d;
    }
  }
  d.executed = Action::noop();
  d.predicted_rho_max = predict(state, d.executed, spec, env_cfg).max_rho();
  d.last_resort = !(d.predicted_rho_max <= cfg.rho_max);
  d.l0_distance = l0_distance(d.executed, proposed, spec);
  return d;
}

/// Admissibility mask over candidates, applied before sampling. If nothing is
/// admissible, NoOp entries are forced open.
inline std::vector<bool> cbf_mask(const EnvState& state, const std::vector<Action>& candidates,
                                  const GridSpec& spec, const EnvConfig& env_cfg, const ShieldConfig& cfg) {
  std::vector<bool> mask(candidates.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    mask[i] = is_admissible(state, candidates[i], spec, env_cfg, cfg);
    any = any || mask[i];
  }
  if (!any)
    for (std::size_t i = 0; i < candidates.size(); ++i) mask[i] = candidates[i].is_noop();
  return mask;
}

/// Dispatches on the shield mode. Off and CbfMask never veto: Off is the
/// identity, and under CbfMask the proposal was already drawn from the
/// masked set.
inline ShieldDecision shield_decide(const EnvState& state, const Action& proposed, const GridSpec& spec,
                                    const EnvConfig& env_cfg, const ShieldConfig& cfg) {
  if (cfg.mode == ShieldMode::Veto || cfg.mode == ShieldMode::Projection)
    return project(state, proposed, spec, env_cfg, cfg);
  ShieldDecision d;
  d.proposed = proposed;
  d.executed = proposed;
  d.predicted_rho_max = is_feasible(state, proposed, spec, env_cfg)
                            ? predict(state, proposed, spec, env_cfg).max_rho()
                            : predict(state, Action::noop(), spec, env_cfg).max_rho();
  if (cfg.mode == ShieldMode::CbfMask) d.last_resort = !(d.predicted_rho_max <= cfg.rho_max);
  return d;
}

}  // namespace gridshield
