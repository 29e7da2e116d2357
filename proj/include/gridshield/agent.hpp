#pragma once

// Size-invariant observation, abstract intents and their grounding, and the
// execution variants that pair a proposer with a shield mode.

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gridshield/environment.hpp"
#include "gridshield/policy.hpp"
#include "gridshield/shield.hpp"

namespace gridshield {

inline constexpr int kTopK = 5;
inline constexpr int kFeatureSize = 11;
inline constexpr double kHighLoading = 0.9;

/// [top-5 rho desc (zero padded), share of lines with rho > 0.9, mean rho,
///  margin, share of lines out, demand / total p_max, time remaining share]
using FeatureVector = std::array<double, kFeatureSize>;

inline FeatureVector extract_features(const EnvState& s, const GridSpec& spec, const EnvConfig& cfg) {
  FeatureVector f{};
  const auto& rho = s.last_solution.rho;
  const std::size_t n = rho.size();

  std::vector<double> sorted(rho.begin(), rho.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  for (std::size_t i = 0; i < static_cast<std::size_t>(kTopK) && i < n; ++i) f[i] = sorted[i];

  const double lines = n == 0 ? 1.0 : static_cast<double>(n);
  double high = 0.0, sum = 0.0, out = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    if (rho[l] > kHighLoading) high += 1.0;
    sum += rho[l];
    if (!s.line_status[l]) out += 1.0;
  }
  f[5] = high / lines;
  f[6] = sum / lines;
  f[7] = n == 0 ? 1.0 : safety_margin(rho);
  f[8] = out / lines;
  const double demand = std::accumulate(s.load_demands.begin(), s.load_demands.end(), 0.0);
  const double cap = spec.total_p_max();
  f[9] = cap > 0.0 ? demand / cap : 0.0;
  f[10] = static_cast<double>(cfg.horizon - s.t) / static_cast<double>(cfg.horizon);
  return f;
}

enum class AbstractAction { Hold = 0, RelieveRank1, RelieveRank2, RelieveRank3, RestoreLine };
inline constexpr int kAbstractCount = 5;

inline const char* to_string(AbstractAction a) {
  switch (a) {
    case AbstractAction::Hold: return "hold";
    case AbstractAction::RelieveRank1: return "relieve1";
    case AbstractAction::RelieveRank2: return "relieve2";
    case AbstractAction::RelieveRank3: return "relieve3";
    case AbstractAction::RestoreLine: return "restore";
  }
  return "?";
}

enum class AgentVariant { Flat, ShieldOnly, HierarchyOnly, HierarchyShield, HierarchyCbf };

inline const char* to_string(AgentVariant v) {
  switch (v) {
    case AgentVariant::Flat: return "flat";
    case AgentVariant::ShieldOnly: return "shield_only";
    case AgentVariant::HierarchyOnly: return "hierarchy_only";
    case AgentVariant::HierarchyShield: return "hierarchy_shield";
    case AgentVariant::HierarchyCbf: return "hierarchy_cbf";
  }
  return "?";
}

inline std::optional<AgentVariant> parse_variant(const std::string& s) {
  for (auto v : {AgentVariant::Flat, AgentVariant::ShieldOnly, AgentVariant::HierarchyOnly,
                 AgentVariant::HierarchyShield, AgentVariant::HierarchyCbf})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

inline bool uses_policy(AgentVariant v) { return v != AgentVariant::ShieldOnly; }

/// The shield mode each variant runs with.
inline ShieldMode shield_mode_for(AgentVariant v) {
  switch (v) {
    case AgentVariant::Flat:
    case AgentVariant::HierarchyOnly: return ShieldMode::Off;
    case AgentVariant::ShieldOnly: return ShieldMode::Veto;
    case AgentVariant::HierarchyShield: return ShieldMode::Projection;
    case AgentVariant::HierarchyCbf: return ShieldMode::CbfMask;
  }
  return ShieldMode::Off;
}

inline ShieldConfig shield_for(AgentVariant v, ShieldConfig base) {
  base.mode = shield_mode_for(v);
  return base;
}

/// How intents become primitives. Direct maps RelieveRank-k straight onto
/// disconnecting the k-th most loaded line; Lookahead searches that line's
/// neighbourhood with the one-step predictor.
enum class Grounding { Direct, Lookahead };

inline Grounding grounding_for(AgentVariant v) {
  return v == AgentVariant::Flat ? Grounding::Direct : Grounding::Lookahead;
}

/// In-service lines ordered by current loading (descending, ties by index).
inline std::vector<int> lines_by_loading(const EnvState& s) {
  std::vector<int> idx;
  for (std::size_t l = 0; l < s.line_status.size(); ++l)
    if (s.line_status[l]) idx.push_back(static_cast<int>(l));
  const auto& rho = s.last_solution.rho;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return rho[static_cast<std::size_t>(a)] > rho[static_cast<std::size_t>(b)];
  });
  return idx;
}

/// In-service lines touching a bus within one in-service hop of the target
/// line's endpoints. Includes the target itself.
inline std::vector<int> line_neighbourhood(const EnvState& s, const GridSpec& spec, int target) {
  std::vector<bool> near(spec.bus_count(), false);
  const auto& tl = spec.lines[static_cast<std::size_t>(target)];
  near[static_cast<std::size_t>(tl.from_bus)] = true;
  near[static_cast<std::size_t>(tl.to_bus)] = true;
  std::vector<bool> ring = near;
  for (std::size_t l = 0; l < spec.line_count(); ++l) {
    if (!s.line_status[l]) continue;
    const auto f = static_cast<std::size_t>(spec.lines[l].from_bus);
    const auto t = static_cast<std::size_t>(spec.lines[l].to_bus);
    if (near[f]) ring[t] = true;
    if (near[t]) ring[f] = true;
  }
  std::vector<int> out;
  for (std::size_t l = 0; l < spec.line_count(); ++l) {
    if (!s.line_status[l]) continue;
    if (ring[static_cast<std::size_t>(spec.lines[l].from_bus)] || ring[static_cast<std::size_t>(spec.lines[l].to_bus)])
      out.push_back(static_cast<int>(l));
  }
  return out;
}

/// Reconnects the line that has been out longest among those off cooldown.
inline Action restore_action(const EnvState& s, const GridSpec& spec, const EnvConfig& cfg) {
  int best = -1;
  for (std::size_t l = 0; l < spec.line_count(); ++l) {
    const auto a = Action::reconnect(static_cast<int>(l));
    if (!is_feasible(s, a, spec, cfg)) continue;
    if (best < 0 || s.out_since[l] < s.out_since[static_cast<std::size_t>(best)]) best = static_cast<int>(l);
  }
  return best < 0 ? Action::noop() : Action::reconnect(best);
}

inline Action ground_action(AbstractAction intent, const EnvState& s, const GridSpec& spec,
                            const EnvConfig& cfg, Grounding style = Grounding::Lookahead) {
  switch (intent) {
    case AbstractAction::Hold: return Action::noop();
    case AbstractAction::RestoreLine: return restore_action(s, spec, cfg);
    case AbstractAction::RelieveRank1:
    case AbstractAction::RelieveRank2:
    case AbstractAction::RelieveRank3: break;
  }
  const auto rank = static_cast<std::size_t>(static_cast<int>(intent) - static_cast<int>(AbstractAction::RelieveRank1));
  const auto ranked = lines_by_loading(s);
  if (rank >= ranked.size()) return Action::noop();
  const int target = ranked[rank];
  if (style == Grounding::Direct) return Action::disconnect(target);

  // Greedy lookahead without admissibility filtering.
  Action best = Action::noop();
  double best_rho = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int l : line_neighbourhood(s, spec, target)) {
    const auto a = Action::disconnect(l);
    const double r = predict(s, a, spec, cfg).max_rho();
    if (!found || r < best_rho) {
      best = a;
      best_rho = r;
      found = true;
    }
  }
  return best;
}

inline std::array<Action, kAbstractCount> ground_all(const EnvState& s, const GridSpec& spec,
                                                     const EnvConfig& cfg, Grounding style) {
  std::array<Action, kAbstractCount> out;
  for (int i = 0; i < kAbstractCount; ++i) out[static_cast<std::size_t>(i)] = ground_action(static_cast<AbstractAction>(i), s, spec, cfg, style);
  return out;
}

struct ActResult {
  ShieldDecision decision;
  std::optional<int> intent;         // sampled abstract action, if a policy proposed
  std::vector<double> features;      // policy input at this step
  std::vector<bool> mask;            // intent mask the sample was drawn under (empty = none)
};

/// One pass of the inference loop: propose, shield, return the executed
/// action with provenance. `params` is ignored by ShieldOnly.
inline ActResult act(AgentVariant variant, const PolicyParams& params, const EnvState& s, const GridSpec& spec,
                     const EnvConfig& env_cfg, const ShieldConfig& base_shield, Rng& rng) {
  ActResult r;
  const ShieldConfig shield = shield_for(variant, base_shield);

  if (variant == AgentVariant::ShieldOnly) {
    const auto actions = enumerate_actions(spec, env_cfg);
    std::vector<Action> feasible;
    for (const auto& a : actions)
      if (is_feasible(s, a, spec, env_cfg)) feasible.push_back(a);
    const auto pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(feasible.size()));
    r.decision = shield_decide(s, feasible[std::min(pick, feasible.size() - 1)], spec, env_cfg, shield);
    return r;
  }

  const auto fv = extract_features(s, spec, env_cfg);
  r.features.assign(fv.begin(), fv.end());
  const auto logits = policy_logits(params, r.features);
  const Grounding style = grounding_for(variant);

  if (variant == AgentVariant::HierarchyCbf) {
    const auto grounded = ground_all(s, spec, env_cfg, style);
    r.mask = cbf_mask(s, std::vector<Action>(grounded.begin(), grounded.end()), spec, env_cfg, shield);
    const auto dist = action_distribution(logits, r.mask);
    const int k = sample_categorical(dist, rng);
    r.intent = k;
    r.decision = shield_decide(s, grounded[static_cast<std::size_t>(k)], spec, env_cfg, shield);
    return r;
  }

  const auto dist = action_distribution(logits);
  const int k = sample_categorical(dist, rng);
  r.intent = k;
  const auto proposal = ground_action(static_cast<AbstractAction>(k), s, spec, env_cfg, style);
  r.decision = shield_decide(s, proposal, spec, env_cfg, shield);
  return r;
}

}  // namespace gridshield
