#pragma once

// Closed-loop episode execution shared by training and evaluation.

#include <cstdint>
#include <optional>
#include <vector>

#include "gridshield/agent.hpp"

namespace gridshield {

/// splitmix64 finaliser; used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return mix_seed(mix_seed(base ^ mix_seed(stream)) + index);
}

/// The agent's sampling stream is separate from the environment's noise
/// stream, so every variant sees the same disturbances for a given seed.
inline Rng agent_rng_for(std::uint64_t seed) { return Rng(derive_seed(seed, 0xA6E47, 0)); }

struct TrajectoryStep {
  std::vector<double> features;
  int action = 0;
  double reward = 0.0;
  std::vector<bool> mask;
};

using Trajectory = std::vector<TrajectoryStep>;

struct StepTrace {
  int t = 0;
  std::optional<int> intent;
  Action proposed;
  Action executed;
  bool vetoed = false;
  bool corrected = false;
  bool last_resort = false;
  double predicted_rho_max = 0.0;
  int l0_distance = 0;
  double max_rho = 0.0;  // realised after the step
  double margin = 0.0;
  double reward = 0.0;

  bool operator==(const StepTrace&) const = default;
};

struct Rollout {
  Trajectory trajectory;
  std::vector<StepTrace> trace;
  int steps = 0;
  double total_reward = 0.0;
  double initial_max_rho = 0.0;
  FailureMode failure = FailureMode::Unknown;
};

/// reset -> (act -> step)* until termination. Parameters are read-only.
inline Rollout run_rollout(const GridSpec& spec, const EnvConfig& env_cfg, AgentVariant variant,
                           const PolicyParams& params, const ShieldConfig& shield_cfg, std::uint64_t seed) {
  Rollout out;
  EnvState s = reset(spec, env_cfg, seed);
  Rng rng = agent_rng_for(seed);
  out.initial_max_rho = s.last_solution.rho.empty() ? 0.0 : max_loading(s.last_solution.rho);

  while (true) {
    const ActResult a = act(variant, params, s, spec, env_cfg, shield_cfg, rng);
    StepOutcome o = step(s, a.decision.executed, spec, env_cfg);

    StepTrace tr;
    tr.t = s.t;
    tr.intent = a.intent;
    tr.proposed = a.decision.proposed;
    tr.executed = o.applied;
    tr.vetoed = a.decision.vetoed;
    tr.corrected = a.decision.corrected;
    tr.last_resort = a.decision.last_resort;
    tr.predicted_rho_max = a.decision.predicted_rho_max;
    tr.l0_distance = a.decision.l0_distance;
    tr.max_rho = o.rho.empty() ? 0.0 : max_loading(o.rho);
    tr.margin = o.rho.empty() ? 1.0 : safety_margin(o.rho);
    tr.reward = o.reward;
    out.trace.push_back(tr);

    if (a.intent) out.trajectory.push_back({a.features, *a.intent, o.reward, a.mask});
    out.total_reward += o.reward;
    ++out.steps;
    s = std::move(o.next_state);
    if (o.terminated) {
      out.failure = o.failure.value_or(FailureMode::Unknown);
      break;
    }
  }
  return out;
}

}  // namespace gridshield
