#pragma once

// REINFORCE with a per-timestep mean-return baseline and Adam.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gridshield/rollout.hpp"

namespace gridshield {

class DegenerateBatchError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  double learning_rate = 3e-4;
  double gamma = 0.99;
  int episodes_per_update = 32;
  int total_updates = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<int> hidden = {64, 64};

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

/// sum_t gamma^t r_t
inline double discounted_return(std::span<const double> rewards, double gamma) {
  double g = 0.0, w = 1.0;
  for (double r : rewards) {
    g += w * r;
    w *= gamma;
  }
  return g;
}

/// G_t = r_t + gamma G_{t+1} for every t.
inline std::vector<double> returns_to_go(const Trajectory& traj, double gamma) {
  std::vector<double> g(traj.size());
  double acc = 0.0;
  for (std::size_t t = traj.size(); t-- > 0;) {
    acc = traj[t].reward + gamma * acc;
    g[t] = acc;
  }
  return g;
}

/// G_t - b_t, where b_t is the batch mean of G_t over the trajectories that
/// reached step t. The mean is accumulated incrementally so that equal
/// returns give exactly zero advantage; Adam would otherwise amplify the
/// rounding residue into a full-size step.
inline std::vector<std::vector<double>> compute_advantages(const std::vector<Trajectory>& batch, double gamma) {
  std::vector<std::vector<double>> adv;
  adv.reserve(batch.size());
  std::vector<double> mean;
  std::vector<int> count;
  for (const auto& traj : batch) {
    adv.push_back(returns_to_go(traj, gamma));
    if (adv.back().size() > mean.size()) {
      mean.resize(adv.back().size(), 0.0);
      count.resize(adv.back().size(), 0);
    }
    for (std::size_t t = 0; t < adv.back().size(); ++t) {
      ++count[t];
      mean[t] += (adv.back()[t] - mean[t]) / count[t];
    }
  }
  for (auto& a : adv)
    for (std::size_t t = 0; t < a.size(); ++t) a[t] -= mean[t];
  return adv;
}

/// (1/N) sum_traj sum_t A_t grad log pi(a_t | x_t).
inline std::vector<double> surrogate_gradient(const PolicyParams& params, const std::vector<Trajectory>& batch,
                                              const std::vector<std::vector<double>>& advantages) {
  if (batch.empty()) throw DegenerateBatchError("policy gradient: empty batch");
  std::vector<double> grad(params.values.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t t = 0; t < batch[i].size(); ++t) {
      const double a = advantages[i][t];
      if (a == 0.0) continue;
      const auto& st = batch[i][t];
      accumulate_log_prob_gradient(params, st.features, st.action, st.mask, a * inv_n, grad);
    }
  return grad;
}

struct UpdateStats {
  double mean_return = 0.0;  // mean undiscounted episode reward in the batch
  double grad_norm = 0.0;
};

/// Policy parameters plus optimiser moments.
struct Learner {
  PolicyParams params;
  AdamState adam;
};

/// Process-wide count of applied updates; evaluation code must leave it unchanged.
inline std::atomic<long>& update_counter() {
  static std::atomic<long> n{0};
  return n;
}

inline UpdateStats policy_gradient_update(Learner& learner, const std::vector<Trajectory>& batch,
                                          const TrainConfig& cfg) {
  if (batch.empty()) throw DegenerateBatchError("policy_gradient_update: zero trajectories");
  ++update_counter();
  UpdateStats st;
  for (const auto& traj : batch)
    for (const auto& s : traj) st.mean_return += s.reward;
  st.mean_return /= static_cast<double>(batch.size());

  const auto adv = compute_advantages(batch, cfg.gamma);
  const auto grad = surrogate_gradient(learner.params, batch, adv);
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  st.grad_norm = std::sqrt(sq);
  adam_ascent(learner.params.values, grad, learner.adam, cfg.adam());
  return st;
}

struct TrainResult {
  PolicyParams params;
  std::vector<UpdateStats> history;
};

inline std::vector<int> policy_sizes(const TrainConfig& cfg) {
  std::vector<int> sizes{kFeatureSize};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(kAbstractCount);
  return sizes;
}

/// Trains on a single grid. Each batch runs through the same act pathway as
/// evaluation, so a shielded variant is also shielded while learning.
inline TrainResult train(const GridSpec& spec, const EnvConfig& env_cfg, const TrainConfig& train_cfg,
                         const ShieldConfig& shield_cfg, AgentVariant variant, std::uint64_t seed) {
  if (!uses_policy(variant)) throw std::invalid_argument("train: variant has no learned policy");
  TrainResult out;
  Learner learner{init_params(policy_sizes(train_cfg), derive_seed(seed, 1, 0)), {}};
  std::uint64_t episode = 0;
  for (int u = 0; u < train_cfg.total_updates; ++u) {
    std::vector<Trajectory> batch;
    batch.reserve(static_cast<std::size_t>(train_cfg.episodes_per_update));
    for (int e = 0; e < train_cfg.episodes_per_update; ++e) {
      auto r = run_rollout(spec, env_cfg, variant, learner.params, shield_cfg, derive_seed(seed, 2, episode++));
      batch.push_back(std::move(r.trajectory));
    }
    out.history.push_back(policy_gradient_update(learner, batch, train_cfg));
  }
  out.params = std::move(learner.params);
  return out;
}

}  // namespace gridshield
