#pragma once

// Feed-forward categorical policy: affine -> ReLU -> ... -> affine -> softmax.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace gridshield {

/// Layer sizes [in, hidden..., out] and a flat parameter vector laid out as
/// W0 (out x in, row-major), b0, W1, b1, ...
struct PolicyParams {
  std::vector<int> sizes;
  std::vector<double> values;

  std::size_t layer_count() const { return sizes.size() < 2 ? 0 : sizes.size() - 1; }
  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }

  bool operator==(const PolicyParams&) const = default;
};

inline std::size_t parameter_count(std::span<const int> sizes) {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k)
    n += static_cast<std::size_t>(sizes[k + 1]) * static_cast<std::size_t>(sizes[k] + 1);
  return n;
}

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
inline PolicyParams init_params(std::vector<int> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("init_params: need at least input and output sizes");
  PolicyParams p;
  p.sizes = std::move(sizes);
  p.values.reserve(parameter_count(p.sizes));
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < p.sizes.size(); ++k) {
    const int in = p.sizes[k];
    const int out = p.sizes[k + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-s, s);
    for (int i = 0; i < out * in; ++i) p.values.push_back(u(rng));
    for (int i = 0; i < out; ++i) p.values.push_back(0.0);
  }
  return p;
}

inline PolicyParams zero_params(std::vector<int> sizes) {
  PolicyParams p;
  p.sizes = std::move(sizes);
  p.values.assign(parameter_count(p.sizes), 0.0);
  return p;
}

inline bool shapes_consistent(const PolicyParams& p) {
  if (p.sizes.size() < 2) return false;
  for (int s : p.sizes)
    if (s <= 0) return false;
  return p.values.size() == parameter_count(p.sizes);
}

namespace detail {

// Activations per layer: acts[0] = input, acts[k] = post-ReLU output of
// hidden layer k, acts.back() = logits.
inline std::vector<std::vector<double>> forward_all(const PolicyParams& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.input_size()) throw std::invalid_argument("policy: input size mismatch");
  std::vector<std::vector<double>> acts;
  acts.reserve(p.sizes.size());
  acts.emplace_back(x.begin(), x.end());
  std::size_t off = 0;
  const std::size_t layers = p.layer_count();
  for (std::size_t k = 0; k < layers; ++k) {
    const auto in = static_cast<std::size_t>(p.sizes[k]);
    const auto out = static_cast<std::size_t>(p.sizes[k + 1]);
    const double* w = p.values.data() + off;
    const double* b = w + out * in;
    const auto& prev = acts.back();
    std::vector<double> y(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < in; ++j) s += w[i * in + j] * prev[j];
      y[i] = (k + 1 < layers && s < 0.0) ? 0.0 : s;
    }
    acts.push_back(std::move(y));
    off += out * (in + 1);
  }
  return acts;
}

}  // namespace detail

inline std::vector<double> policy_logits(const PolicyParams& p, std::span<const double> x) {
  return std::move(detail::forward_all(p, x).back());
}

/// Softmax with max-subtraction. Entries with mask[i] == false get zero
/// probability; an empty mask admits everything.
inline std::vector<double> action_distribution(std::span<const double> logits,
                                               const std::vector<bool>& mask = {}) {
  const bool masked = !mask.empty();
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked || mask[i]) top = std::max(top, logits[i]);
  std::vector<double> p(logits.size(), 0.0);
  if (!std::isfinite(top)) throw std::invalid_argument("action_distribution: nothing admitted");
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (masked && !mask[i]) continue;
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw. Zero-probability entries are never returned.
inline int sample_categorical(std::span<const double> dist, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    acc += dist[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  if (last < 0) throw std::invalid_argument("sample_categorical: empty distribution");
  return last;
}

/// Accumulates scale * d/dtheta log pi(action | x) into grad (same layout as
/// params.values). Returns log pi(action | x).
inline double accumulate_log_prob_gradient(const PolicyParams& p, std::span<const double> x, int action,
                                           const std::vector<bool>& mask, double scale,
                                           std::span<double> grad) {
  const auto acts = detail::forward_all(p, x);
  const auto& logits = acts.back();
  const auto probs = action_distribution(logits, mask);
  const auto a = static_cast<std::size_t>(action);
  const double logp = std::log(probs[a]);

  // d log softmax_a / d logits = e_a - p (masked entries have p = 0 and no path).
  std::vector<double> delta(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) delta[i] = ((i == a) ? 1.0 : 0.0) - probs[i];
  if (!mask.empty())
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (!mask[i]) delta[i] = 0.0;

  std::vector<std::size_t> offsets(p.layer_count());
  std::size_t off = 0;
  for (std::size_t k = 0; k < p.layer_count(); ++k) {
    offsets[k] = off;
    off += static_cast<std::size_t>(p.sizes[k + 1]) * static_cast<std::size_t>(p.sizes[k] + 1);
  }

  for (std::size_t k = p.layer_count(); k-- > 0;) {
    const auto in = static_cast<std::size_t>(p.sizes[k]);
    const auto out = static_cast<std::size_t>(p.sizes[k + 1]);
    const double* w = p.values.data() + offsets[k];
    double* gw = grad.data() + offsets[k];
    double* gb = gw + out * in;
    const auto& prev = acts[k];
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i] * scale;
      if (d == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) gw[i * in + j] += d * prev[j];
      gb[i] += d;
    }
    if (k == 0) break;
    std::vector<double> back(in, 0.0);
    for (std::size_t j = 0; j < in; ++j) {
      if (prev[j] <= 0.0) continue;  // ReLU gate of the previous hidden layer
      double s = 0.0;
      for (std::size_t i = 0; i < out; ++i) s += w[i * in + j] * delta[i];
      back[j] = s;
    }
    delta = std::move(back);
  }
  return logp;
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// One adaptive-moment ascent step: theta += lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_ascent(std::vector<double>& theta, std::span<const double> grad, AdamState& st,
                        const AdamConfig& cfg) {
  if (st.m.size() != theta.size()) {
    st.m.assign(theta.size(), 0.0);
    st.v.assign(theta.size(), 0.0);
    st.step = 0;
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    theta[i] += cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
  }
}

}  // namespace gridshield
