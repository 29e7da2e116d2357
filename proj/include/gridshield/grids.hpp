#pragma once

// Builtin grids: toy5 (hand-built, oracle scale), train14 (synthetic training
// grid) and large36 (synthetic zero-shot target).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridshield/environment.hpp"

namespace gridshield {

/// Parameters of a synthetic grid.
///
/// Buses are scattered uniformly in the unit square and joined in a ring
/// along a nearest-neighbour tour; the shortest remaining pairs are added as
/// chords until `lines` lines exist. Reactance grows with distance. Bus 0 is the slack
/// and hosts half of the generation fleet; the other generators sit on
/// random buses and every remaining bus carries a load.
///
/// Thermal limits come from the base-dispatch flows and from the flows after
/// losing the critical line (the line pinned at `target_rho`, which the
/// stress scenario trips first). Every line stays below `target_rho` at base
/// and below `contingency_rho_hi` after the trip, except one victim line that
/// is driven to `victim_rho`. The recipe seed is advanced until tripping the
/// victim overloads the rest of the network while some other single
/// switching action brings every line to at most `remedy_rho`.
struct GridRecipe {
  std::string name;
  int buses = 14;
  int lines = 20;
  int generators = 3;
  std::uint64_t seed = 14;
  double target_rho = 0.6;
  double base_rho_lo = 0.3;
  double base_rho_hi = 0.55;
  double contingency_rho_lo = 0.5;
  double contingency_rho_hi = 0.9;
  double victim_rho = 1.12;
  double remedy_rho = 0.9;
  double capacity_margin = 1.6;  // total p_max / total base demand
};

namespace detail {

inline double bus_distance(const std::vector<std::pair<double, double>>& xy, int a, int b) {
  const double dx = xy[static_cast<std::size_t>(a)].first - xy[static_cast<std::size_t>(b)].first;
  const double dy = xy[static_cast<std::size_t>(a)].second - xy[static_cast<std::size_t>(b)].second;
  return std::sqrt(dx * dx + dy * dy);
}

inline std::vector<double> base_flows(const GridSpec& spec, const LineStatus& status) {
  EnvState s = reset(spec, EnvConfig{}, 0);
  s.line_status = status;
  return solve_state(spec, s).flows;
}

inline bool islands(const GridSpec& spec, const LineStatus& status) {
  EnvState s = reset(spec, EnvConfig{}, 0);
  s.line_status = status;
  return !solve_state(spec, s).feasible;
}

// Topology, electrical parameters and injections; limits are left at 1.
inline GridSpec synthesize_topology(const GridRecipe& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = r.buses;

  std::vector<std::pair<double, double>> xy(static_cast<std::size_t>(n));
  for (auto& p : xy) p = {unit(rng), unit(rng)};

  GridSpec spec;
  spec.name = r.name;
  for (int b = 0; b < n; ++b) spec.buses.push_back(b);
  spec.slack_bus = 0;

  std::vector<std::pair<int, int>> edges;
  auto has_edge = [&](int a, int b) {
    return std::find(edges.begin(), edges.end(), std::make_pair(std::min(a, b), std::max(a, b))) != edges.end();
  };
  // Backbone: a nearest-neighbour tour closed into a ring, so no single line
  // is a bridge.
  std::vector<bool> visited(static_cast<std::size_t>(n), false);
  std::vector<int> tour{0};
  visited[0] = true;
  for (int k = 1; k < n; ++k) {
    const int at = tour.back();
    int next = -1;
    double best = 1e300;
    for (int b = 0; b < n; ++b) {
      if (visited[static_cast<std::size_t>(b)]) continue;
      const double d = bus_distance(xy, at, b);
      if (d < best) {
        best = d;
        next = b;
      }
    }
    visited[static_cast<std::size_t>(next)] = true;
    tour.push_back(next);
  }
  for (std::size_t i = 0; i < tour.size(); ++i) {
    const int a = tour[i];
    const int b = tour[(i + 1) % tour.size()];
    if (a != b && !has_edge(a, b)) edges.emplace_back(std::min(a, b), std::max(a, b));
  }

  std::vector<std::pair<double, std::pair<int, int>>> extra;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (!has_edge(a, b)) extra.push_back({bus_distance(xy, a, b), {a, b}});
  std::sort(extra.begin(), extra.end());
  for (std::size_t i = 0; static_cast<int>(edges.size()) < r.lines && i < extra.size(); ++i)
    edges.push_back(extra[i].second);
  std::sort(edges.begin(), edges.end());

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double d = bus_distance(xy, edges[i].first, edges[i].second);
    const double x = 0.02 + 0.1 * d * (0.8 + 0.4 * unit(rng));
    spec.lines.push_back({static_cast<int>(i), edges[i].first, edges[i].second, 1.0 / x, 1.0});
  }

  std::vector<int> gen_buses{0};
  std::vector<int> pool;
  for (int b = 1; b < n; ++b) pool.push_back(b);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (int g = 1; g < r.generators && g - 1 < static_cast<int>(pool.size()); ++g)
    gen_buses.push_back(pool[static_cast<std::size_t>(g - 1)]);

  double demand = 0.0;
  for (int b = 0; b < n; ++b) {
    if (std::find(gen_buses.begin(), gen_buses.end(), b) != gen_buses.end()) continue;
    const double d = 0.1 + 0.3 * unit(rng);
    spec.loads.push_back({static_cast<int>(spec.loads.size()), b, d});
    demand += d;
  }

  const double capacity = r.capacity_margin * demand;
  for (std::size_t g = 0; g < gen_buses.size(); ++g) {
    const double share = gen_buses.size() == 1 ? 1.0
                         : g == 0            ? 0.5
                                             : 0.5 / static_cast<double>(gen_buses.size() - 1);
    const double p_max = capacity * share;
    spec.generators.push_back({static_cast<int>(g), gen_buses[g], 0.0, p_max, 0.2 * p_max});
  }
  return spec;
}

// Sizes limits around one contingency. Returns false if this topology cannot
// host the designed weakness.
inline bool size_limits(GridSpec& spec, const GridRecipe& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t m = spec.line_count();
  const LineStatus all = all_in_service(spec);
  const auto f0 = base_flows(spec, all);

  double mean_flow = 0.0;
  for (double f : f0) mean_flow += std::abs(f);
  mean_flow /= static_cast<double>(std::max<std::size_t>(1, m));
  const double floor_flow = 0.25 * mean_flow;

  // Critical line: the heaviest line whose loss keeps the grid whole.
  int critical = -1;
  for (std::size_t l = 0; l < m; ++l) {
    LineStatus st = all;
    st[l] = false;
    if (islands(spec, st)) continue;
    if (critical < 0 || std::abs(f0[l]) > std::abs(f0[static_cast<std::size_t>(critical)])) critical = static_cast<int>(l);
  }
  if (critical < 0) return false;
  const auto c = static_cast<std::size_t>(critical);
  LineStatus after = all;
  after[c] = false;
  const auto f1 = base_flows(spec, after);

  // Victim: the line that gains the most relative flow, provided its base
  // loading at the victim limit stays under the critical line's.
  int victim = -1;
  double best_gain = 0.0;
  for (std::size_t l = 0; l < m; ++l) {
    if (l == c) continue;
    const double base_rho = r.victim_rho * std::abs(f0[l]) / std::abs(f1[l]);
    if (!(base_rho < r.base_rho_hi) || std::abs(f1[l]) < floor_flow) continue;
    const double gain = std::abs(f1[l]) / std::max(std::abs(f0[l]), 1e-12);
    if (victim < 0 || gain > best_gain) {
      victim = static_cast<int>(l);
      best_gain = gain;
    }
  }
  if (victim < 0) return false;

  for (std::size_t l = 0; l < m; ++l) {
    double limit;
    if (l == c) {
      limit = std::abs(f0[l]) / r.target_rho;
    } else if (static_cast<int>(l) == victim) {
      limit = std::abs(f1[l]) / r.victim_rho;
    } else {
      const double u = r.base_rho_lo + (r.base_rho_hi - r.base_rho_lo) * unit(rng);
      const double v = r.contingency_rho_lo + (r.contingency_rho_hi - r.contingency_rho_lo) * unit(rng);
      limit = std::max({std::abs(f0[l]) / u, std::abs(f1[l]) / v, floor_flow / u});
    }
    spec.lines[l].thermal_limit = limit;
  }

  // Tripping the victim itself must cascade, and some other single
  // switching action must clear the overload.
  auto peak_without = [&](std::size_t d) {
    LineStatus st = after;
    st[d] = false;
    if (islands(spec, st)) return std::numeric_limits<double>::infinity();
    const auto f2 = base_flows(spec, st);
    double peak = 0.0;
    for (std::size_t l = 0; l < m; ++l) peak = std::max(peak, std::abs(f2[l]) / spec.lines[l].thermal_limit);
    return peak;
  };
  const auto v = static_cast<std::size_t>(victim);
  if (peak_without(v) <= 1.0) return false;
  for (std::size_t d = 0; d < m; ++d)
    if (d != c && d != v && peak_without(d) <= r.remedy_rho) return true;
  return false;
}

}  // namespace detail

inline GridSpec synthesize_grid(const GridRecipe& r) {
  for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
    const std::uint64_t seed = r.seed + attempt;
    GridSpec spec = detail::synthesize_topology(r, seed);
    std::mt19937_64 rng(seed ^ 0x5EEDu);
    if (detail::size_limits(spec, r, rng)) return spec;
  }
  throw GridError("synthesize_grid: no admissible layout for recipe '" + r.name + "'");
}

/// Hand-built 5-bus ring with one chord, small enough to solve by hand.
/// Base dispatch loads line 1 to rho ~= 0.60.
inline GridSpec toy5_grid() {
  GridSpec s;
  s.name = "toy5";
  s.buses = {0, 1, 2, 3, 4};
  s.slack_bus = 0;
  s.lines = {{0, 0, 1, 10.0, 0.6}, {1, 0, 2, 8.0, 0.8}, {2, 1, 2, 5.0, 0.5},
             {3, 1, 3, 10.0, 0.4}, {4, 2, 4, 8.0, 0.4}, {5, 3, 4, 5.0, 0.5}};
  s.generators = {{0, 0, 0.0, 2.0, 0.4}, {1, 3, 0.0, 1.0, 0.2}};
  s.loads = {{0, 1, 0.3}, {1, 2, 0.5}, {2, 4, 0.4}};
  return s;
}

inline GridRecipe train14_recipe() {
  GridRecipe r;
  r.name = "train14";
  r.seed = 14;
  return r;
}
inline GridRecipe large36_recipe() {
  GridRecipe r;
  r.name = "large36";
  r.buses = 36;
  r.lines = 55;
  r.generators = 6;
  r.seed = 36;
  return r;
}

class UnknownGridError : public GridError {
public:
  using GridError::GridError;
};

inline std::vector<std::string> builtin_grid_names() { return {"toy5", "train14", "large36"}; }

inline GridSpec builtin_grid(const std::string& name) {
  if (name == "toy5") return toy5_grid();
  if (name == "train14") return synthesize_grid(train14_recipe());
  if (name == "large36") return synthesize_grid(large36_recipe());
  throw UnknownGridError("unknown builtin grid '" + name + "' (expected toy5, train14 or large36)");
}

}  // namespace gridshield
