#pragma once

// Static network description and the DC power-flow kernel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridshield {

class GridError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when the reduced susceptance matrix of the slack component has a
/// pivot below kSingularPivot. Only a malformed spec can produce this.
class SingularSystemError : public GridError {
public:
  using GridError::GridError;
};

class ValidationError : public GridError {
public:
  explicit ValidationError(std::vector<std::string> violations)
      : GridError(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid grid spec";
    for (const auto& s : v) out += "; " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

inline constexpr double kSingularPivot = 1e-12;

struct LineSpec {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 1.0;   // per-unit
  double thermal_limit = 1.0; // per-unit MW magnitude

  bool operator==(const LineSpec&) const = default;
};

struct GenSpec {
  int id = 0;
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double ramp_limit = 1.0; // per step

  bool operator==(const GenSpec&) const = default;
};

struct LoadSpec {
  int id = 0;
  int bus = 0;
  double base_demand = 0.0;

  bool operator==(const LoadSpec&) const = default;
};

/// Buses are identified by contiguous ids 0..n-1; `buses` lists them.
struct GridSpec {
  std::string name;
  std::vector<int> buses;
  std::vector<LineSpec> lines;
  std::vector<GenSpec> generators;
  std::vector<LoadSpec> loads;
  int slack_bus = 0;

  std::size_t bus_count() const { return buses.size(); }
  std::size_t line_count() const { return lines.size(); }

  double total_base_demand() const {
    double d = 0.0;
    for (const auto& l : loads) d += l.base_demand;
    return d;
  }
  double total_p_max() const {
    double p = 0.0;
    for (const auto& g : generators) p += g.p_max;
    return p;
  }

  bool operator==(const GridSpec&) const = default;
};

using LineStatus = std::vector<bool>;

inline LineStatus all_in_service(const GridSpec& spec) {
  return LineStatus(spec.line_count(), true);
}

// ---------------------------------------------------------------------------
// Connectivity

class UnionFind {
public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void merge(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

  std::size_t size() const { return parent_.size(); }

private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

/// Component label per bus. Labels are dense and ordered by the smallest bus
/// id in each component, so label 0 always contains bus 0.
inline std::vector<int> component_labels(const GridSpec& spec, const LineStatus& status) {
  const std::size_t n = spec.bus_count();
  UnionFind uf(n);
  for (std::size_t l = 0; l < spec.line_count(); ++l) {
    if (!status[l]) continue;
    uf.merge(static_cast<std::size_t>(spec.lines[l].from_bus),
             static_cast<std::size_t>(spec.lines[l].to_bus));
  }
  std::vector<int> root_label(n, -1);
  std::vector<int> labels(n, -1);
  int next = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t r = uf.find(b);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[b] = root_label[r];
  }
  return labels;
}

/// Maximal connected bus sets over in-service lines, ordered by smallest id.
inline std::vector<std::vector<int>> connected_components(const GridSpec& spec,
                                                          const LineStatus& status) {
  const auto labels = component_labels(spec, status);
  const int count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> comps(static_cast<std::size_t>(count));
  for (std::size_t b = 0; b < labels.size(); ++b)
    comps[static_cast<std::size_t>(labels[b])].push_back(static_cast<int>(b));
  return comps;
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_spec(const GridSpec& spec) {
  ValidationResult r;
  auto fail = [&r](std::string msg) { r.violations.push_back(std::move(msg)); };
  const int n = static_cast<int>(spec.bus_count());

  if (n == 0) fail("buses: no buses declared");
  for (int i = 0; i < n; ++i) {
    if (spec.buses[static_cast<std::size_t>(i)] != i) {
      fail("buses: ids must be 0..n-1 in order, found " +
           std::to_string(spec.buses[static_cast<std::size_t>(i)]) + " at position " +
           std::to_string(i));
      break;
    }
  }
  auto known_bus = [n](int b) { return b >= 0 && b < n; };

  for (std::size_t i = 0; i < spec.lines.size(); ++i) {
    const auto& l = spec.lines[i];
    const std::string tag = "line " + std::to_string(i);
    if (l.id != static_cast<int>(i)) fail(tag + ": id " + std::to_string(l.id) + " != index");
    if (!known_bus(l.from_bus)) fail(tag + ": unknown from_bus " + std::to_string(l.from_bus));
    if (!known_bus(l.to_bus)) fail(tag + ": unknown to_bus " + std::to_string(l.to_bus));
    if (l.from_bus == l.to_bus) fail(tag + ": from_bus equals to_bus");
    if (!(l.thermal_limit > 0.0)) fail(tag + ": thermal_limit must be > 0");
    if (!(l.susceptance > 0.0)) fail(tag + ": susceptance must be > 0");
  }
  for (std::size_t i = 0; i < spec.generators.size(); ++i) {
    const auto& g = spec.generators[i];
    const std::string tag = "generator " + std::to_string(i);
    if (!known_bus(g.bus)) fail(tag + ": unknown bus " + std::to_string(g.bus));
    if (!(g.p_min >= 0.0 && g.p_min <= g.p_max)) fail(tag + ": need 0 <= p_min <= p_max");
    if (!(g.ramp_limit > 0.0)) fail(tag + ": ramp_limit must be > 0");
  }
  for (std::size_t i = 0; i < spec.loads.size(); ++i) {
    const auto& d = spec.loads[i];
    const std::string tag = "load " + std::to_string(i);
    if (!known_bus(d.bus)) fail(tag + ": unknown bus " + std::to_string(d.bus));
    if (!(d.base_demand >= 0.0)) fail(tag + ": base_demand must be >= 0");
  }

  if (!known_bus(spec.slack_bus)) {
    fail("slack_bus: " + std::to_string(spec.slack_bus) + " is not a declared bus");
  } else {
    const bool hosts_gen =
        std::any_of(spec.generators.begin(), spec.generators.end(),
                    [&](const GenSpec& g) { return g.bus == spec.slack_bus; });
    if (!hosts_gen) fail("slack_bus: bus " + std::to_string(spec.slack_bus) + " hosts no generator");
  }

  // Connectivity only makes sense once every endpoint is a real bus.
  const bool endpoints_ok = std::all_of(spec.lines.begin(), spec.lines.end(), [&](const LineSpec& l) {
    return known_bus(l.from_bus) && known_bus(l.to_bus);
  });
  if (n > 0 && endpoints_ok) {
    const auto comps = connected_components(spec, all_in_service(spec));
    if (comps.size() > 1)
      fail("connectivity: network splits into " + std::to_string(comps.size()) +
           " components (bus " + std::to_string(comps[1].front()) + " unreachable from bus 0)");
  }
  return r;
}

inline void require_valid(const GridSpec& spec) {
  auto r = validate_spec(spec);
  if (!r.ok()) throw ValidationError(std::move(r.violations));
}

// ---------------------------------------------------------------------------
// DC power flow

struct PowerFlowSolution {
  std::vector<double> angles;      // radians, slack = 0
  std::vector<double> flows;       // signed, from -> to
  std::vector<double> rho;         // |flow| / limit
  std::vector<double> injections;  // after slack balancing
  bool feasible = true;

  bool operator==(const PowerFlowSolution&) const = default;
};

/// Per-line loading ratio |flow| / thermal_limit.
inline std::vector<double> loading_ratios(const GridSpec& spec, std::span<const double> flows) {
  std::vector<double> rho(flows.size());
  for (std::size_t l = 0; l < flows.size(); ++l)
    rho[l] = std::abs(flows[l]) / spec.lines[l].thermal_limit;
  return rho;
}

inline std::vector<double> loading_ratios(const GridSpec& spec, const PowerFlowSolution& sol) {
  return loading_ratios(spec, sol.flows);
}

inline double max_loading(std::span<const double> rho) {
  if (rho.empty()) throw std::invalid_argument("max_loading: empty vector");
  return *std::max_element(rho.begin(), rho.end());
}

/// m = 1 - max rho; negative when some line is overloaded.
inline double safety_margin(std::span<const double> rho) { return 1.0 - max_loading(rho); }

namespace detail {

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// A is row-major m x m.
inline void dense_solve(std::vector<double>& a, std::vector<double>& b, std::size_t m) {
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t piv = k;
    double best = std::abs(a[k * m + k]);
    for (std::size_t i = k + 1; i < m; ++i) {
      const double v = std::abs(a[i * m + k]);
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best < kSingularPivot)
      throw SingularSystemError("dc power flow: reduced susceptance matrix is singular (pivot " +
                                std::to_string(best) + ")");
    if (piv != k) {
      for (std::size_t j = 0; j < m; ++j) std::swap(a[k * m + j], a[piv * m + j]);
      std::swap(b[k], b[piv]);
    }
    const double inv = 1.0 / a[k * m + k];
    for (std::size_t i = k + 1; i < m; ++i) {
      const double f = a[i * m + k] * inv;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < m; ++j) a[i * m + j] -= f * a[k * m + j];
      b[i] -= f * b[k];
    }
  }
  for (std::size_t k = m; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < m; ++j) s -= a[k * m + j] * b[j];
    b[k] = s / a[k * m + k];
  }
}

}  // namespace detail

/// Solves B theta = P on the component holding the slack bus. The slack bus
/// absorbs the component's injection imbalance. Lines out of service, or
/// outside the slack component, carry zero flow. The solution is marked
/// infeasible when a load or generator is stranded off the slack component.
inline PowerFlowSolution solve_dc_power_flow(const GridSpec& spec,
                                             std::span<const double> injections,
                                             const LineStatus& status) {
  const std::size_t n = spec.bus_count();
  if (injections.size() != n) throw std::invalid_argument("solve_dc_power_flow: injection size mismatch");
  if (status.size() != spec.line_count())
    throw std::invalid_argument("solve_dc_power_flow: line status size mismatch");

  const auto labels = component_labels(spec, status);
  const int slack_label = labels[static_cast<std::size_t>(spec.slack_bus)];

  PowerFlowSolution sol;
  sol.angles.assign(n, 0.0);
  sol.flows.assign(spec.line_count(), 0.0);
  sol.injections.assign(injections.begin(), injections.end());

  for (const auto& g : spec.generators)
    if (labels[static_cast<std::size_t>(g.bus)] != slack_label) sol.feasible = false;
  for (const auto& d : spec.loads)
    if (labels[static_cast<std::size_t>(d.bus)] != slack_label) sol.feasible = false;

  // Reduced index: buses of the slack component, slack excluded.
  std::vector<int> reduced(n, -1);
  std::size_t m = 0;
  double imbalance = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] != slack_label) continue;
    imbalance += injections[b];
    if (static_cast<int>(b) != spec.slack_bus) reduced[b] = static_cast<int>(m++);
  }
  sol.injections[static_cast<std::size_t>(spec.slack_bus)] -= imbalance;

  if (m > 0) {
    std::vector<double> a(m * m, 0.0);
    std::vector<double> rhs(m, 0.0);
    for (std::size_t l = 0; l < spec.line_count(); ++l) {
      if (!status[l]) continue;
      const auto& ln = spec.lines[l];
      const auto f = static_cast<std::size_t>(ln.from_bus);
      const auto t = static_cast<std::size_t>(ln.to_bus);
      if (labels[f] != slack_label) continue;
      const int rf = reduced[f];
      const int rt = reduced[t];
      if (rf >= 0) a[static_cast<std::size_t>(rf) * m + static_cast<std::size_t>(rf)] += ln.susceptance;
      if (rt >= 0) a[static_cast<std::size_t>(rt) * m + static_cast<std::size_t>(rt)] += ln.susceptance;
      if (rf >= 0 && rt >= 0) {
        a[static_cast<std::size_t>(rf) * m + static_cast<std::size_t>(rt)] -= ln.susceptance;
        a[static_cast<std::size_t>(rt) * m + static_cast<std::size_t>(rf)] -= ln.susceptance;
      }
    }
    for (std::size_t b = 0; b < n; ++b)
      if (reduced[b] >= 0) rhs[static_cast<std::size_t>(reduced[b])] = sol.injections[b];
    detail::dense_solve(a, rhs, m);
    for (std::size_t b = 0; b < n; ++b)
      if (reduced[b] >= 0) sol.angles[b] = rhs[static_cast<std::size_t>(reduced[b])];
  }

  for (std::size_t l = 0; l < spec.line_count(); ++l) {
    if (!status[l]) continue;
    const auto& ln = spec.lines[l];
    if (labels[static_cast<std::size_t>(ln.from_bus)] != slack_label) continue;
    sol.flows[l] = ln.susceptance * (sol.angles[static_cast<std::size_t>(ln.from_bus)] -
                                     sol.angles[static_cast<std::size_t>(ln.to_bus)]);
  }
  sol.rho = loading_ratios(spec, sol.flows);
  return sol;
}

/// Net injection per bus: generation minus demand.
inline std::vector<double> bus_injections(const GridSpec& spec, std::span<const double> gen_output,
                                          std::span<const double> load_demand) {
  std::vector<double> p(spec.bus_count(), 0.0);
  for (std::size_t g = 0; g < spec.generators.size(); ++g)
    p[static_cast<std::size_t>(spec.generators[g].bus)] += gen_output[g];
  for (std::size_t d = 0; d < spec.loads.size(); ++d)
    p[static_cast<std::size_t>(spec.loads[d].bus)] -= load_demand[d];
  return p;
}

}  // namespace gridshield
