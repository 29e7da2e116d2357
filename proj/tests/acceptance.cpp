// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails. `acceptance 1 7 10` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "test_support.hpp"

using namespace gridshield;
using namespace gstest;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void verdict(int n, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr int kEpisodes = 20;
constexpr std::uint64_t kSeed = 0;

// Shared state between criteria so that each policy is trained once.
struct Shared {
  RunConfig stress_run;           // stress suite config with trained policies filled in
  AggregateReport stress_report;  // criterion 5 run
  bool stress_ready = false;
  double stress_train_seconds = 0.0;
  double stress_total_seconds = 0.0;  // training plus the suite run
};

RunConfig base_run() {
  RunConfig c;
  c.seed = kSeed;
  c.episodes = kEpisodes;
  c.keep_trace = true;
  return c;
}

void ensure_stress(Shared& sh) {
  if (sh.stress_ready) return;
  const auto t0 = Clock::now();
  sh.stress_run = base_run();
  sh.stress_run.variants = suite_defaults(SuiteKind::Stress).variants;
  const GridSpec train_spec = resolve_grid(sh.stress_run.train_grid);
  for (auto v : sh.stress_run.variants)
    if (uses_policy(v)) sh.stress_run.policies[v] = policy_for(v, sh.stress_run, train_spec, true);
  sh.stress_train_seconds = seconds_since(t0);
  sh.stress_report = run_suite(SuiteKind::Stress, sh.stress_run);
  sh.stress_total_seconds = seconds_since(t0);
  sh.stress_ready = true;
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst_residual = 0.0, worst_conservation = 0.0, worst_superposition = 0.0;
  for (int g = 0; g < 100; ++g) {
    const int n = 5 + static_cast<int>(rng() % 46);
    const auto s = random_connected(rng, n, static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
    const auto st = all_in_service(s);
    const auto p1 = balanced_injections(rng, s.bus_count());
    const auto p2 = balanced_injections(rng, s.bus_count());
    std::vector<double> p12(p1.size());
    for (std::size_t k = 0; k < p1.size(); ++k) p12[k] = p1[k] + p2[k];
    const auto a = solve_dc_power_flow(s, p1, st);
    const auto b = solve_dc_power_flow(s, p2, st);
    const auto c = solve_dc_power_flow(s, p12, st);
    worst_residual = std::max(worst_residual, laplacian_residual(s, st, a));
    const auto div = flow_divergence(s, a.flows);
    for (std::size_t k = 0; k < div.size(); ++k)
      worst_conservation = std::max(worst_conservation, std::abs(div[k] - a.injections[k]));
    for (std::size_t l = 0; l < s.line_count(); ++l)
      worst_superposition = std::max(worst_superposition, std::abs(c.flows[l] - a.flows[l] - b.flows[l]));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_residual <= 1e-8 && worst_conservation <= 1e-8 && worst_superposition <= 1e-8 && secs < 10.0;
  verdict(1, pass,
          fmt("100 grids: residual %.2e, conservation %.2e, superposition %.2e (limit 1e-8); %.2f s (limit 10 s)",
              worst_residual, worst_conservation, worst_superposition, secs));
}

// Shield soundness on stressed HierarchyShield episodes.
void criterion2(Shared& sh) {
  ensure_stress(sh);
  const auto spec = resolve_grid("train14");
  EnvConfig env = sh.stress_run.env;
  env.stress_mode = true;
  const auto& params = sh.stress_run.policies.at(AgentVariant::HierarchyShield);
  const auto t0 = Clock::now();
  long steps = 0, last_resort = 0, unsound = 0;
  for (int i = 0; i < kEpisodes; ++i) {
    const auto ro = run_rollout(spec, env, AgentVariant::HierarchyShield, params, sh.stress_run.shield,
                                kSeed + static_cast<std::uint64_t>(i));
    for (const auto& t : ro.trace) {
      ++steps;
      if (t.last_resort) ++last_resort;
      else if (!(t.predicted_rho_max <= 0.98)) ++unsound;
    }
  }
  const double secs = seconds_since(t0);
  const double share = steps ? static_cast<double>(last_resort) / static_cast<double>(steps) : 0.0;
  verdict(2, unsound == 0 && share <= 0.05 && secs < 120.0,
          fmt("%d episodes, %ld steps: %ld unsound non-last-resort steps (limit 0); last-resort share %.4f (limit 0.05); "
              "%.1f s (limit 120 s)",
              kEpisodes, steps, unsound, share, secs));
}

// Independent correction oracle for the default candidate set (NoOp and every
// single-line disconnection).
struct OracleResult {
  bool any = false;
  std::size_t index = 0;
  int l0 = 0;
  double rho = 0.0;
  int min_l0 = std::numeric_limits<int>::max();
};

int oracle_l0(const Action& cand, const Action& proposed, std::size_t lines) {
  // Components: one per line status and one per generator setpoint.
  auto comp = [&](const Action& a) {
    std::vector<std::pair<int, double>> nz;  // (component, value)
    if (a.kind == ActionKind::DisconnectLine) nz.emplace_back(a.line, -1.0);
    if (a.kind == ActionKind::ReconnectLine) nz.emplace_back(a.line, 1.0);
    if (a.kind == ActionKind::Redispatch) nz.emplace_back(static_cast<int>(lines) + a.gen, a.delta);
    return nz;
  };
  const auto x = comp(cand), y = comp(proposed);
  std::set<int> keys;
  for (auto& [k, v] : x) keys.insert(k);
  for (auto& [k, v] : y) keys.insert(k);
  int d = 0;
  for (int k : keys) {
    double vx = 0.0, vy = 0.0;
    for (auto& [kk, v] : x)
      if (kk == k) vx = v;
    for (auto& [kk, v] : y)
      if (kk == k) vy = v;
    d += vx != vy;
  }
  return d;
}

OracleResult oracle_projection(const EnvState& st, const Action& proposed, const GridSpec& spec, double rho_max) {
  OracleResult best;
  std::vector<Action> cands{Action::noop()};
  for (std::size_t l = 0; l < spec.line_count(); ++l) cands.push_back(Action::disconnect(static_cast<int>(l)));
  const auto p = bus_injections(spec, st.gen_setpoints, st.load_demands);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    LineStatus status = st.line_status;
    if (cands[i].kind == ActionKind::DisconnectLine) {
      if (!status[static_cast<std::size_t>(cands[i].line)]) continue;
      status[static_cast<std::size_t>(cands[i].line)] = false;
    }
    const auto sol = solve_dc_power_flow(spec, p, status);
    if (!sol.feasible) continue;
    double peak = 0.0;
    for (std::size_t l = 0; l < spec.line_count(); ++l)
      peak = std::max(peak, std::abs(sol.flows[l]) / spec.lines[l].thermal_limit);
    if (peak > rho_max) continue;
    const int d = oracle_l0(cands[i], proposed, spec.line_count());
    best.min_l0 = std::min(best.min_l0, d);
    if (!best.any || std::make_tuple(d, peak, i) < std::make_tuple(best.l0, best.rho, best.index)) {
      best.any = true;
      best.index = i;
      best.l0 = d;
      best.rho = peak;
    }
  }
  return best;
}

// L0-minimality and tie-breaking of every correction in the criterion-2 run.
void criterion3(Shared& sh) {
  ensure_stress(sh);
  const auto spec = resolve_grid("train14");
  EnvConfig env = sh.stress_run.env;
  env.stress_mode = true;
  const auto& params = sh.stress_run.policies.at(AgentVariant::HierarchyShield);
  const ShieldConfig shield = shield_for(AgentVariant::HierarchyShield, sh.stress_run.shield);
  long vetoes = 0, smaller = 0, mismatched = 0;
  for (int i = 0; i < kEpisodes; ++i) {
    const std::uint64_t seed = kSeed + static_cast<std::uint64_t>(i);
    EnvState s = reset(spec, env, seed);
    Rng rng = agent_rng_for(seed);
    while (true) {
      const auto a = act(AgentVariant::HierarchyShield, params, s, spec, env, shield, rng);
      const auto& d = a.decision;
      if (d.vetoed) {
        ++vetoes;
        const auto o = oracle_projection(s, d.proposed, spec, shield.rho_max);
        if (d.corrected) {
          if (o.any && o.min_l0 < d.l0_distance) ++smaller;
          std::vector<Action> cands = default_candidates(spec);
          if (!o.any || !(cands[o.index] == d.executed) || o.l0 != d.l0_distance) ++mismatched;
        } else if (o.any) {
          ++mismatched;  // an admissible correction existed but none was made
        }
      }
      const auto out = step(s, d.executed, spec, env);
      s = out.next_state;
      if (out.terminated) break;
    }
  }
  verdict(3, vetoes > 0 && smaller == 0 && mismatched == 0,
          fmt("%ld vetoes checked: %ld with a strictly closer admissible candidate, %ld tie-break mismatches (limit 0)",
              vetoes, smaller, mismatched));
}

void criterion4() {
  const auto t0 = Clock::now();
  RunConfig c = base_run();
  c.variants = {AgentVariant::HierarchyCbf};
  c.env.stress_mode = true;
  const auto rep = run_suite(SuiteKind::CbfCompare, c);
  long vetoes = 0;
  for (const auto& r : rep.records) vetoes += r.vetoes;
  verdict(4, vetoes == 0 && rep.records.size() == static_cast<std::size_t>(kEpisodes),
          fmt("HierarchyCbf, %zu stress episodes on train14: %ld vetoes (limit 0); mean steps %.1f; %.1f s incl. training",
              rep.records.size(), vetoes, rep.rows[0].mean_steps, seconds_since(t0)));
}

void criterion5(Shared& sh) {
  ensure_stress(sh);
  const double secs = sh.stress_total_seconds;
  double steps[3] = {}, rho[3] = {};
  for (std::size_t k = 0; k < 3; ++k) {
    steps[k] = sh.stress_report.rows[k].mean_steps;
    rho[k] = sh.stress_report.rows[k].mean_max_rho;
  }
  const bool order = steps[0] + 10.0 <= steps[1] && steps[1] + 10.0 <= steps[2];
  const bool pass = order && rho[2] < rho[0] && secs < 600.0;
  verdict(5, pass,
          fmt("stress survival steps Flat %.2f, ShieldOnly %.2f, HierarchyShield %.2f (gaps >= 10); max rho Flat %.3f, "
              "ShieldOnly %.3f, HierarchyShield %.3f (HS < Flat); %.1f s incl. %.1f s training (limit 600 s)",
              steps[0], steps[1], steps[2], rho[0], rho[1], rho[2], secs, sh.stress_train_seconds));
}

// Nominal training run shared by criteria 6 and 8.
struct NominalTraining {
  TrainResult result;
  double seconds = 0.0;
};

NominalTraining train_nominal() {
  const auto t0 = Clock::now();
  RunConfig c = base_run();
  EnvConfig env = c.train_env;
  env.stress_mode = false;
  NominalTraining n;
  n.result = train(resolve_grid("train14"), env, c.train, c.shield, AgentVariant::HierarchyShield,
                   training_seed(c.seed, AgentVariant::HierarchyShield));
  n.seconds = seconds_since(t0);
  return n;
}

void criterion6(const NominalTraining& nt) {
  const auto t0 = Clock::now();
  RunConfig c = base_run();
  c.variants = {AgentVariant::HierarchyShield};
  c.policies[AgentVariant::HierarchyShield] = nt.result.params;
  const PolicyParams snapshot = nt.result.params;
  const long before = update_counter();
  const auto rep = run_suite(SuiteKind::Transfer, c);
  const bool frozen = update_counter() == before &&
                      std::memcmp(snapshot.values.data(), c.policies.at(AgentVariant::HierarchyShield).values.data(),
                                  snapshot.values.size() * sizeof(double)) == 0;
  int time_limit = 0;
  for (const auto& r : rep.records) time_limit += r.failure == FailureMode::TimeLimit;
  const double share = static_cast<double>(time_limit) / static_cast<double>(rep.records.size());
  const double secs = seconds_since(t0) + nt.seconds;
  verdict(6, share >= 0.8 && rep.rows[0].mean_max_rho <= 1.0 && frozen && rep.eval_grid != rep.train_grid && secs < 300.0,
          fmt("train14 -> %s: %d/%zu episodes reach the time limit (limit 80%%); mean max rho %.3f (limit 1.0); "
              "updates during evaluation %ld, params %s; %.1f s incl. training (limit 300 s)",
              rep.eval_grid.c_str(), time_limit, rep.records.size(), rep.rows[0].mean_max_rho,
              update_counter() - before, frozen ? "bit-identical" : "CHANGED", secs));
}

void criterion7() {
  const auto t0 = Clock::now();
  const auto spec = resolve_grid("train14");
  EnvConfig env;
  env.stress_mode = true;
  const std::vector<int> sizes{kFeatureSize, 8, kAbstractCount};
  const std::size_t count = parameter_count(sizes);
  double worst = 0.0;
  std::mt19937_64 rng(77);
  for (int b = 0; b < 10; ++b) {
    auto params = init_params(sizes, rng());
    std::normal_distribution<double> n(0.0, 0.05);
    for (auto& v : params.values) v += n(rng);
    std::vector<Trajectory> batch;
    const auto variant = b % 2 ? AgentVariant::HierarchyCbf : AgentVariant::Flat;
    for (int e = 0; e < 3; ++e) {
      auto ro = run_rollout(spec, env, variant, params, ShieldConfig{}, rng());
      ro.trajectory.resize(std::min<std::size_t>(ro.trajectory.size(), 25));
      batch.push_back(std::move(ro.trajectory));
    }
    const auto adv = compute_advantages(batch, 0.99);
    const auto g = surrogate_gradient(params, batch, adv);
    auto objective = [&](const PolicyParams& p) {
      double j = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t t = 0; t < batch[i].size(); ++t) {
          const auto& s = batch[i][t];
          j += adv[i][t] * std::log(action_distribution(policy_logits(p, s.features), s.mask)[static_cast<std::size_t>(s.action)]);
        }
      return j / static_cast<double>(batch.size());
    };
    const double h = 1e-5;
    double diff = 0.0, norm_g = 0.0, norm_fd = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      auto up = params, dn = params;
      up.values[i] += h;
      dn.values[i] -= h;
      const double fd = (objective(up) - objective(dn)) / (2.0 * h);
      diff += (g[i] - fd) * (g[i] - fd);
      norm_g += g[i] * g[i];
      norm_fd += fd * fd;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(norm_g), std::sqrt(norm_fd), 1e-300});
    worst = std::max(worst, rel);
  }
  const double secs = seconds_since(t0);
  verdict(7, worst <= 1e-4 && count <= 200 && secs < 30.0,
          fmt("10 rollout batches, %zu-parameter network: worst relative error %.2e (limit 1e-4); %.2f s (limit 30 s)",
              count, worst, secs));
}

void criterion8(const NominalTraining& nt) {
  const auto& h = nt.result.history;
  double lead = 0.0, trail = 0.0;
  const std::size_t n = h.size();
  for (std::size_t k = 0; k < 10 && k < n; ++k) lead += h[k].mean_return / 10.0;
  for (std::size_t k = n >= 10 ? n - 10 : 0; k < n; ++k) trail += h[k].mean_return / 10.0;
  const double ratio = lead != 0.0 ? trail / lead : 0.0;
  verdict(8, n == 200 && lead > 0.0 && trail >= 1.2 * lead && nt.seconds < 600.0,
          fmt("%zu updates on train14 (nominal, HierarchyShield): leading-10 mean return %.2f, trailing-10 %.2f, "
              "ratio %.3f (limit 1.2); %.1f s (limit 600 s)",
              n, lead, trail, ratio, nt.seconds));
}

void criterion9(Shared& sh) {
  ensure_stress(sh);
  const auto again = run_suite(SuiteKind::Stress, sh.stress_run);
  const auto a = records_jsonl(sh.stress_report);
  const auto b = records_jsonl(again);
  verdict(9, a == b && a.size() > 0,
          fmt("stress suite re-run with identical config: %zu vs %zu bytes of episode records, %s", a.size(), b.size(),
              a == b ? "byte-identical" : "DIFFERENT"));
}

void criterion10(Shared& sh) {
  ensure_stress(sh);
  long steps = 0, margin_breaks = 0;
  for (const auto& r : sh.stress_report.records)
    for (const auto& t : r.trace) {
      ++steps;
      if (t.margin + t.max_rho != 1.0) ++margin_breaks;
    }
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 5.0);
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int k = 0; k < 10000; ++k) {
    std::vector<double> l(kAbstractCount), shifted(kAbstractCount);
    const double c = 100.0 * n(rng);
    for (std::size_t i = 0; i < l.size(); ++i) {
      l[i] = n(rng);
      shifted[i] = l[i] + c;
    }
    const auto p = action_distribution(l);
    const auto q = action_distribution(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      worst_shift = std::max(worst_shift, std::abs(p[i] - q[i]));
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  verdict(10, margin_breaks == 0 && worst_sum <= 1e-12 && worst_shift <= 1e-12 && steps > 0,
          fmt("%ld recorded steps with m + max rho != 1: %ld; softmax |sum - 1| %.1e, shift deviation %.1e (limit 1e-12)",
              steps, margin_breaks, worst_sum, worst_shift));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return only.empty() || only.count(n) > 0; };

  Shared sh;
  try {
    if (want(1)) criterion1();
    if (want(2)) criterion2(sh);
    if (want(3)) criterion3(sh);
    if (want(4)) criterion4();
    if (want(5)) criterion5(sh);
    if (want(6) || want(8)) {
      const auto nt = train_nominal();
      if (want(6)) criterion6(nt);
      if (want(8)) criterion8(nt);
    }
    if (want(7)) criterion7();
    if (want(9)) criterion9(sh);
    if (want(10)) criterion10(sh);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
