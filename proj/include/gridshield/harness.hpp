#pragma once

// Seeded evaluation suites, per-episode records, aggregation and report files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridshield/io.hpp"
#include "gridshield/training.hpp"

namespace gridshield {

inline constexpr const char* kVersion = "0.1.0";

enum class SuiteKind { Nominal, Stress, CbfCompare, Ablation, Transfer };

inline const char* to_string(SuiteKind k) {
  switch (k) {
    case SuiteKind::Nominal: return "nominal";
    case SuiteKind::Stress: return "stress";
    case SuiteKind::CbfCompare: return "cbf_compare";
    case SuiteKind::Ablation: return "ablation";
    case SuiteKind::Transfer: return "transfer";
  }
  return "?";
}

inline std::optional<SuiteKind> parse_suite(const std::string& s) {
  for (auto k : {SuiteKind::Nominal, SuiteKind::Stress, SuiteKind::CbfCompare, SuiteKind::Ablation,
                 SuiteKind::Transfer})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Table row names. The ablation table uses its own vocabulary.
inline std::string method_label(AgentVariant v, SuiteKind suite) {
  if (suite == SuiteKind::Ablation) {
    switch (v) {
      case AgentVariant::Flat: return "Flat";
      case AgentVariant::ShieldOnly: return "CBF Only";
      case AgentVariant::HierarchyOnly: return "Hierarchy Only";
      case AgentVariant::HierarchyShield: return "Hierarchy + CBF";
      case AgentVariant::HierarchyCbf: return "Hierarchy + CBF mask";
    }
  }
  switch (v) {
    case AgentVariant::Flat: return "Flat RL";
    case AgentVariant::ShieldOnly: return "Shielded RL";
    case AgentVariant::HierarchyOnly: return "Hierarchy Only";
    case AgentVariant::HierarchyShield: return "Hierarchical + Shield";
    case AgentVariant::HierarchyCbf: return "Hierarchical + CBF";
  }
  return "?";
}

struct RunConfig {
  std::string grid;                  // evaluation grid; empty = suite default
  std::string train_grid = "train14";
  std::vector<AgentVariant> variants;  // empty = suite default
  ShieldConfig shield;               // mode is set per variant; rho_max and candidates apply
  EnvConfig env;                     // stress_mode is forced by nominal/stress suites
  EnvConfig train_env;               // environment used while training
  std::optional<bool> train_stress;  // unset = train under the evaluation condition
  TrainConfig train;
  int episodes = 0;                  // 0 = suite default
  std::uint64_t seed = 0;
  bool keep_trace = true;
  std::map<AgentVariant, PolicyParams> policies;  // pre-trained; missing ones are trained
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  AgentVariant variant = AgentVariant::Flat;
  std::string method;
  int steps = 0;
  double reward = 0.0;
  double max_rho = 0.0;
  double mean_margin = 0.0;
  double min_margin = 0.0;
  int vetoes = 0;
  int corrections = 0;
  int last_resort = 0;
  FailureMode failure = FailureMode::Unknown;
  std::vector<StepTrace> trace;
};

struct VariantSummary {
  AgentVariant variant = AgentVariant::Flat;
  std::string method;
  int episodes = 0;
  double mean_steps = 0.0, sd_steps = 0.0;
  double mean_reward = 0.0, sd_reward = 0.0;
  double mean_max_rho = 0.0, sd_max_rho = 0.0;
  double mean_vetoes = 0.0, sd_vetoes = 0.0;
  std::map<std::string, int> failures;
};

struct AggregateReport {
  SuiteKind suite = SuiteKind::Nominal;
  std::string train_grid;
  std::string eval_grid;
  int episodes = 0;  // per variant
  std::vector<VariantSummary> rows;
  std::vector<EpisodeRecord> records;  // grouped by variant, seed order within
  nlohmann::ordered_json config;
  std::string provenance;
};

// ---------------------------------------------------------------------------
// Episodes

/// Evaluation only: params are read, never updated. Shielded variants are
/// checked step by step against the soundness contract.
inline EpisodeRecord run_episode(const GridSpec& spec, const EnvConfig& env_cfg, AgentVariant variant,
                                 const PolicyParams& params, const ShieldConfig& shield_cfg, std::uint64_t seed,
                                 bool keep_trace = true) {
  if (uses_policy(variant) && !shapes_consistent(params))
    throw std::invalid_argument(std::string("run_episode: variant ") + to_string(variant) + " needs policy parameters");
  Rollout r = run_rollout(spec, env_cfg, variant, params, shield_cfg, seed);

  EpisodeRecord rec;
  rec.seed = seed;
  rec.variant = variant;
  rec.steps = r.steps;
  rec.reward = r.total_reward;
  rec.failure = r.failure;
  rec.min_margin = std::numeric_limits<double>::infinity();
  const bool shielded = shield_mode_for(variant) != ShieldMode::Off;
  double margin_sum = 0.0;
  for (const auto& st : r.trace) {
    rec.max_rho = std::max(rec.max_rho, st.max_rho);
    margin_sum += st.margin;
    rec.min_margin = std::min(rec.min_margin, st.margin);
    rec.vetoes += st.vetoed ? 1 : 0;
    rec.corrections += st.corrected ? 1 : 0;
    rec.last_resort += st.last_resort ? 1 : 0;
    if (shielded && !st.last_resort && !(st.predicted_rho_max <= shield_cfg.rho_max))
      throw std::logic_error("shield soundness violated at t=" + std::to_string(st.t));
  }
  rec.mean_margin = r.trace.empty() ? 0.0 : margin_sum / static_cast<double>(r.trace.size());
  if (r.trace.empty()) rec.min_margin = 0.0;
  if (keep_trace) rec.trace = std::move(r.trace);
  return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline VariantSummary summarize(AgentVariant v, const std::string& method, const std::vector<EpisodeRecord>& recs) {
  VariantSummary s;
  s.variant = v;
  s.method = method;
  std::vector<double> steps, reward, rho, vetoes;
  for (const auto& r : recs) {
    if (r.variant != v) continue;
    steps.push_back(r.steps);
    reward.push_back(r.reward);
    rho.push_back(r.max_rho);
    vetoes.push_back(r.vetoes);
    ++s.failures[to_string(r.failure)];
    ++s.episodes;
  }
  std::tie(s.mean_steps, s.sd_steps) = detail::mean_sd(steps);
  std::tie(s.mean_reward, s.sd_reward) = detail::mean_sd(reward);
  std::tie(s.mean_max_rho, s.sd_max_rho) = detail::mean_sd(rho);
  std::tie(s.mean_vetoes, s.sd_vetoes) = detail::mean_sd(vetoes);
  return s;
}

inline nlohmann::ordered_json config_json(const RunConfig& c, SuiteKind kind, const std::string& eval_grid,
                                          const std::vector<AgentVariant>& variants, int episodes) {
  nlohmann::ordered_json j;
  j["suite"] = to_string(kind);
  j["eval_grid"] = eval_grid;
  j["train_grid"] = c.train_grid;
  j["variants"] = nlohmann::ordered_json::array();
  for (auto v : variants) j["variants"].push_back(to_string(v));
  j["episodes"] = episodes;
  j["seed"] = c.seed;
  j["shield"] = {{"rho_max", c.shield.rho_max}, {"candidates", c.shield.candidate_set.size()}};
  auto env = [](const EnvConfig& e) {
    return nlohmann::ordered_json{{"horizon", e.horizon},
                                  {"load_noise_sigma", e.load_noise_sigma},
                                  {"stress_mode", e.stress_mode},
                                  {"stress_outage_step", e.stress_outage_step},
                                  {"reconnection_cooldown", e.reconnection_cooldown},
                                  {"redispatch_enabled", e.redispatch_enabled},
                                  {"collapse_penalty", e.collapse_penalty},
                                  {"overload_grace", e.overload_grace}};
  };
  j["env"] = env(c.env);
  j["train_env"] = env(c.train_env);
  j["train_stress"] = c.train_stress ? nlohmann::ordered_json(*c.train_stress) : nlohmann::ordered_json("match_eval");
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"gamma", c.train.gamma},
                {"episodes_per_update", c.train.episodes_per_update},
                {"total_updates", c.train.total_updates}, {"hidden", c.train.hidden}};
  j["preloaded_policies"] = nlohmann::ordered_json::array();
  for (const auto& [v, p] : c.policies)
    j["preloaded_policies"].push_back({{"variant", to_string(v)}, {"digest", detail::hex64(detail::fnv1a(encode_policy(p)))}});
  return j;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteDefaults {
  std::string grid;
  std::vector<AgentVariant> variants;
  int episodes;
};

inline SuiteDefaults suite_defaults(SuiteKind k) {
  using V = AgentVariant;
  switch (k) {
    case SuiteKind::Nominal: return {"train14", {V::Flat, V::ShieldOnly, V::HierarchyShield}, 30};
    case SuiteKind::Stress: return {"train14", {V::Flat, V::ShieldOnly, V::HierarchyShield}, 20};
    case SuiteKind::CbfCompare: return {"train14", {V::HierarchyShield, V::HierarchyCbf}, 20};
    case SuiteKind::Ablation:
      return {"large36", {V::Flat, V::ShieldOnly, V::HierarchyOnly, V::HierarchyShield}, 20};
    case SuiteKind::Transfer: return {"large36", {V::HierarchyShield}, 20};
  }
  return {"train14", {}, 1};
}

/// Seed for training a variant's policy; disjoint from evaluation seeds.
inline std::uint64_t training_seed(std::uint64_t base, AgentVariant v) {
  return derive_seed(base, 0x7EA1, static_cast<std::uint64_t>(v));
}

/// Returns the policy for `v`: preloaded if given, else trained on the
/// training grid with the forced outage on iff `stress`. ShieldOnly has no
/// policy.
inline PolicyParams policy_for(AgentVariant v, const RunConfig& cfg, const GridSpec& train_spec, bool stress) {
  if (!uses_policy(v)) return {};
  if (auto it = cfg.policies.find(v); it != cfg.policies.end()) return it->second;
  EnvConfig env = cfg.train_env;
  env.stress_mode = cfg.train_stress.value_or(stress);
  return train(train_spec, env, cfg.train, cfg.shield, v, training_seed(cfg.seed, v)).params;
}

/// Evaluates every variant for the declared episode count; episode i of every
/// variant uses seed base + i.
inline AggregateReport run_suite(SuiteKind kind, const RunConfig& cfg) {
  const SuiteDefaults def = suite_defaults(kind);
  const std::string eval_name = cfg.grid.empty() ? def.grid : cfg.grid;
  const std::vector<AgentVariant> variants = cfg.variants.empty() ? def.variants : cfg.variants;
  const int episodes = cfg.episodes > 0 ? cfg.episodes : def.episodes;
  if (episodes < 1) throw std::invalid_argument("run_suite: episode count must be >= 1");

  EnvConfig env = cfg.env;
  if (kind == SuiteKind::Nominal) env.stress_mode = false;
  if (kind == SuiteKind::Stress) env.stress_mode = true;

  const GridSpec eval_spec = resolve_grid(eval_name);
  const GridSpec train_spec = resolve_grid(cfg.train_grid);
  if (kind == SuiteKind::Transfer && eval_spec.name == train_spec.name)
    throw std::invalid_argument("transfer suite: evaluation grid must differ from the training grid");

  AggregateReport rep;
  rep.suite = kind;
  rep.train_grid = cfg.train_grid;
  rep.eval_grid = eval_name;
  rep.episodes = episodes;
  RunConfig echo = cfg;
  echo.env = env;
  rep.config = config_json(echo, kind, eval_name, variants, episodes);

  for (auto v : variants) {
    const PolicyParams params = policy_for(v, cfg, train_spec, env.stress_mode);
    for (int i = 0; i < episodes; ++i) {
      EpisodeRecord rec = run_episode(eval_spec, env, v, params, cfg.shield, cfg.seed + static_cast<std::uint64_t>(i),
                                      cfg.keep_trace);
      rec.method = method_label(v, kind);
      rep.records.push_back(std::move(rec));
    }
    rep.rows.push_back(summarize(v, method_label(v, kind), rep.records));
  }
  rep.provenance = std::string("gridshield-") + kVersion + "+cfg." + detail::hex64(detail::fnv1a(rep.config.dump()));
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

inline nlohmann::ordered_json record_json(const EpisodeRecord& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["variant"] = to_string(r.variant);
  j["seed"] = r.seed;
  j["steps"] = r.steps;
  j["reward"] = r.reward;
  j["max_rho"] = r.max_rho;
  j["mean_margin"] = r.mean_margin;
  j["min_margin"] = r.min_margin;
  j["vetoes"] = r.vetoes;
  j["corrections"] = r.corrections;
  j["last_resort"] = r.last_resort;
  j["failure"] = to_string(r.failure);
  if (!r.trace.empty()) {
    auto& tr = j["trace"] = nlohmann::ordered_json::array();
    for (const auto& s : r.trace) {
      nlohmann::ordered_json e;
      e["t"] = s.t;
      e["intent"] = s.intent ? nlohmann::ordered_json(to_string(static_cast<AbstractAction>(*s.intent)))
                             : nlohmann::ordered_json(nullptr);
      e["proposed"] = to_string(s.proposed);
      e["executed"] = to_string(s.executed);
      e["vetoed"] = s.vetoed;
      e["corrected"] = s.corrected;
      e["last_resort"] = s.last_resort;
      e["predicted_rho_max"] = std::isfinite(s.predicted_rho_max) ? nlohmann::ordered_json(s.predicted_rho_max)
                                                                   : nlohmann::ordered_json("inf");
      e["l0"] = s.l0_distance;
      e["max_rho"] = s.max_rho;
      e["margin"] = s.margin;
      e["reward"] = s.reward;
      tr.push_back(std::move(e));
    }
  }
  return j;
}

inline std::string summary_csv(const AggregateReport& rep) {
  std::string out = "Method,Avg. Steps,Avg. Max \xCF\x81,Avg. Vetoes,Avg. Reward\n";
  char buf[256];
  for (const auto& row : rep.rows) {
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.2f,%.2f\n", row.mean_steps, row.mean_max_rho, row.mean_vetoes,
                  row.mean_reward);
    out += row.method + buf;
  }
  return out;
}

inline std::string records_jsonl(const AggregateReport& rep) {
  std::string out;
  for (const auto& r : rep.records) out += record_json(r).dump() + "\n";
  return out;
}

inline nlohmann::ordered_json report_header(const AggregateReport& rep) {
  nlohmann::ordered_json j;
  j["provenance"] = rep.provenance;
  j["suite"] = to_string(rep.suite);
  j["train_grid"] = rep.train_grid;
  j["eval_grid"] = rep.eval_grid;
  j["eval_differs_from_train"] = rep.eval_grid != rep.train_grid;
  j["episodes_per_variant"] = rep.episodes;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rep.rows) {
    nlohmann::ordered_json r;
    r["method"] = row.method;
    r["variant"] = to_string(row.variant);
    r["episodes"] = row.episodes;
    r["steps"] = {{"mean", row.mean_steps}, {"sd", row.sd_steps}};
    r["max_rho"] = {{"mean", row.mean_max_rho}, {"sd", row.sd_max_rho}};
    r["vetoes"] = {{"mean", row.mean_vetoes}, {"sd", row.sd_vetoes}};
    r["reward"] = {{"mean", row.mean_reward}, {"sd", row.sd_reward}};
    r["failures"] = row.failures;
    j["rows"].push_back(std::move(r));
  }
  j["config"] = rep.config;
  return j;
}

struct ReportPaths {
  std::filesystem::path summary, records, config;
};

/// Writes summary.csv, episodes.jsonl and report.json into dir.
inline ReportPaths write_report(const AggregateReport& rep, const std::filesystem::path& dir) {
  if (rep.records.empty() || rep.rows.empty()) throw std::invalid_argument("write_report: report has no episodes");
  for (const auto& row : rep.rows)
    if (row.episodes != rep.episodes) throw std::logic_error("write_report: row episode count disagrees with report");
  ReportPaths p{dir / "summary.csv", dir / "episodes.jsonl", dir / "report.json"};
  write_text_file(p.summary, summary_csv(rep));
  write_text_file(p.records, records_jsonl(rep));
  write_text_file(p.config, report_header(rep).dump(2) + "\n");
  return p;
}

}  // namespace gridshield
