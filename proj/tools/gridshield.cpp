// gridshield: train policies, run evaluation suites, validate grid documents.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridshield/gridshield.hpp"

namespace fs = std::filesystem;
using namespace gridshield;

namespace {

fs::path default_out_dir() {
  if (const char* env = std::getenv("GRIDSHIELD_OUT"); env && *env) return env;
  return "runs";
}

struct CommonOpts {
  std::string grid;
  std::uint64_t seed = 0;
  int episodes = 0;
  double rho_max = 0.98;
  int horizon = 200;
  double sigma = 0.02;
  int stress_step = 10;
  bool redispatch = false;
  int updates = 200;
  int batch = 32;
  double lr = 3e-4;
  std::string out;
  bool no_trace = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_grid = true) {
  if (with_grid) cmd->add_option("-g,--grid", o.grid, "Builtin grid name or grid document path");
  cmd->add_option("-s,--seed", o.seed, "Base seed; episode i uses seed + i");
  cmd->add_option("-n,--episodes", o.episodes, "Episodes per variant (0 = suite default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--rho-max", o.rho_max, "Shield admissibility threshold")->check(CLI::PositiveNumber);
  cmd->add_option("--horizon", o.horizon, "Episode horizon")->check(CLI::PositiveNumber);
  cmd->add_option("--sigma", o.sigma, "Load noise standard deviation")->check(CLI::NonNegativeNumber);
  cmd->add_option("--stress-step", o.stress_step, "Step of the forced outage in stress mode");
  cmd->add_flag("--redispatch", o.redispatch, "Enable generator redispatch actions");
  cmd->add_option("--updates", o.updates, "Policy-gradient updates when training")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch", o.batch, "Episodes per update")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", o.out, "Output directory (default $GRIDSHIELD_OUT or ./runs)");
  cmd->add_flag("--no-trace", o.no_trace, "Omit per-step traces from episode records");
}

RunConfig make_run(const CommonOpts& o) {
  RunConfig c;
  c.grid = o.grid;
  c.seed = o.seed;
  c.episodes = o.episodes;
  c.shield.rho_max = o.rho_max;
  c.env.horizon = o.horizon;
  c.env.load_noise_sigma = o.sigma;
  c.env.stress_outage_step = o.stress_step;
  c.env.redispatch_enabled = o.redispatch;
  c.train_env = c.env;
  c.train.total_updates = o.updates;
  c.train.episodes_per_update = o.batch;
  c.train.learning_rate = o.lr;
  c.keep_trace = !o.no_trace;
  return c;
}

fs::path out_dir(const CommonOpts& o, const std::string& leaf) {
  return (o.out.empty() ? default_out_dir() : fs::path(o.out)) / leaf;
}

void print_summary(const AggregateReport& rep, const ReportPaths& paths) {
  std::cout << "# " << to_string(rep.suite) << " on " << rep.eval_grid << " (trained on " << rep.train_grid
            << "), " << rep.episodes << " episodes per method, " << rep.provenance << "\n"
            << summary_csv(rep) << "wrote " << paths.summary.string() << ", " << paths.records.string() << ", "
            << paths.config.string() << "\n";
}

std::vector<AgentVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<AgentVariant> out;
  for (const auto& n : names) {
    auto v = parse_variant(n);
    if (!v) throw CLI::ValidationError("--variant", "unknown variant '" + n + "'");
    out.push_back(*v);
  }
  return out;
}

// Maps a shield mode onto the hierarchical variant that runs with it.
AgentVariant variant_for_mode(const std::string& mode) {
  if (mode == "off") return AgentVariant::HierarchyOnly;
  if (mode == "veto") return AgentVariant::ShieldOnly;
  if (mode == "projection") return AgentVariant::HierarchyShield;
  if (mode == "cbf") return AgentVariant::HierarchyCbf;
  throw CLI::ValidationError("--shield-mode", "expected off, veto, projection or cbf");
}

void attach_policy(RunConfig& run, const std::string& path) {
  if (path.empty()) return;
  const PolicyParams p = load_policy(path);
  int learned = 0;
  for (auto v : run.variants) {
    if (!uses_policy(v)) continue;
    run.policies[v] = p;
    ++learned;
  }
  if (learned == 0) throw CLI::ValidationError("--policy", "no selected variant uses a learned policy");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-shielded hierarchical grid control workbench"};
  app.require_subcommand(1);

  // train
  CommonOpts train_o;
  std::string train_variant = "hierarchy_shield";
  std::string policy_out;
  bool train_stress = false;
  auto* train_cmd = app.add_subcommand("train", "Train a policy and save it");
  add_common(train_cmd, train_o);
  train_cmd->add_option("-v,--variant", train_variant, "Variant whose act pathway is trained");
  train_cmd->add_option("-p,--policy", policy_out, "Policy file to write (default <out>/train/policy.bin)");
  train_cmd->add_flag("--stress", train_stress, "Train with the forced-outage scenario enabled");

  // eval
  CommonOpts eval_o;
  std::vector<std::string> eval_variants;
  std::string eval_suite = "nominal", eval_policy, eval_mode;
  bool eval_stress = false;
  auto* eval_cmd = app.add_subcommand("eval", "Run the nominal or cbf_compare suite");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--suite", eval_suite, "nominal or cbf_compare")->check(CLI::IsMember({"nominal", "cbf_compare"}));
  eval_cmd->add_option("-v,--variant", eval_variants, "Variants to evaluate (repeatable)");
  eval_cmd->add_option("--shield-mode", eval_mode, "Evaluate the variant paired with this shield mode");
  eval_cmd->add_option("-p,--policy", eval_policy, "Pre-trained policy for the learned variants");
  eval_cmd->add_flag("--stress", eval_stress, "Enable the forced outage (cbf_compare only)");

  // stress
  CommonOpts stress_o;
  std::vector<std::string> stress_variants;
  std::string stress_policy;
  auto* stress_cmd = app.add_subcommand("stress", "Run the forced-outage stress suite");
  add_common(stress_cmd, stress_o);
  stress_cmd->add_option("-v,--variant", stress_variants, "Variants to evaluate (repeatable)");
  stress_cmd->add_option("-p,--policy", stress_policy, "Pre-trained policy for the learned variants");

  // ablate
  CommonOpts ablate_o;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation suite with and without the forced outage");
  add_common(ablate_cmd, ablate_o);

  // transfer
  CommonOpts transfer_o;
  std::string transfer_train = "train14", transfer_policy;
  auto* transfer_cmd = app.add_subcommand("transfer", "Train on one grid, evaluate on another without updates");
  add_common(transfer_cmd, transfer_o);
  transfer_cmd->add_option("--train-grid", transfer_train, "Grid used for training");
  transfer_cmd->add_option("-p,--policy", transfer_policy, "Pre-trained policy (skips training)");

  // validate-grid
  std::string validate_target, validate_write;
  auto* validate_cmd = app.add_subcommand("validate-grid", "Check a grid document or builtin grid");
  validate_cmd->add_option("grid", validate_target, "Grid document path or builtin name")->required();
  validate_cmd->add_option("--write", validate_write, "Also write the grid as a JSON document");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto v = parse_variants({train_variant}).front();
      if (!uses_policy(v)) throw CLI::ValidationError("--variant", "shield_only has no learned policy");
      RunConfig run = make_run(train_o);
      run.train_env.stress_mode = train_stress;
      const GridSpec spec = resolve_grid(train_o.grid.empty() ? "train14" : train_o.grid);
      const TrainResult tr = train(spec, run.train_env, run.train, run.shield, v, training_seed(run.seed, v));
      const fs::path dir = out_dir(train_o, "train");
      const fs::path policy_path = policy_out.empty() ? dir / "policy.bin" : fs::path(policy_out);
      save_policy(tr.params, policy_path);
      std::string curve = "update,mean_return,grad_norm\n";
      char buf[128];
      for (std::size_t u = 0; u < tr.history.size(); ++u) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", u, tr.history[u].mean_return, tr.history[u].grad_norm);
        curve += buf;
      }
      write_text_file(dir / "learning_curve.csv", curve);
      std::cout << "trained " << to_string(v) << " on " << spec.name << " for " << tr.history.size()
                << " updates; policy -> " << policy_path.string() << "\n";
      return 0;
    }
    if (*eval_cmd) {
      RunConfig run = make_run(eval_o);
      run.variants = parse_variants(eval_variants);
      if (!eval_mode.empty()) run.variants.push_back(variant_for_mode(eval_mode));
      run.env.stress_mode = eval_stress;
      const SuiteKind kind = *parse_suite(eval_suite);
      if (run.variants.empty()) run.variants = suite_defaults(kind).variants;
      attach_policy(run, eval_policy);
      const auto rep = run_suite(kind, run);
      print_summary(rep, write_report(rep, out_dir(eval_o, eval_suite)));
      return 0;
    }
    if (*stress_cmd) {
      RunConfig run = make_run(stress_o);
      run.variants = parse_variants(stress_variants);
      if (run.variants.empty()) run.variants = suite_defaults(SuiteKind::Stress).variants;
      attach_policy(run, stress_policy);
      const auto rep = run_suite(SuiteKind::Stress, run);
      print_summary(rep, write_report(rep, out_dir(stress_o, "stress")));
      return 0;
    }
    if (*ablate_cmd) {
      RunConfig run = make_run(ablate_o);
      for (bool stress : {false, true}) {
        run.env.stress_mode = stress;
        const auto rep = run_suite(SuiteKind::Ablation, run);
        print_summary(rep, write_report(rep, out_dir(ablate_o, stress ? "ablation_stress" : "ablation_nominal")));
      }
      return 0;
    }
    if (*transfer_cmd) {
      RunConfig run = make_run(transfer_o);
      run.train_grid = transfer_train;
      run.variants = {AgentVariant::HierarchyShield};
      attach_policy(run, transfer_policy);
      if (run.policies.empty())
        run.policies[AgentVariant::HierarchyShield] =
            policy_for(AgentVariant::HierarchyShield, run, resolve_grid(run.train_grid), run.env.stress_mode);
      const long before = update_counter();
      const auto rep = run_suite(SuiteKind::Transfer, run);
      if (update_counter() != before) throw std::logic_error("evaluation applied a parameter update");
      print_summary(rep, write_report(rep, out_dir(transfer_o, "transfer")));
      return 0;
    }
    if (*validate_cmd) {
      GridSpec spec;
      try {
        spec = resolve_grid(validate_target);
      } catch (const ValidationError& e) {
        std::cerr << validate_target << ": invalid\n";
        for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
        return 1;
      }
      std::printf("%s: ok (%zu buses, %zu lines, %zu generators, %zu loads, slack %d)\n", validate_target.c_str(),
                  spec.bus_count(), spec.line_count(), spec.generators.size(), spec.loads.size(), spec.slack_bus);
      const EnvState s = reset(spec, EnvConfig{}, 0);
      std::printf("base dispatch max rho %.4f\n", max_loading(s.last_solution.rho));
      if (!validate_write.empty()) save_grid_spec(spec, validate_write);
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
