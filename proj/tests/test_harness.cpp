#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "test_support.hpp"

using namespace gridshield;
namespace fs = std::filesystem;

namespace {

// Untrained policies keep suite tests fast; the harness treats them as preloaded.
RunConfig quick_run(std::vector<AgentVariant> variants, int episodes, int horizon = 40) {
  RunConfig c;
  c.variants = std::move(variants);
  c.episodes = episodes;
  c.env.horizon = horizon;
  c.seed = 100;
  for (auto v : c.variants)
    if (uses_policy(v)) c.policies[v] = init_params({11, 64, 64, 5}, 7 + static_cast<std::uint64_t>(v));
  return c;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(RunEpisode, HoldingPolicyReachesTheTimeLimit) {
  const auto s = builtin_grid("train14");
  auto p = zero_params({11, 5});
  p.values[p.values.size() - 5] = 50.0;  // bias on Hold
  const auto rec = run_episode(s, EnvConfig{}, AgentVariant::HierarchyShield, p, ShieldConfig{}, 0);
  EXPECT_EQ(rec.steps, 200);
  EXPECT_EQ(rec.failure, FailureMode::TimeLimit);
  EXPECT_EQ(rec.trace.size(), 200u);
  EXPECT_EQ(rec.vetoes, 0);
}

TEST(RunEpisode, SameSeedGivesIdenticalRecord) {
  const auto s = builtin_grid("train14");
  EnvConfig env;
  env.stress_mode = true;
  const auto p = init_params({11, 64, 64, 5}, 3);
  const auto a = run_episode(s, env, AgentVariant::HierarchyShield, p, ShieldConfig{}, 9);
  const auto b = run_episode(s, env, AgentVariant::HierarchyShield, p, ShieldConfig{}, 9);
  EXPECT_EQ(record_json(a).dump(), record_json(b).dump());
}

TEST(RunEpisode, ShieldedStepsRespectTheThreshold) {
  const auto s = builtin_grid("train14");
  EnvConfig env;
  env.stress_mode = true;
  const auto p = init_params({11, 64, 64, 5}, 3);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto rec = run_episode(s, env, AgentVariant::HierarchyShield, p, ShieldConfig{}, seed);
    for (const auto& t : rec.trace) EXPECT_TRUE(t.last_resort || t.predicted_rho_max <= 0.98);
  }
}

TEST(RunEpisode, LearnedVariantNeedsParameters) {
  EXPECT_THROW(run_episode(toy5_grid(), EnvConfig{}, AgentVariant::Flat, PolicyParams{}, ShieldConfig{}, 0),
               std::invalid_argument);
  EXPECT_NO_THROW(run_episode(toy5_grid(), EnvConfig{}, AgentVariant::ShieldOnly, PolicyParams{}, ShieldConfig{}, 0));
}

TEST(RunSuite, StressRowsCarryMeansOfTheirRecords) {
  const auto rep = run_suite(SuiteKind::Stress, quick_run({AgentVariant::Flat, AgentVariant::ShieldOnly,
                                                           AgentVariant::HierarchyShield}, 4));
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.records.size(), 12u);
  for (const auto& row : rep.rows) {
    double steps = 0, rho = 0, vetoes = 0, reward = 0;
    int n = 0;
    for (const auto& r : rep.records)
      if (r.variant == row.variant) {
        steps += r.steps;
        rho += r.max_rho;
        vetoes += r.vetoes;
        reward += r.reward;
        ++n;
      }
    ASSERT_EQ(n, 4);
    EXPECT_NEAR(row.mean_steps, steps / n, 1e-12);
    EXPECT_NEAR(row.mean_max_rho, rho / n, 1e-12);
    EXPECT_NEAR(row.mean_vetoes, vetoes / n, 1e-12);
    EXPECT_NEAR(row.mean_reward, reward / n, 1e-12);
  }
  // Episode i of each variant uses seed base + i.
  for (std::size_t k = 0; k < rep.records.size(); ++k) EXPECT_EQ(rep.records[k].seed, 100 + k % 4);
  EXPECT_EQ(rep.config["env"]["stress_mode"], true);
}

TEST(RunSuite, SummaryColumnsInOrder) {
  const auto rep = run_suite(SuiteKind::Nominal, quick_run({AgentVariant::Flat, AgentVariant::HierarchyShield}, 2));
  const auto lines = split_lines(summary_csv(rep));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "Method,Avg. Steps,Avg. Max \xCF\x81,Avg. Vetoes,Avg. Reward");
  EXPECT_EQ(lines[1].rfind("Flat RL,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("Hierarchical + Shield,", 0), 0u);
}

TEST(RunSuite, AblationHasExactlyFourRows) {
  RunConfig c = quick_run({}, 1, 15);
  for (auto v : suite_defaults(SuiteKind::Ablation).variants)
    if (uses_policy(v)) c.policies[v] = init_params({11, 64, 64, 5}, 1);
  const auto rep = run_suite(SuiteKind::Ablation, c);
  std::vector<std::string> methods;
  for (const auto& r : rep.rows) methods.push_back(r.method);
  EXPECT_EQ(methods, (std::vector<std::string>{"Flat", "CBF Only", "Hierarchy Only", "Hierarchy + CBF"}));
  EXPECT_EQ(rep.eval_grid, "large36");
}

TEST(RunSuite, TransferEvaluatesOnADifferentGrid) {
  RunConfig c = quick_run({AgentVariant::HierarchyShield}, 2, 20);
  const long before = update_counter();
  const auto rep = run_suite(SuiteKind::Transfer, c);
  EXPECT_EQ(update_counter(), before);
  EXPECT_NE(rep.eval_grid, rep.train_grid);
  EXPECT_EQ(report_header(rep)["eval_differs_from_train"], true);

  c.grid = "train14";
  EXPECT_THROW(run_suite(SuiteKind::Transfer, c), std::invalid_argument);
}

TEST(RunSuite, IdenticalConfigGivesByteIdenticalRecords) {
  const auto c = quick_run({AgentVariant::ShieldOnly, AgentVariant::HierarchyCbf}, 3);
  const auto a = run_suite(SuiteKind::CbfCompare, c);
  const auto b = run_suite(SuiteKind::CbfCompare, c);
  EXPECT_EQ(records_jsonl(a), records_jsonl(b));
  EXPECT_EQ(a.provenance, b.provenance);
}

TEST(RunSuite, TrainsMissingPoliciesWithoutTouchingEvaluation) {
  RunConfig c = quick_run({}, 1, 10);
  c.variants = {AgentVariant::HierarchyOnly};
  c.policies.clear();
  c.train.total_updates = 1;
  c.train.episodes_per_update = 1;
  c.train_env.horizon = 10;
  const long before = update_counter();
  const auto rep = run_suite(SuiteKind::Nominal, c);
  EXPECT_EQ(update_counter() - before, 1);
  EXPECT_EQ(rep.records.size(), 1u);
}

TEST(WriteReport, EmptyReportIsAnError) {
  AggregateReport rep;
  EXPECT_THROW(write_report(rep, fs::temp_directory_path() / "gridshield_empty"), std::invalid_argument);
}

TEST(WriteReport, WritesAllThreeFiles) {
  const auto rep = run_suite(SuiteKind::Nominal, quick_run({AgentVariant::HierarchyShield}, 2));
  const auto dir = fs::temp_directory_path() / "gridshield_report";
  fs::remove_all(dir);
  const auto paths = write_report(rep, dir);
  EXPECT_EQ(read_text_file(paths.summary), summary_csv(rep));
  EXPECT_EQ(split_lines(read_text_file(paths.records)).size(), 2u);
  const auto header = nlohmann::json::parse(read_text_file(paths.config));
  EXPECT_EQ(header["provenance"], rep.provenance);
  EXPECT_EQ(header["rows"].size(), 1u);
}

TEST(Labels, SuiteSpecificMethodNames) {
  EXPECT_EQ(method_label(AgentVariant::ShieldOnly, SuiteKind::Stress), "Shielded RL");
  EXPECT_EQ(method_label(AgentVariant::ShieldOnly, SuiteKind::Ablation), "CBF Only");
  EXPECT_EQ(method_label(AgentVariant::HierarchyCbf, SuiteKind::CbfCompare), "Hierarchical + CBF");
  for (auto k : {SuiteKind::Nominal, SuiteKind::Stress, SuiteKind::CbfCompare, SuiteKind::Ablation, SuiteKind::Transfer})
    EXPECT_EQ(parse_suite(to_string(k)), k);
}
