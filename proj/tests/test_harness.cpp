#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "forge/harness.hpp"
#include "forge/pfn/train.hpp"
#include "forge/rng.hpp"
#include "support/oracles.hpp"
#include "support/standin.hpp"

namespace fs = std::filesystem;
using namespace forge;
using baselines::Method;

namespace {

pfn::Checkpoint random_checkpoint() {
  pfn::ModelConfig config;
  config.embed_dim = 16;
  config.num_layers = 1;
  config.num_heads = 2;
  config.ff_dim = 16;
  config.max_features = 8;
  config.max_rows = 256;
  return pfn::Checkpoint::fresh(config, 5);
}

std::vector<cases::CaseBundle> small_suite(int per_group) {
  cases::SuiteOptions options;
  options.per_group = per_group;
  options.n_range = {120, 400};
  return cases::generate_suite(options, 31);
}

harness::ExperimentPlan small_plan(std::vector<Method> methods) {
  harness::ExperimentPlan plan;
  plan.methods = std::move(methods);
  plan.eval.max_context = 64;
  plan.eval.max_query = 96;
  plan.seed = 17;
  return plan;
}

std::string temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("forge_harness_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("score_predictions assembles the full report") {
  metrics::PredictionSet preds;
  preds.probs_obs = {0.9, 0.2, 0.7, 0.4};
  preds.probs_cf = {0.1, 0.4, 0.7, 0.2};
  preds.a = {1, 0, 1, 0};
  const auto report = harness::score_predictions("d0", "m", preds, {1, 0, 1, 0},
                                                 {1, 0, 0, 1});
  CHECK(report.has_counterfactual);
  CHECK(report.ate ==
        doctest::Approx(oracles::brute_ate(preds.probs_obs, preds.probs_cf,
                                           preds.a)));
  CHECK(report.auc == 1.0);
  CHECK(report.error == 0.0);
  REQUIRE(report.auc_fair.has_value());
  CHECK(report.dsp ==
        doctest::Approx(oracles::brute_dsp(preds.probs_obs, preds.a)));
}

TEST_CASE("a single method owns the whole pareto front") {
  const auto suite = small_suite(2);
  const auto plan = small_plan({Method::Constant});
  const auto eval = harness::evaluate_suite(suite, plan, random_checkpoint());
  const auto tradeoff = harness::run_tradeoff(eval);
  CHECK(tradeoff.pareto_share.at("constant") == 1.0);
  CHECK(tradeoff.average_rank_ate.at("constant") == 1.0);
  for (const auto& row : tradeoff.rows) CHECK(row.on_front);
}

TEST_CASE("avgcntf sits at zero fairness cost in the tradeoff table") {
  const auto suite = small_suite(1);
  const auto plan = small_plan({Method::AvgCntf, Method::Random});
  const auto eval = harness::evaluate_suite(suite, plan, random_checkpoint());
  const auto tradeoff = harness::run_tradeoff(eval);
  for (const auto& row : tradeoff.rows)
    if (row.method == "avgcntf") {
      CHECK(row.fairness_cost == 0.0);
      CHECK(row.uses_causal_information);
    }
}

TEST_CASE("suite evaluation is deterministic and threads do not change it") {
  const auto suite = small_suite(1);
  auto plan = small_plan({Method::Unfair, Method::Random});
  const auto ckpt = random_checkpoint();
  const auto e1 = harness::evaluate_suite(suite, plan, ckpt);
  plan.threads = 4;
  const auto e2 = harness::evaluate_suite(suite, plan, ckpt);
  for (std::size_t b = 0; b < suite.size(); ++b)
    for (std::size_t m = 0; m < 2; ++m) {
      CHECK(e1.results[b][m].preds.probs_obs ==
            e2.results[b][m].preds.probs_obs);
      CHECK(e1.results[b][m].report.ate == e2.results[b][m].report.ate);
    }
}

TEST_CASE("ablation rows cover five buckets per method") {
  const auto suite = small_suite(3);  // 18 bundles
  const auto plan = small_plan({Method::FairPFN, Method::Unfair});
  const auto eval = harness::evaluate_suite(suite, plan, random_checkpoint());
  const auto ablation =
      harness::run_ablation(eval, suite, cases::QuintileKey::BaseAte);
  CHECK(ablation.axis == "base_ate");
  CHECK(ablation.rows.size() == 10);  // 5 buckets x 2 methods
  std::size_t total = 0;
  for (const auto& row : ablation.rows)
    if (row.method == "fairpfn") total += row.count;
  CHECK(total == suite.size());

  const std::string dir = temp_dir("ablation");
  harness::write_ablation(ablation, dir);
  CHECK(fs::exists(dir + "/ablation_base_ate.csv"));
}

TEST_CASE("stress report measures both violating groups side by side") {
  harness::ExperimentPlan plan = small_plan({});
  plan.suite.per_group = 2;
  plan.suite.n_range = {120, 300};
  const auto result = harness::run_stress(plan, random_checkpoint());
  CHECK(result.rows.size() == 2 * 2 * 2);  // groups x bundles x methods
  bool endo = false, multi = false;
  for (const auto& row : result.rows) {
    if (row.group == "endogenous_a") endo = true;
    if (row.group == "multiple_a") multi = true;
  }
  CHECK(endo);
  CHECK(multi);

  const auto again = harness::run_stress(plan, random_checkpoint());
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    CHECK(result.rows[i].ate == again.rows[i].ate);
    CHECK(result.rows[i].auc == again.rows[i].auc);
  }
}

TEST_CASE("difference table covers per-group and average rows") {
  const auto suite = small_suite(2);
  const auto plan =
      small_plan({Method::FairPFN, Method::AvgCntf, Method::Constant});
  const auto eval = harness::evaluate_suite(suite, plan, random_checkpoint());
  const auto table =
      harness::difference_table(eval, suite, Method::AvgCntf);
  // Two non-reference methods, six groups plus the average row.
  CHECK(table.size() == 2 * 7);
  bool found_average = false;
  for (const auto& row : table) {
    CHECK(row.method != "avgcntf");
    if (row.group == "average") found_average = true;
  }
  CHECK(found_average);
}

TEST_CASE("imported predictions join the evaluation") {
  const auto suite = small_suite(1);
  const auto plan = small_plan({Method::Constant});
  auto eval = harness::evaluate_suite(suite, plan, random_checkpoint());
  std::vector<metrics::PredictionSet> imported(suite.size());
  Rng rng(1);
  for (std::size_t b = 0; b < suite.size(); ++b) {
    imported[b].probs_obs.resize(eval.splits[b].query_ids.size());
    for (auto& p : imported[b].probs_obs) p = rng.uniform01();
  }
  harness::attach_imported_method(eval, suite, "egr", imported);
  CHECK(eval.column_count() == 2);
  const auto tradeoff = harness::run_tradeoff(eval);
  CHECK(tradeoff.pareto_share.count("egr") == 1);

  std::vector<metrics::PredictionSet> wrong(suite.size());
  CHECK_THROWS_AS(harness::attach_imported_method(eval, suite, "bad", wrong),
                  DimensionError);
}

TEST_CASE("real-world pipeline runs five folds with full inputs") {
  const std::string dir = temp_dir("real_full");
  const auto paths = standin::write(dir);
  const auto data = io::load_manifest(io::read_manifest(paths.manifest), dir);
  auto plan = small_plan({Method::FairPFN, Method::Unfair, Method::AvgCntf,
                          Method::Constant, Method::Cfp});
  plan.eval.max_context = 128;
  plan.eval.max_query = 4096;
  const auto result =
      harness::run_realworld(data, 5, plan, random_checkpoint());

  CHECK(result.counterfactual_available);
  CHECK(result.skipped_methods.empty());
  CHECK(result.fold_reports.size() == 5 * 5);
  REQUIRE(result.pooled_reports.size() == 5);
  // Every validation row is predicted exactly once across folds.
  CHECK(result.pooled_y.size() == data.observational.n_rows());

  // Pooled DSP equals a brute-force recomputation on the pooled predictions.
  for (std::size_t m = 0; m < result.pooled_reports.size(); ++m)
    CHECK(result.pooled_reports[m].dsp ==
          doctest::Approx(oracles::brute_dsp(result.pooled_preds[m].probs_obs,
                                             result.pooled_preds[m].a))
              .epsilon(1e-12));

  // Kendall table covers observables and the supplied noise terms.
  bool saw_eps = false, saw_ugpa = false;
  for (const auto& row : result.kendall) {
    if (row.column == "eps_UGPA") saw_eps = true;
    if (row.column == "UGPA") saw_ugpa = true;
    CHECK(std::abs(row.tau) <= 1.0);
  }
  CHECK(saw_eps);
  CHECK(saw_ugpa);

  const std::string out = temp_dir("real_out");
  harness::write_realworld(result, out);
  CHECK(fs::exists(out + "/report.json"));
  CHECK(fs::exists(out + "/kendall.csv"));
}

TEST_CASE("real-world pipeline degrades without optional files") {
  const std::string dir = temp_dir("real_degraded");
  standin::Options options;
  options.write_counterfactual = false;
  options.write_noise = false;
  const auto paths = standin::write(dir, options);
  const auto data = io::load_manifest(io::read_manifest(paths.manifest), dir);
  auto plan = small_plan({Method::FairPFN, Method::AvgCntf, Method::Cfp,
                          Method::Constant});
  plan.eval.max_context = 128;
  plan.eval.max_query = 4096;
  const auto result =
      harness::run_realworld(data, 5, plan, random_checkpoint());

  CHECK_FALSE(result.counterfactual_available);
  // Methods whose inputs are missing are skipped, never faked.
  CHECK(result.skipped_methods ==
        std::vector<std::string>{"avgcntf", "cfp"});
  for (const auto& rep : result.pooled_reports) {
    CHECK_FALSE(rep.has_counterfactual);
    CHECK(rep.ate == 0.0);  // zeroed, flagged unavailable
    CHECK(rep.auc > 0.0);   // DSP/AUC still computed
  }
}

TEST_CASE("complexity sweep emits rows across the node grid") {
  harness::ComplexityOptions options;
  options.node_grid = {12, 40};
  options.per_size = 2;
  options.n_samples = 200;
  const auto rows =
      harness::run_complexity(random_checkpoint(), options, 3);
  CHECK(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK((row.nodes == 12 || row.nodes == 40));
    CHECK(row.dsp >= 0.0);
    CHECK(row.auc_bias > 0.0);
  }
  const std::string dir = temp_dir("complexity");
  harness::write_complexity(rows, dir);
  CHECK(fs::exists(dir + "/ablation_complexity.csv"));
}
