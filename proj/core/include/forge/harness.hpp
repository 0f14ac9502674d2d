#ifndef FORGE_HARNESS_HPP
#define FORGE_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/baselines.hpp"
#include "forge/case_studies.hpp"
#include "forge/datasets_io.hpp"
#include "forge/metrics.hpp"
#include "forge/pfn/checkpoint.hpp"

namespace forge::harness {

struct ExperimentPlan {
  cases::SuiteOptions suite;
  std::vector<baselines::Method> methods;
  baselines::EvalOptions eval;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Scores one method's predictions against a bundle's query ground truth.
// Counterfactual metrics stay zeroed (and flagged absent) without a twin.
metrics::MetricsReport score_predictions(
    const std::string& dataset_id, const std::string& method,
    const metrics::PredictionSet& preds,
    const std::vector<std::int8_t>& y_obs_query,
    const std::vector<std::int8_t>& y_fair_query);

struct MethodEval {
  metrics::MetricsReport report;
  metrics::PredictionSet preds;
};

// Every method evaluated on every bundle over one shared split per bundle.
// Imported methods append extra columns to results; `methods` covers the
// built-in ones only (same order as the leading columns).
struct SuiteEvaluation {
  std::vector<baselines::Method> methods;
  std::vector<std::string> bundle_ids;
  std::vector<baselines::EvalSplit> splits;      // [bundle]
  std::vector<std::vector<MethodEval>> results;  // [bundle][method]

  std::size_t column_count() const {
    return results.empty() ? 0 : results.front().size();
  }
  const MethodEval& at(std::size_t bundle, baselines::Method m) const;
};

SuiteEvaluation evaluate_suite(const std::vector<cases::CaseBundle>& bundles,
                               const ExperimentPlan& plan,
                               const pfn::Checkpoint& checkpoint);

// Importable external predictions (one vector per bundle, aligned with the
// shared query rows) slot into the evaluation as an extra named method.
void attach_imported_method(SuiteEvaluation& eval,
                            const std::vector<cases::CaseBundle>& bundles,
                            const std::string& name,
                            const std::vector<metrics::PredictionSet>& preds);

// ---------------------------------------------------------------------------
// Fairness-accuracy trade-off (per-dataset Pareto fronts + mean ranks)

struct TradeoffRow {
  std::string method;
  std::string dataset;
  double fairness_cost = 0.0;  // |ate|
  double error = 0.0;          // 1 - auc
  bool on_front = false;
  bool uses_causal_information = false;
};

struct TradeoffResult {
  std::vector<TradeoffRow> rows;
  std::map<std::string, double> pareto_share;  // fraction of datasets on front
  std::map<std::string, double> average_rank_ate;  // rank of |ate|
};

TradeoffResult run_tradeoff(const SuiteEvaluation& eval);
void write_tradeoff(const TradeoffResult& result, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Quintile ablations (base ATE, sigma, dataset size)

struct AblationRow {
  std::string bucket;  // Q1..Q5
  std::string method;
  double lower = 0.0, upper = 0.0;  // key range
  std::size_t count = 0;
  double median_ate = 0.0;      // signed
  double median_abs_ate = 0.0;
  double iqr_ate = 0.0;         // of signed prediction ATE
};

struct AblationResult {
  std::string axis;
  std::vector<AblationRow> rows;
};

AblationResult run_ablation(const SuiteEvaluation& eval,
                            const std::vector<cases::CaseBundle>& bundles,
                            cases::QuintileKey axis);
void write_ablation(const AblationResult& result, const std::string& out_dir);

// Prior-graph complexity sweep: FairPFN on prior samples of growing node
// count; feature count capped at the trained width.
struct ComplexityRow {
  int nodes = 0;
  std::string dataset;
  double dsp = 0.0;
  double auc_bias = 0.0;
  double auc_fair = 0.0;
};

struct ComplexityOptions {
  std::vector<int> node_grid{12, 20, 40, 80, 120, 160, 200};
  int per_size = 5;
  int n_samples = 768;
};

std::vector<ComplexityRow> run_complexity(const pfn::Checkpoint& checkpoint,
                                          const ComplexityOptions& options,
                                          std::uint64_t seed);
void write_complexity(const std::vector<ComplexityRow>& rows,
                      const std::string& out_dir);

// ---------------------------------------------------------------------------
// Prior-violating stress report (measurement only, no pass/fail)

struct StressRow {
  std::string group;
  std::string dataset;
  std::string method;
  double ate = 0.0;
  double auc = 0.0;
};

struct StressResult {
  std::vector<StressRow> rows;
};

StressResult run_stress(const ExperimentPlan& plan,
                        const pfn::Checkpoint& checkpoint);
void write_stress(const StressResult& result, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Difference-to-reference tables

struct DifferenceRow {
  std::string method;
  std::string group;  // case-study group or "average"
  metrics::DifferenceSummary summary;
};

std::vector<DifferenceRow> difference_table(
    const SuiteEvaluation& eval, const std::vector<cases::CaseBundle>& bundles,
    baselines::Method reference);
void write_difference_table(const std::vector<DifferenceRow>& rows,
                            const std::string& out_dir);

// ---------------------------------------------------------------------------
// Real-world K-fold pipeline

struct KendallRow {
  std::string method;
  std::string column;
  double tau = 0.0;
};

struct RealWorldResult {
  std::vector<metrics::MetricsReport> fold_reports;    // dataset_id = foldK
  std::vector<metrics::MetricsReport> pooled_reports;  // dataset_id = pooled
  // Concatenated fold predictions per method, aligned with pooled_reports;
  // pooled_y carries the matching observed labels.
  std::vector<metrics::PredictionSet> pooled_preds;
  std::vector<std::int8_t> pooled_y;
  // Kendall correlations of observables (and supplied noise terms) with the
  // pooled predictions.
  std::vector<KendallRow> kendall;
  std::vector<std::string> skipped_methods;
  bool counterfactual_available = false;
};

RealWorldResult run_realworld(const io::LoadedDataset& data, int folds,
                              const ExperimentPlan& plan,
                              const pfn::Checkpoint& checkpoint);
void write_realworld(const RealWorldResult& result, const std::string& out_dir);

}  // namespace forge::harness

#endif  // FORGE_HARNESS_HPP
