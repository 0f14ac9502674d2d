#ifndef FORGE_METRICS_HPP
#define FORGE_METRICS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace forge::metrics {

// Predictions for one method on one dataset's query rows. probs_obs holds
// the observational-world scores; probs_cf the counterfactual-world scores
// when a twin exists (same rows, protected attribute flipped).
struct PredictionSet {
  std::vector<double> probs_obs;
  std::vector<double> probs_cf;  // empty when no counterfactual data
  std::vector<std::int8_t> a;    // per-row protected value in the obs world
  std::vector<std::int8_t> labels;  // optional hard labels

  bool has_counterfactual() const { return !probs_cf.empty(); }
};

struct AeSummary {
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::array<std::uint64_t, 20> histogram{};  // 20 equal bins over [0, 1]
};

struct MetricsReport {
  std::string dataset_id;
  std::string method;
  double ate = 0.0;
  AeSummary ae;
  double dsp = 0.0;
  double auc = 0.0;          // against observed labels
  double error = 0.0;        // 1 - auc
  std::optional<double> auc_fair;  // against ground-truth fair labels
  bool has_counterfactual = false;
  bool uses_causal_information = false;
};

// Average treatment effect of row-matched predictions. Each row contributes
// its individual effect oriented as (world with A=1) - (world with A=0);
// `a` gives the observational world's protected value per row.
double ate(const std::vector<double>& probs_obs,
           const std::vector<double>& probs_cf,
           const std::vector<std::int8_t>& a);

// Unoriented mean difference, mean(p - q). Antisymmetric by construction.
double ate_raw(const std::vector<double>& p, const std::vector<double>& q);

// Per-row |obs - cf|.
std::vector<double> absolute_error(const std::vector<double>& probs_obs,
                                   const std::vector<double>& probs_cf);

AeSummary summarize_ae(const std::vector<double>& ae);

// Statistical parity difference |mean(yhat|A=1) - mean(yhat|A=0)|. By
// default predictions are thresholded at 0.5; probability mode averages the
// raw scores instead.
double dsp(const std::vector<double>& preds, const std::vector<std::int8_t>& a,
           bool probability_mode = false);

// Mann-Whitney AUC with midranks on ties.
double auc(const std::vector<double>& scores,
           const std::vector<std::int8_t>& labels);

// Kendall tau-b (tie corrected), O(n log n). Throws NumericError when a
// side is constant and the statistic is undefined.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

// Non-dominated flags for (fairness_cost, error) points, both axes
// lower-is-better. A point is dominated when another is <= in both
// coordinates and < in at least one.
std::vector<bool> pareto_front(
    const std::vector<std::pair<double, double>>& points);

// Mean rank per method over a methods x datasets table of scores where lower
// is better; ties share midranks.
std::vector<double> average_rank(const std::vector<std::vector<double>>& table);

struct DifferenceSummary {
  double mean = 0.0;
  double stddev = 0.0;       // population form (divide by n)
  double outlier_pct = 0.0;  // % of rows with |diff - mean| > 3*stddev
};

DifferenceSummary difference_to_reference(const std::vector<double>& candidate,
                                          const std::vector<double>& reference);

// Spearman rank correlation (midranks + Pearson). Used by the ablation
// directionality checks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> v);
double interquartile_range(std::vector<double> v);
double quantile_sorted(const std::vector<double>& sorted, double q);

}  // namespace forge::metrics

#endif  // FORGE_METRICS_HPP
