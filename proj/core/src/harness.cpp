#include "forge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "forge/errors.hpp"
#include "forge/pfn/train.hpp"
#include "forge/rng.hpp"

namespace fs = std::filesystem;

namespace forge::harness {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min<int>(threads, static_cast<int>(count));
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    });
  for (auto& t : pool) t.join();
}

std::vector<std::int8_t> take(const std::vector<std::int8_t>& v,
                              const std::vector<std::size_t>& ids) {
  std::vector<std::int8_t> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = v[ids[i]];
  return out;
}

double safe_auc(const std::vector<double>& scores,
                const std::vector<std::int8_t>& labels) {
  try {
    return metrics::auc(scores, labels);
  } catch (const NumericError&) {
    return 0.5;  // single-class query slice carries no ranking signal
  }
}

std::ofstream open_csv(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

metrics::MetricsReport score_predictions(
    const std::string& dataset_id, const std::string& method,
    const metrics::PredictionSet& preds,
    const std::vector<std::int8_t>& y_obs_query,
    const std::vector<std::int8_t>& y_fair_query) {
  metrics::MetricsReport r;
  r.dataset_id = dataset_id;
  r.method = method;
  r.has_counterfactual = preds.has_counterfactual();
  if (r.has_counterfactual) {
    r.ate = metrics::ate(preds.probs_obs, preds.probs_cf, preds.a);
    r.ae = metrics::summarize_ae(
        metrics::absolute_error(preds.probs_obs, preds.probs_cf));
  }
  r.dsp = metrics::dsp(preds.probs_obs, preds.a);
  r.auc = safe_auc(preds.probs_obs, y_obs_query);
  r.error = 1.0 - r.auc;
  if (!y_fair_query.empty())
    r.auc_fair = safe_auc(preds.probs_obs, y_fair_query);
  return r;
}

const MethodEval& SuiteEvaluation::at(std::size_t bundle,
                                      baselines::Method m) const {
  for (std::size_t i = 0; i < methods.size(); ++i)
    if (methods[i] == m) return results[bundle][i];
  throw ConfigError("method not part of this evaluation");
}

SuiteEvaluation evaluate_suite(const std::vector<cases::CaseBundle>& bundles,
                               const ExperimentPlan& plan,
                               const pfn::Checkpoint& checkpoint) {
  SuiteEvaluation eval;
  eval.methods = plan.methods;
  eval.bundle_ids.resize(bundles.size());
  eval.splits.resize(bundles.size());
  eval.results.resize(bundles.size());

  parallel_for(bundles.size(), plan.threads, [&](std::size_t b) {
    const cases::CaseBundle& bundle = bundles[b];
    eval.bundle_ids[b] = bundle.id;
    const std::uint64_t bundle_seed = mix_seed(plan.seed, 0xe7a1 + b);
    const baselines::EvalSplit split = baselines::make_eval_split(
        bundle.observational.n_rows(), plan.eval.max_context,
        plan.eval.max_query, bundle_seed);
    const std::vector<std::int8_t> y_obs_q =
        take(bundle.observational.y, split.query_ids);
    const std::vector<std::int8_t> y_fair_q = take(bundle.y_fair, split.query_ids);
    const baselines::EvalData data = baselines::eval_data(bundle);

    eval.results[b].resize(plan.methods.size());
    for (std::size_t m = 0; m < plan.methods.size(); ++m) {
      baselines::EvalOptions options = plan.eval;
      options.seed = mix_seed(bundle_seed, 0x3e7 + m);
      MethodEval me;
      me.preds = baselines::evaluate_method(plan.methods[m], data, checkpoint,
                                            split, options);
      me.report = score_predictions(
          bundle.id, baselines::method_name(plan.methods[m]), me.preds,
          y_obs_q, y_fair_q);
      me.report.uses_causal_information =
          baselines::uses_causal_information(plan.methods[m]);
      eval.results[b][m] = std::move(me);
    }
    eval.splits[b] = split;
  });
  return eval;
}

void attach_imported_method(SuiteEvaluation& eval,
                            const std::vector<cases::CaseBundle>& bundles,
                            const std::string& name,
                            const std::vector<metrics::PredictionSet>& preds) {
  if (preds.size() != eval.results.size() || preds.size() != bundles.size())
    throw DimensionError("imported predictions must cover every bundle");
  for (std::size_t b = 0; b < preds.size(); ++b) {
    const auto& split = eval.splits[b];
    if (preds[b].probs_obs.size() != split.query_ids.size())
      throw DimensionError("imported predictions misaligned with query rows");
    MethodEval me;
    me.preds = preds[b];
    me.preds.a = take(bundles[b].observational.a, split.query_ids);
    me.report = score_predictions(
        eval.bundle_ids[b], name, me.preds,
        take(bundles[b].observational.y, split.query_ids),
        take(bundles[b].y_fair, split.query_ids));
    eval.results[b].push_back(std::move(me));
  }
}

TradeoffResult run_tradeoff(const SuiteEvaluation& eval) {
  TradeoffResult result;
  const std::size_t n_bundles = eval.results.size();
  const std::size_t n_methods = eval.column_count();
  std::map<std::string, std::size_t> front_hits;
  std::vector<std::vector<double>> rank_table(
      n_methods, std::vector<double>(n_bundles, 0.0));

  for (std::size_t b = 0; b < n_bundles; ++b) {
    std::vector<std::pair<double, double>> points;
    for (std::size_t m = 0; m < n_methods; ++m) {
      const auto& rep = eval.results[b][m].report;
      points.emplace_back(std::abs(rep.ate), rep.error);
      rank_table[m][b] = std::abs(rep.ate);
    }
    const std::vector<bool> front = metrics::pareto_front(points);
    for (std::size_t m = 0; m < n_methods; ++m) {
      const auto& rep = eval.results[b][m].report;
      TradeoffRow row;
      row.method = rep.method;
      row.dataset = rep.dataset_id;
      row.fairness_cost = points[m].first;
      row.error = points[m].second;
      row.on_front = front[m];
      row.uses_causal_information = rep.uses_causal_information;
      result.rows.push_back(std::move(row));
      if (front[m]) ++front_hits[rep.method];
    }
  }
  const std::vector<double> ranks = metrics::average_rank(rank_table);
  for (std::size_t m = 0; m < n_methods; ++m) {
    const std::string& name = eval.results.front()[m].report.method;
    result.pareto_share[name] =
        static_cast<double>(front_hits[name]) / static_cast<double>(n_bundles);
    result.average_rank_ate[name] = ranks[m];
  }
  return result;
}

void write_tradeoff(const TradeoffResult& result, const std::string& out_dir) {
  auto out = open_csv(fs::path(out_dir) / "tradeoff.csv");
  out << "method,dataset,fairness_cost,error,on_front,uses_causal_information\n";
  for (const auto& r : result.rows)
    out << r.method << ',' << r.dataset << ',' << fmt(r.fairness_cost) << ','
        << fmt(r.error) << ',' << (r.on_front ? 1 : 0) << ','
        << (r.uses_causal_information ? 1 : 0) << '\n';
  auto agg = open_csv(fs::path(out_dir) / "tradeoff_summary.csv");
  agg << "method,pareto_share,average_rank_ate\n";
  for (const auto& [name, share] : result.pareto_share)
    agg << name << ',' << fmt(share) << ','
        << fmt(result.average_rank_ate.at(name)) << '\n';
}

AblationResult run_ablation(const SuiteEvaluation& eval,
                            const std::vector<cases::CaseBundle>& bundles,
                            cases::QuintileKey axis) {
  AblationResult result;
  result.axis = axis == cases::QuintileKey::BaseAte
                    ? "base_ate"
                    : axis == cases::QuintileKey::Sigma ? "sigma" : "n";
  const auto buckets = cases::quintile_split(bundles, axis);
  for (const auto& bucket : buckets) {
    for (std::size_t m = 0; m < eval.column_count(); ++m) {
      std::vector<double> ates, abs_ates;
      for (std::size_t idx : bucket.indices) {
        const double a = eval.results[idx][m].report.ate;
        ates.push_back(a);
        abs_ates.push_back(std::abs(a));
      }
      AblationRow row;
      row.bucket = bucket.label;
      row.method = eval.results.front()[m].report.method;
      row.lower = bucket.lower;
      row.upper = bucket.upper;
      row.count = bucket.indices.size();
      if (!ates.empty()) {
        row.median_ate = metrics::median(ates);
        row.median_abs_ate = metrics::median(abs_ates);
        row.iqr_ate = metrics::interquartile_range(ates);
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_ablation(const AblationResult& result, const std::string& out_dir) {
  auto out = open_csv(fs::path(out_dir) /
                      ("ablation_" + result.axis + ".csv"));
  out << "axis,bucket,method,lower,upper,count,median_ate,median_abs_ate,"
         "iqr_ate\n";
  for (const auto& r : result.rows)
    out << result.axis << ',' << r.bucket << ',' << r.method << ','
        << fmt(r.lower) << ',' << fmt(r.upper) << ',' << r.count << ','
        << fmt(r.median_ate) << ',' << fmt(r.median_abs_ate) << ','
        << fmt(r.iqr_ate) << '\n';
}

std::vector<ComplexityRow> run_complexity(const pfn::Checkpoint& checkpoint,
                                          const ComplexityOptions& options,
                                          std::uint64_t seed) {
  std::vector<ComplexityRow> rows;
  const int depth = 4;
  for (int nodes : options.node_grid) {
    const int width = std::max(2, nodes / depth);
    prior::PriorConfig config;
    config.num_exogenous = width;
    config.depth = depth;
    config.num_samples = options.n_samples;
    config.num_features =
        std::min(checkpoint.config.max_features - 1,
                 prior::feature_slot_count(width, depth));
    config.sparsity_log_range = {0.3, 1.0};
    config.noise_std_range = {0.05, 0.5};
    for (int i = 0; i < options.per_size; ++i) {
      const std::uint64_t s = mix_seed(seed, 0xc0c0 + nodes * 131 + i);
      prior::PriorSample sample;
      try {
        sample = std::move(prior::sample_prior_batch(config, 1, s).front());
      } catch (const DegenerateSampleError&) {
        continue;
      }
      const std::size_t n = sample.dataset.n_rows();
      const baselines::EvalSplit split =
          baselines::make_eval_split(n, 256, 512, s);
      baselines::EvalData data;
      data.obs = &sample.dataset;
      baselines::EvalOptions eval_opts;
      eval_opts.seed = s;
      const metrics::PredictionSet preds = baselines::evaluate_method(
          baselines::Method::FairPFN, data, checkpoint, split, eval_opts);
      ComplexityRow row;
      row.nodes = width * depth;
      row.dataset = "nodes" + std::to_string(row.nodes) + "-" +
                    std::to_string(i);
      row.dsp = metrics::dsp(preds.probs_obs, preds.a);
      row.auc_bias = safe_auc(preds.probs_obs,
                              take(sample.dataset.y, split.query_ids));
      row.auc_fair =
          safe_auc(preds.probs_obs, take(sample.y_fair, split.query_ids));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_complexity(const std::vector<ComplexityRow>& rows,
                      const std::string& out_dir) {
  auto out = open_csv(fs::path(out_dir) / "ablation_complexity.csv");
  out << "nodes,dataset,dsp,auc_bias,auc_fair\n";
  for (const auto& r : rows)
    out << r.nodes << ',' << r.dataset << ',' << fmt(r.dsp) << ','
        << fmt(r.auc_bias) << ',' << fmt(r.auc_fair) << '\n';
}

StressResult run_stress(const ExperimentPlan& plan,
                        const pfn::Checkpoint& checkpoint) {
  cases::SuiteOptions suite = plan.suite;
  suite.groups = {cases::Group::EndogenousA, cases::Group::MultipleA};
  const std::vector<cases::CaseBundle> bundles =
      cases::generate_suite(suite, mix_seed(plan.seed, 0x57e5));

  ExperimentPlan local = plan;
  local.methods = {baselines::Method::FairPFN, baselines::Method::Unfair};
  const SuiteEvaluation eval = evaluate_suite(bundles, local, checkpoint);

  StressResult result;
  for (std::size_t b = 0; b < bundles.size(); ++b)
    for (std::size_t m = 0; m < eval.methods.size(); ++m) {
      const auto& rep = eval.results[b][m].report;
      result.rows.push_back({cases::group_name(bundles[b].config.group),
                             rep.dataset_id, rep.method, rep.ate, rep.auc});
    }
  return result;
}

void write_stress(const StressResult& result, const std::string& out_dir) {
  auto out = open_csv(fs::path(out_dir) / "stress.csv");
  out << "group,dataset,method,ate,auc\n";
  for (const auto& r : result.rows)
    out << r.group << ',' << r.dataset << ',' << r.method << ',' << fmt(r.ate)
        << ',' << fmt(r.auc) << '\n';
}

std::vector<DifferenceRow> difference_table(
    const SuiteEvaluation& eval, const std::vector<cases::CaseBundle>& bundles,
    baselines::Method reference) {
  std::size_t ref_index = eval.methods.size();
  for (std::size_t m = 0; m < eval.methods.size(); ++m)
    if (eval.methods[m] == reference) ref_index = m;
  if (ref_index == eval.methods.size())
    throw ConfigError("reference method was not evaluated");

  std::vector<DifferenceRow> rows;
  std::vector<std::string> groups;
  for (const auto& bundle : bundles) {
    const std::string g = cases::group_name(bundle.config.group);
    if (std::find(groups.begin(), groups.end(), g) == groups.end())
      groups.push_back(g);
  }
  groups.push_back("average");

  for (std::size_t m = 0; m < eval.column_count(); ++m) {
    if (m == ref_index) continue;
    for (const std::string& group : groups) {
      std::vector<double> cand, ref;
      for (std::size_t b = 0; b < bundles.size(); ++b) {
        if (group != "average" &&
            cases::group_name(bundles[b].config.group) != group)
          continue;
        const auto& c = eval.results[b][m].preds.probs_obs;
        const auto& r = eval.results[b][ref_index].preds.probs_obs;
        cand.insert(cand.end(), c.begin(), c.end());
        ref.insert(ref.end(), r.begin(), r.end());
      }
      if (cand.empty()) continue;
      DifferenceRow row;
      row.method = eval.results.front()[m].report.method;
      row.group = group;
      row.summary = metrics::difference_to_reference(cand, ref);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_difference_table(const std::vector<DifferenceRow>& rows,
                            const std::string& out_dir) {
  auto out = open_csv(fs::path(out_dir) / "difference_to_reference.csv");
  out << "method,group,mean,std,outlier_pct\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.group << ',' << fmt(r.summary.mean) << ','
        << fmt(r.summary.stddev) << ',' << fmt(r.summary.outlier_pct) << '\n';
}

RealWorldResult run_realworld(const io::LoadedDataset& data, int folds,
                              const ExperimentPlan& plan,
                              const pfn::Checkpoint& checkpoint) {
  RealWorldResult result;
  result.counterfactual_available = data.counterfactual.has_value();
  const TabularDataset& obs = data.observational;
  const std::size_t n = obs.n_rows();

  baselines::EvalData eval_data;
  eval_data.obs = &obs;
  if (data.counterfactual) eval_data.cf = &*data.counterfactual;
  if (!data.fair_noise.empty()) eval_data.fair_variables = &data.fair_noise;

  // Methods that need absent inputs are skipped, not faked.
  std::vector<baselines::Method> methods;
  for (auto m : plan.methods) {
    if (m == baselines::Method::AvgCntf && !data.counterfactual) {
      result.skipped_methods.push_back(baselines::method_name(m));
      continue;
    }
    if (m == baselines::Method::Cfp && data.fair_noise.empty()) {
      result.skipped_methods.push_back(baselines::method_name(m));
      continue;
    }
    methods.push_back(m);
  }

  const std::vector<io::FoldSplit> fold_splits =
      io::kfold(n, folds, mix_seed(plan.seed, 0x4ea1));

  struct Pool {
    std::vector<double> probs_obs, probs_cf;
    std::vector<std::int8_t> a;
    std::vector<std::int8_t> y;
    std::vector<std::size_t> query_ids;
  };
  std::vector<Pool> pools(methods.size());

  for (const auto& fold : fold_splits) {
    baselines::EvalSplit split;
    split.context_ids = fold.train_ids;
    if (split.context_ids.size() > plan.eval.max_context) {
      Rng rng(mix_seed(plan.seed, 0xc3f + fold.fold));
      std::vector<std::size_t> ids = fold.train_ids;
      for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.uniform_index(i)]);
      ids.resize(plan.eval.max_context);
      std::sort(ids.begin(), ids.end());
      split.context_ids = std::move(ids);
    }
    split.query_ids = fold.validation_ids;

    const std::vector<std::int8_t> y_q = take(obs.y, split.query_ids);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      baselines::EvalOptions options = plan.eval;
      options.seed = mix_seed(plan.seed, 0xf01d0 + fold.fold * 131 + m);
      const metrics::PredictionSet preds = baselines::evaluate_method(
          methods[m], eval_data, checkpoint, split, options);
      metrics::MetricsReport rep =
          score_predictions("fold" + std::to_string(fold.fold),
                            baselines::method_name(methods[m]), preds, y_q, {});
      rep.uses_causal_information =
          baselines::uses_causal_information(methods[m]);
      result.fold_reports.push_back(std::move(rep));

      Pool& pool = pools[m];
      pool.probs_obs.insert(pool.probs_obs.end(), preds.probs_obs.begin(),
                            preds.probs_obs.end());
      if (preds.has_counterfactual())
        pool.probs_cf.insert(pool.probs_cf.end(), preds.probs_cf.begin(),
                             preds.probs_cf.end());
      pool.a.insert(pool.a.end(), preds.a.begin(), preds.a.end());
      pool.y.insert(pool.y.end(), y_q.begin(), y_q.end());
      pool.query_ids.insert(pool.query_ids.end(), split.query_ids.begin(),
                            split.query_ids.end());
    }
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    const Pool& pool = pools[m];
    metrics::PredictionSet preds;
    preds.probs_obs = pool.probs_obs;
    preds.probs_cf = pool.probs_cf;
    preds.a = pool.a;
    metrics::MetricsReport rep = score_predictions(
        "pooled", baselines::method_name(methods[m]), preds, pool.y, {});
    rep.uses_causal_information = baselines::uses_causal_information(methods[m]);
    result.pooled_reports.push_back(std::move(rep));
    if (m == 0) result.pooled_y = pool.y;
    result.pooled_preds.push_back(preds);

    // Kendall correlation of every observable (and supplied noise term)
    // with the pooled predictions.
    auto tau_row = [&](const std::string& column,
                       const std::vector<double>& values) {
      try {
        result.kendall.push_back({baselines::method_name(methods[m]), column,
                                  metrics::kendall_tau(values, pool.probs_obs)});
      } catch (const NumericError&) {
        // constant column: correlation undefined, skipped
      }
    };
    const MatrixD combined = obs.combined();
    for (std::size_t j = 0; j < combined.cols(); ++j) {
      std::vector<double> col(pool.query_ids.size());
      for (std::size_t i = 0; i < pool.query_ids.size(); ++i)
        col[i] = combined(pool.query_ids[i], j);
      tau_row(obs.column_names[j], col);
    }
    for (const auto& [name, values] : data.fair_noise) {
      std::vector<double> col(pool.query_ids.size());
      for (std::size_t i = 0; i < pool.query_ids.size(); ++i)
        col[i] = values[pool.query_ids[i]];
      tau_row(name, col);
    }
  }
  return result;
}

void write_realworld(const RealWorldResult& result,
                     const std::string& out_dir) {
  std::vector<metrics::MetricsReport> all = result.fold_reports;
  all.insert(all.end(), result.pooled_reports.begin(),
             result.pooled_reports.end());
  io::emit_report(all, out_dir);
  auto out = open_csv(fs::path(out_dir) / "kendall.csv");
  out << "method,column,tau\n";
  for (const auto& r : result.kendall)
    out << r.method << ',' << r.column << ',' << fmt(r.tau) << '\n';
  if (!result.skipped_methods.empty()) {
    auto skipped = open_csv(fs::path(out_dir) / "skipped_methods.csv");
    skipped << "method,reason\n";
    for (const auto& m : result.skipped_methods)
      skipped << m << ",required inputs unavailable\n";
  }
}

}  // namespace forge::harness
