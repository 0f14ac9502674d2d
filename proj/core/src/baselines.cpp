#include "forge/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "forge/errors.hpp"
#include "forge/pfn/train.hpp"
#include "forge/rng.hpp"

namespace forge::baselines {
namespace {

MatrixD take_rows(const MatrixD& m, const std::vector<std::size_t>& ids) {
  MatrixD out(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(ids[i], j);
  return out;
}

std::vector<std::int8_t> take(const std::vector<std::int8_t>& v,
                              const std::vector<std::size_t>& ids) {
  std::vector<std::int8_t> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = v[ids[i]];
  return out;
}

MatrixD append_column(const MatrixD& m, const std::vector<double>& col) {
  MatrixD out(m.rows(), m.cols() + 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    out(i, m.cols()) = col[i];
  }
  return out;
}

std::vector<double> noise_column(std::size_t n, Rng& rng) {
  std::vector<double> col(n);
  for (auto& v : col) v = rng.normal();
  return col;
}

std::vector<double> run_predict(const pfn::Checkpoint& ckpt,
                                const MatrixD& ctx_features,
                                const std::vector<std::int8_t>& ctx_labels,
                                const MatrixD& query_features,
                                int protected_index) {
  return pfn::predict_raw(ckpt, ctx_features, ctx_labels, query_features,
                          protected_index);
}

std::vector<double> average(const std::vector<double>& a,
                            const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

MatrixD flip_column(MatrixD m, std::size_t col) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, col) = 1.0 - m(i, col);
  return m;
}

std::vector<std::string> cfp_column_names(const EvalData& data, int level) {
  std::vector<std::string> names;
  const auto add_hidden = [&](bool want_u) {
    if (!data.fair_variables) return;
    for (const auto& [name, col] : *data.fair_variables) {
      const bool is_u = name == "U" || name.rfind("U_", 0) == 0;
      if (is_u == want_u) names.push_back("hidden:" + name);
    }
  };
  if (level == 1 || level == 0) {
    if (data.fair_observables)
      for (const auto& n : *data.fair_observables) names.push_back("obs:" + n);
  }
  if (level == 2 || level == 0) add_hidden(true);
  if (level == 3 || level == 0) add_hidden(false);
  if (level != 0 && level != 1 && level != 2 && level != 3)
    throw ConfigError("cfp level must be 1, 2, 3 or 0 (auto)");
  if (names.empty())
    throw ConfigError("requested fair columns are absent from this dataset");
  return names;
}

MatrixD cfp_matrix(const EvalData& data,
                   const std::vector<std::string>& names,
                   const std::vector<std::size_t>& ids) {
  MatrixD out(ids.size(), names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string& tag = names[c];
    if (tag.rfind("obs:", 0) == 0) {
      const std::string col = tag.substr(4);
      // Locate the named observable among the feature columns.
      const auto& d = *data.obs;
      int x_index = -1;
      for (std::size_t j = 0, src = 0; j < d.column_names.size(); ++j) {
        if (j == static_cast<std::size_t>(d.protected_index)) continue;
        if (d.column_names[j] == col) x_index = static_cast<int>(src);
        ++src;
      }
      if (x_index < 0)
        throw ConfigError("fair observable '" + col + "' not found");
      for (std::size_t i = 0; i < ids.size(); ++i)
        out(i, c) = d.x(ids[i], static_cast<std::size_t>(x_index));
    } else {
      const std::string col = tag.substr(7);
      const auto& columns = *data.fair_variables;
      const auto it = columns.find(col);
      if (it == columns.end())
        throw ConfigError("fair column '" + col + "' not found");
      for (std::size_t i = 0; i < ids.size(); ++i)
        out(i, c) = it->second[ids[i]];
    }
  }
  return out;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::FairPFN: return "fairpfn";
    case Method::Unfair: return "unfair";
    case Method::Unaware: return "unaware";
    case Method::AvgCntf: return "avgcntf";
    case Method::Constant: return "constant";
    case Method::Random: return "random";
    case Method::Cfp: return "cfp";
  }
  return "fairpfn";
}

Method method_from_name(const std::string& name) {
  for (int m = 0; m <= static_cast<int>(Method::Cfp); ++m)
    if (name == method_name(static_cast<Method>(m)))
      return static_cast<Method>(m);
  throw ConfigError("unknown method '" + name + "'");
}

bool uses_causal_information(Method m) {
  return m == Method::AvgCntf || m == Method::Cfp;
}

EvalData eval_data(const cases::CaseBundle& bundle) {
  EvalData data;
  data.obs = &bundle.observational;
  data.cf = &bundle.counterfactual;
  data.fair_variables = &bundle.fair_variables;
  data.fair_observables = &bundle.fair_observables;
  return data;
}

EvalSplit make_eval_split(std::size_t n_rows, std::size_t max_context,
                          std::size_t max_query, std::uint64_t seed) {
  if (n_rows < 2) throw DimensionError("eval split needs at least two rows");
  std::vector<std::size_t> perm(n_rows);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x5b117));
  for (std::size_t i = n_rows; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  EvalSplit split;
  const std::size_t ctx = std::min(max_context, n_rows / 2);
  const std::size_t query = std::min(max_query, n_rows - ctx);
  split.context_ids.assign(perm.begin(), perm.begin() + ctx);
  split.query_ids.assign(perm.begin() + ctx, perm.begin() + ctx + query);
  return split;
}

metrics::PredictionSet evaluate_method(Method method, const EvalData& data,
                                       const pfn::Checkpoint& checkpoint,
                                       const EvalSplit& split,
                                       const EvalOptions& options) {
  if (!data.obs) throw DimensionError("evaluate_method needs a dataset");
  const TabularDataset& obs = *data.obs;
  const bool has_cf = data.cf != nullptr;
  const std::size_t nq = split.query_ids.size();
  Rng rng(mix_seed(options.seed, 0xba5e0 + static_cast<std::uint64_t>(method)));

  metrics::PredictionSet out;
  out.a = take(obs.a, split.query_ids);

  const std::vector<std::int8_t> ctx_labels = take(obs.y, split.context_ids);

  switch (method) {
    case Method::Constant: {
      std::size_t ones = 0;
      for (auto y : ctx_labels) ones += y == 1;
      const double p = 2 * ones >= ctx_labels.size() ? 1.0 : 0.0;
      out.probs_obs.assign(nq, p);
      out.probs_cf.assign(nq, p);
      return out;
    }
    case Method::Random: {
      out.probs_obs.resize(nq);
      for (auto& v : out.probs_obs) v = rng.uniform01();
      out.probs_cf.resize(nq);
      for (auto& v : out.probs_cf) v = rng.uniform01();
      return out;
    }
    default:
      break;
  }

  const MatrixD obs_combined = obs.combined();
  const MatrixD q_obs = take_rows(obs_combined, split.query_ids);
  MatrixD q_cf;
  if (has_cf) q_cf = take_rows(data.cf->combined(), split.query_ids);

  if (method == Method::FairPFN) {
    const MatrixD ctx = take_rows(obs_combined, split.context_ids);
    out.probs_obs =
        run_predict(checkpoint, ctx, ctx_labels, q_obs, obs.protected_index);
    if (has_cf)
      out.probs_cf =
          run_predict(checkpoint, ctx, ctx_labels, q_cf, obs.protected_index);
    return out;
  }

  if (method == Method::Cfp) {
    const std::vector<std::string> cols =
        cfp_column_names(data, options.cfp_level);
    const MatrixD fair_ctx = cfp_matrix(data, cols, split.context_ids);
    const MatrixD fair_q = cfp_matrix(data, cols, split.query_ids);
    const std::vector<double> ctx_noise =
        noise_column(fair_ctx.rows(), rng);
    const std::vector<double> q_noise = noise_column(fair_q.rows(), rng);
    const MatrixD ctx = append_column(fair_ctx, ctx_noise);
    const MatrixD q = append_column(fair_q, q_noise);
    const int prot = static_cast<int>(fair_ctx.cols());
    const std::vector<double> p =
        run_predict(checkpoint, ctx, ctx_labels, q, prot);
    out.probs_obs = p;
    // Fair columns are invariant under the protected flip, so the
    // counterfactual prediction coincides with the observational one.
    if (has_cf) out.probs_cf = p;
    return out;
  }

  // Unfair / Unaware / AvgCntf share the noise-protected fit: original
  // columns (the real protected attribute among them, demoted to an ordinary
  // feature) plus a fresh noise column flagged as protected. Query rows keep
  // one noise value per row across worlds.
  const MatrixD ctx_plain = take_rows(obs_combined, split.context_ids);
  const std::vector<double> ctx_noise = noise_column(ctx_plain.rows(), rng);
  const MatrixD ctx = append_column(ctx_plain, ctx_noise);
  const int prot = static_cast<int>(obs_combined.cols());
  const std::vector<double> q_noise = noise_column(nq, rng);
  const MatrixD q_obs_n = append_column(q_obs, q_noise);

  switch (method) {
    case Method::Unfair: {
      out.probs_obs = run_predict(checkpoint, ctx, ctx_labels, q_obs_n, prot);
      if (has_cf) {
        const MatrixD q_cf_n = append_column(q_cf, q_noise);
        out.probs_cf = run_predict(checkpoint, ctx, ctx_labels, q_cf_n, prot);
      }
      return out;
    }
    case Method::Unaware: {
      const auto col = static_cast<std::size_t>(obs.protected_index);
      out.probs_obs = average(
          run_predict(checkpoint, ctx, ctx_labels, q_obs_n, prot),
          run_predict(checkpoint, ctx, ctx_labels, flip_column(q_obs_n, col),
                      prot));
      if (has_cf) {
        const MatrixD q_cf_n = append_column(q_cf, q_noise);
        out.probs_cf = average(
            run_predict(checkpoint, ctx, ctx_labels, q_cf_n, prot),
            run_predict(checkpoint, ctx, ctx_labels, flip_column(q_cf_n, col),
                        prot));
      }
      return out;
    }
    case Method::AvgCntf: {
      if (!has_cf)
        throw ConfigError("avgcntf requires a counterfactual twin");
      const MatrixD q_cf_n = append_column(q_cf, q_noise);
      const std::vector<double> p = average(
          run_predict(checkpoint, ctx, ctx_labels, q_obs_n, prot),
          run_predict(checkpoint, ctx, ctx_labels, q_cf_n, prot));
      out.probs_obs = p;
      out.probs_cf = p;
      return out;
    }
    default:
      throw ConfigError("unhandled method");
  }
}

}  // namespace forge::baselines
