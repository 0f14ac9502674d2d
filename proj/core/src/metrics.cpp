#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "forge/errors.hpp"

namespace forge::metrics {
namespace {

void check_probs(const std::vector<double>& v, const char* name) {
  for (double p : v) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw NumericError(std::string(name) + " contains values outside [0,1]");
  }
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string("length mismatch in ") + what);
}

// Midranks (1-based) of v; ties share the average rank.
std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

// Counts inversions of v via merge sort; v is left sorted.
std::uint64_t count_inversions(std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return 0;
  std::vector<double> buf(n);
  std::uint64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
      const std::size_t mid = lo + width;
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += mid - i;
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
      std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
                buf.begin() + static_cast<std::ptrdiff_t>(hi),
                v.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  }
  return swaps;
}

std::uint64_t tie_pairs(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::uint64_t pairs = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    const std::uint64_t t = j - i + 1;
    pairs += t * (t - 1) / 2;
    i = j + 1;
  }
  return pairs;
}

}  // namespace

double ate(const std::vector<double>& probs_obs,
           const std::vector<double>& probs_cf,
           const std::vector<std::int8_t>& a) {
  check_aligned(probs_obs.size(), probs_cf.size(), "ate");
  check_aligned(probs_obs.size(), a.size(), "ate protected column");
  if (probs_obs.empty()) throw DimensionError("ate on empty predictions");
  check_probs(probs_obs, "probs_obs");
  check_probs(probs_cf, "probs_cf");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_obs.size(); ++i) {
    const double ite = a[i] == 1 ? probs_obs[i] - probs_cf[i]
                                 : probs_cf[i] - probs_obs[i];
    sum += ite;
  }
  return sum / static_cast<double>(probs_obs.size());
}

double ate_raw(const std::vector<double>& p, const std::vector<double>& q) {
  check_aligned(p.size(), q.size(), "ate_raw");
  if (p.empty()) throw DimensionError("ate_raw on empty predictions");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] - q[i];
  return sum / static_cast<double>(p.size());
}

std::vector<double> absolute_error(const std::vector<double>& probs_obs,
                                   const std::vector<double>& probs_cf) {
  check_aligned(probs_obs.size(), probs_cf.size(), "absolute_error");
  check_probs(probs_obs, "probs_obs");
  check_probs(probs_cf, "probs_cf");
  std::vector<double> out(probs_obs.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::abs(probs_obs[i] - probs_cf[i]);
  return out;
}

AeSummary summarize_ae(const std::vector<double>& ae) {
  AeSummary s;
  if (ae.empty()) return s;
  std::vector<double> sorted = ae;
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile_sorted(sorted, 0.5);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
           static_cast<double>(sorted.size());
  s.max = sorted.back();
  for (double v : ae) {
    auto bin = static_cast<std::size_t>(v * 20.0);
    if (bin >= 20) bin = 19;
    ++s.histogram[bin];
  }
  return s;
}

double dsp(const std::vector<double>& preds, const std::vector<std::int8_t>& a,
           bool probability_mode) {
  check_aligned(preds.size(), a.size(), "dsp");
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double v = probability_mode ? preds[i] : (preds[i] >= 0.5 ? 1.0 : 0.0);
    if (a[i] == 1) {
      sum1 += v;
      ++n1;
    } else {
      sum0 += v;
      ++n0;
    }
  }
  if (n0 == 0 || n1 == 0)
    throw NumericError("dsp requires both protected classes present");
  return std::abs(sum1 / static_cast<double>(n1) -
                  sum0 / static_cast<double>(n0));
}

double auc(const std::vector<double>& scores,
           const std::vector<std::int8_t>& labels) {
  check_aligned(scores.size(), labels.size(), "auc");
  std::uint64_t n1 = 0, n0 = 0;
  for (auto l : labels) (l == 1 ? n1 : n0)++;
  if (n0 == 0 || n1 == 0)
    throw NumericError("auc requires both label classes present");
  const std::vector<double> ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double u = rank_sum - 0.5 * static_cast<double>(n1) *
                                  static_cast<double>(n1 + 1);
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  check_aligned(x.size(), y.size(), "kendall_tau");
  const std::uint64_t n = x.size();
  if (n < 2) throw DimensionError("kendall_tau needs at least two points");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (x[i] != x[j]) return x[i] < x[j];
    return y[i] < y[j];
  });

  // Knight's construction: after sorting by (x, y), discordant pairs among
  // x-distinct entries equal the inversions of y minus inversions occurring
  // inside x-tie blocks (which are zero because blocks are y-sorted).
  const std::uint64_t n0 = n * (n - 1) / 2;
  const std::uint64_t tx = tie_pairs(x);
  const std::uint64_t ty = tie_pairs(y);

  // Pairs tied in both coordinates.
  std::uint64_t txy = 0;
  {
    std::vector<std::pair<double, double>> xy(n);
    for (std::size_t i = 0; i < n; ++i) xy[i] = {x[i], y[i]};
    std::sort(xy.begin(), xy.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && xy[j + 1] == xy[i]) ++j;
      const std::uint64_t t = j - i + 1;
      txy += t * (t - 1) / 2;
      i = j + 1;
    }
  }

  std::vector<double> y_sorted(n);
  for (std::size_t i = 0; i < n; ++i) y_sorted[i] = y[order[i]];
  const std::uint64_t swaps = count_inversions(y_sorted);

  const double num = static_cast<double>(n0) - static_cast<double>(tx) -
                     static_cast<double>(ty) + static_cast<double>(txy) -
                     2.0 * static_cast<double>(swaps);
  const double dx = static_cast<double>(n0) - static_cast<double>(tx);
  const double dy = static_cast<double>(n0) - static_cast<double>(ty);
  if (dx <= 0.0 || dy <= 0.0)
    throw NumericError("kendall_tau undefined for constant input");
  return num / std::sqrt(dx * dy);
}

std::vector<bool> pareto_front(
    const std::vector<std::pair<double, double>>& points) {
  for (const auto& [f, e] : points)
    if (!std::isfinite(f) || !std::isfinite(e))
      throw NumericError("pareto_front requires finite coordinates");
  const std::size_t n = points.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (points[i].first != points[j].first)
      return points[i].first < points[j].first;
    return points[i].second < points[j].second;
  });

  std::vector<bool> on_front(n, false);
  double best_before = std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           points[order[j + 1]].first == points[order[i]].first)
      ++j;
    const double group_min = points[order[i]].second;
    for (std::size_t k = i; k <= j; ++k) {
      const double y = points[order[k]].second;
      // Dominated by a strictly-cheaper point with y <= ours, or by a
      // same-cost point with strictly smaller y.
      on_front[order[k]] = !(best_before <= y || group_min < y);
    }
    best_before = std::min(best_before, group_min);
    i = j + 1;
  }
  return on_front;
}

std::vector<double> average_rank(
    const std::vector<std::vector<double>>& table) {
  if (table.empty()) return {};
  const std::size_t methods = table.size();
  const std::size_t datasets = table.front().size();
  for (const auto& row : table)
    if (row.size() != datasets)
      throw DimensionError("average_rank table has missing cells");
  if (datasets == 0) throw DimensionError("average_rank table has no datasets");

  std::vector<double> mean_rank(methods, 0.0);
  std::vector<double> column(methods);
  for (std::size_t d = 0; d < datasets; ++d) {
    for (std::size_t m = 0; m < methods; ++m) column[m] = table[m][d];
    const std::vector<double> ranks = midranks(column);
    for (std::size_t m = 0; m < methods; ++m) mean_rank[m] += ranks[m];
  }
  for (auto& r : mean_rank) r /= static_cast<double>(datasets);
  return mean_rank;
}

DifferenceSummary difference_to_reference(
    const std::vector<double>& candidate, const std::vector<double>& reference) {
  check_aligned(candidate.size(), reference.size(), "difference_to_reference");
  if (candidate.empty())
    throw DimensionError("difference_to_reference on empty predictions");
  const double n = static_cast<double>(candidate.size());
  DifferenceSummary s;
  for (std::size_t i = 0; i < candidate.size(); ++i)
    s.mean += candidate[i] - reference[i];
  s.mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double d = candidate[i] - reference[i] - s.mean;
    var += d * d;
  }
  s.stddev = std::sqrt(var / n);
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double d = std::abs(candidate[i] - reference[i] - s.mean);
    if (d > 3.0 * s.stddev) ++outliers;
  }
  s.outlier_pct = 100.0 * static_cast<double>(outliers) / n;
  return s;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_aligned(x.size(), y.size(), "spearman");
  if (x.size() < 2) throw DimensionError("spearman needs at least two points");
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("spearman undefined for constant ranks");
  return sxy / std::sqrt(sxx * syy);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DimensionError("quantile of empty vector");
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

double interquartile_range(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
}

}  // namespace forge::metrics
