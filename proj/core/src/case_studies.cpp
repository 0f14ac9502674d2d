#include "forge/case_studies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/errors.hpp"
#include "forge/rng.hpp"

namespace forge::cases {
namespace {

constexpr int kThresholdAttempts = 64;

// Per-row exogenous draws. Every group reads the subset it needs; the draw
// order is fixed so bundles are reproducible across groups.
struct RowNoise {
  double eps_x, eps_y, eps_z, u_latent, eps_p, eps_a;
  double a_draw, a2_draw;
};

struct World {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> features;
  std::vector<double> ystar;
};

double bern(double draw) { return draw < 0.5 ? 0.0 : 1.0; }

// Structural equations, exponential non-linearities throughout. `w` is the
// base causal effect of the protected attribute; passing w=0 produces the
// fair world on identical draws.
World evaluate(Group g, double w, const std::vector<std::int8_t>& a,
               const std::vector<RowNoise>& noise) {
  const std::size_t n = a.size();
  World out;
  auto col = [&](const std::string& name) -> std::vector<double>& {
    out.feature_names.push_back(name);
    out.features.emplace_back(n);
    return out.features.back();
  };
  out.ystar.resize(n);

  switch (g) {
    case Group::Biased: {
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xb[i] = std::exp(w * a[i] + noise[i].eps_x);
        out.ystar[i] = w * a[i] + xb[i] + noise[i].eps_y;
      }
      break;
    }
    case Group::DirectEffect: {
      auto& xf = col("X_f");
      for (std::size_t i = 0; i < n; ++i) {
        xf[i] = std::exp(noise[i].eps_x);
        out.ystar[i] = w * a[i] + xf[i] + noise[i].eps_y;
      }
      break;
    }
    case Group::IndirectEffect: {
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xb[i] = std::exp(w * a[i] + noise[i].eps_x);
        out.ystar[i] = xb[i] + noise[i].eps_y;
      }
      break;
    }
    case Group::FairObservable: {
      auto& xf = col("X_f");
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xf[i] = std::exp(noise[i].eps_x);
        xb[i] = std::exp(w * a[i] + noise[i].eps_z);
        out.ystar[i] = xf[i] + xb[i] + noise[i].eps_y;
      }
      break;
    }
    case Group::FairUnobservable: {
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xb[i] = std::exp(w * a[i] + noise[i].u_latent + noise[i].eps_x);
        out.ystar[i] = noise[i].u_latent + noise[i].eps_y;
      }
      break;
    }
    case Group::FairAdditiveNoise: {
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xb[i] = std::exp(w * a[i]) + noise[i].eps_x;
        out.ystar[i] = noise[i].eps_x + noise[i].eps_y;
      }
      break;
    }
    case Group::EndogenousA: {
      auto& xp = col("X_p");
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        xp[i] = std::exp(noise[i].eps_p);
        xb[i] = std::exp(w * a[i] + noise[i].eps_x);
        out.ystar[i] = w * a[i] + xb[i] + xp[i] + noise[i].eps_y;
      }
      break;
    }
    case Group::MultipleA: {
      auto& a2 = col("A2");
      auto& xb = col("X_b");
      for (std::size_t i = 0; i < n; ++i) {
        a2[i] = bern(noise[i].a2_draw);
        xb[i] = std::exp(w * a[i] + w * a2[i] + noise[i].eps_x);
        out.ystar[i] = w * a[i] + w * a2[i] + xb[i] + noise[i].eps_y;
      }
      break;
    }
  }
  return out;
}

TabularDataset make_dataset(const std::vector<std::int8_t>& a,
                            const World& world,
                            const std::vector<std::int8_t>& y) {
  TabularDataset d;
  d.a = a;
  d.y = y;
  d.protected_index = 0;
  d.column_names.push_back("A");
  const std::size_t n = a.size();
  d.x = MatrixD(n, world.features.size());
  for (std::size_t c = 0; c < world.features.size(); ++c) {
    d.column_names.push_back(world.feature_names[c]);
    for (std::size_t i = 0; i < n; ++i) d.x(i, c) = world.features[c][i];
  }
  d.validate();
  return d;
}

bool has_both(const std::vector<std::int8_t>& v) {
  bool s0 = false, s1 = false;
  for (auto b : v) (b == 1 ? s1 : s0) = true;
  return s0 && s1;
}

std::vector<std::int8_t> threshold(const std::vector<double>& ystar, double t) {
  std::vector<std::int8_t> y(ystar.size());
  for (std::size_t i = 0; i < ystar.size(); ++i) y[i] = ystar[i] >= t ? 1 : 0;
  return y;
}

}  // namespace

const char* group_name(Group g) {
  switch (g) {
    case Group::Biased: return "biased";
    case Group::DirectEffect: return "direct_effect";
    case Group::IndirectEffect: return "indirect_effect";
    case Group::FairObservable: return "fair_observable";
    case Group::FairUnobservable: return "fair_unobservable";
    case Group::FairAdditiveNoise: return "fair_additive_noise";
    case Group::EndogenousA: return "endogenous_a";
    case Group::MultipleA: return "multiple_a";
  }
  return "biased";
}

Group group_from_name(const std::string& name) {
  for (int g = 0; g <= static_cast<int>(Group::MultipleA); ++g)
    if (name == group_name(static_cast<Group>(g))) return static_cast<Group>(g);
  throw ConfigError("unknown case-study group '" + name + "'");
}

bool group_is_stress(Group g) {
  return g == Group::EndogenousA || g == Group::MultipleA;
}

void CaseStudyConfig::validate() const {
  if (n < 100 || n > 10000)
    throw ConfigError("case-study n must lie in [100, 10000]");
  if (!(noise_std > 0.0) || noise_std > 1.0)
    throw ConfigError("case-study sigma must lie in (0, 1]");
  if (!std::isfinite(causal_weight))
    throw ConfigError("causal weight must be finite");
}

namespace {

std::vector<RowNoise> draw_row_noise(const CaseStudyConfig& config) {
  Rng rng(mix_seed(config.seed, 0xca5e));
  const auto n = static_cast<std::size_t>(config.n);
  const double sigma = config.noise_std;
  std::vector<RowNoise> noise(n);
  for (std::size_t i = 0; i < n; ++i) {
    RowNoise& r = noise[i];
    r.eps_x = rng.normal(0.0, sigma);
    r.eps_y = rng.normal(0.0, sigma);
    r.eps_z = rng.normal(0.0, sigma);
    r.u_latent = rng.normal();
    r.eps_p = rng.normal(0.0, sigma);
    r.eps_a = rng.normal(0.0, sigma);
    r.a_draw = rng.uniform01();
    r.a2_draw = rng.uniform01();
  }
  return noise;
}

std::vector<std::int8_t> draw_protected(const CaseStudyConfig& config,
                                        const std::vector<RowNoise>& noise) {
  std::vector<std::int8_t> a(noise.size());
  if (config.group == Group::EndogenousA) {
    // A gains an observed parent: exogeneity deliberately broken.
    for (std::size_t i = 0; i < noise.size(); ++i)
      a[i] = noise[i].eps_p + noise[i].eps_a > 0.0 ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < noise.size(); ++i)
      a[i] = bern(noise[i].a_draw) > 0.5;
  }
  return a;
}

}  // namespace

CaseBundle generate_case(const CaseStudyConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0x7417e5));
  const auto n = static_cast<std::size_t>(config.n);

  const std::vector<RowNoise> noise = draw_row_noise(config);
  const std::vector<std::int8_t> a = draw_protected(config, noise);

  std::vector<std::int8_t> a_flipped(n);
  for (std::size_t i = 0; i < n; ++i) a_flipped[i] = a[i] == 1 ? 0 : 1;

  const double w = config.causal_weight;
  const World obs = evaluate(config.group, w, a, noise);
  const World cf = evaluate(config.group, w, a_flipped, noise);
  const World fair = evaluate(config.group, 0.0, a, noise);

  // One discretization rule for all three worlds: start from the mean of the
  // observational outcome, falling back to resampled empirical quantiles
  // while a target stays single-class.
  double t = std::accumulate(obs.ystar.begin(), obs.ystar.end(), 0.0) /
             static_cast<double>(n);
  std::vector<std::int8_t> y_obs, y_fair;
  bool ok = false;
  for (int attempt = 0; attempt < kThresholdAttempts; ++attempt) {
    y_obs = threshold(obs.ystar, t);
    y_fair = threshold(fair.ystar, t);
    if (has_both(y_obs) && has_both(y_fair)) {
      ok = true;
      break;
    }
    std::vector<double> sorted = obs.ystar;
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(rng.uniform(0.2, 0.8) *
                                              static_cast<double>(n - 1));
    t = sorted[std::min(idx, n - 1)];
  }
  if (!ok)
    throw DegenerateSampleError("case-study outcome stayed single-class");
  const std::vector<std::int8_t> y_cf = threshold(cf.ystar, t);

  CaseBundle bundle;
  bundle.config = config;
  bundle.prior_violating = group_is_stress(config.group);
  bundle.observational = make_dataset(a, obs, y_obs);
  bundle.counterfactual = make_dataset(a_flipped, cf, y_cf);
  bundle.y_fair = y_fair;
  bundle.outcome_threshold = t;
  bundle.id = std::string(group_name(config.group)) + "-" +
              std::to_string(config.seed);

  // Matched-pair treatment effect on the discretized outcome.
  double do1 = 0.0, do0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y1 = a[i] == 1 ? y_obs[i] : y_cf[i];
    const double y0 = a[i] == 1 ? y_cf[i] : y_obs[i];
    do1 += y1;
    do0 += y0;
  }
  bundle.base_ate = (do1 - do0) / static_cast<double>(n);

  switch (config.group) {
    case Group::Biased:
    case Group::IndirectEffect:
    case Group::FairAdditiveNoise:
      break;
    case Group::DirectEffect:
    case Group::FairObservable:
      bundle.fair_observables.push_back("X_f");
      break;
    case Group::FairUnobservable: {
      std::vector<double> u(n);
      for (std::size_t i = 0; i < n; ++i) u[i] = noise[i].u_latent;
      bundle.fair_variables["U"] = std::move(u);
      break;
    }
    case Group::EndogenousA:
      bundle.fair_observables.push_back("X_p");
      break;
    case Group::MultipleA:
      break;
  }
  {
    std::vector<double> ex(n);
    for (std::size_t i = 0; i < n; ++i) ex[i] = noise[i].eps_x;
    bundle.fair_variables["eps_X"] = std::move(ex);
  }
  if (config.group == Group::FairObservable) {
    std::vector<double> ez(n);
    for (std::size_t i = 0; i < n; ++i) ez[i] = noise[i].eps_z;
    bundle.fair_variables["eps_Z"] = std::move(ez);
  }
  return bundle;
}

std::vector<std::int8_t> refair_with_flipped_protected(const CaseBundle& bundle) {
  const std::vector<RowNoise> noise = draw_row_noise(bundle.config);
  std::vector<std::int8_t> flipped = draw_protected(bundle.config, noise);
  for (auto& v : flipped) v = v == 1 ? 0 : 1;
  const World fair = evaluate(bundle.config.group, 0.0, flipped, noise);
  return threshold(fair.ystar, bundle.outcome_threshold);
}

std::vector<CaseBundle> generate_suite(const SuiteOptions& options,
                                       std::uint64_t seed) {
  if (options.per_group < 1) throw ConfigError("per_group must be >= 1");
  std::vector<Group> groups = options.groups;
  if (groups.empty())
    for (int g = 0; g < kPaperGroupCount; ++g)
      groups.push_back(static_cast<Group>(g));

  std::vector<CaseBundle> suite;
  suite.reserve(groups.size() * static_cast<std::size_t>(options.per_group));
  std::size_t slot = 0;
  for (Group g : groups) {
    for (int i = 0; i < options.per_group; ++i, ++slot) {
      Rng rng(mix_seed(seed, 0xfeed0000ULL + slot));
      CaseStudyConfig config;
      config.group = g;
      const double mag = rng.log_uniform(options.weight_magnitude.first,
                                         options.weight_magnitude.second);
      config.causal_weight = rng.bernoulli(0.5) ? mag : -mag;
      config.noise_std = rng.log_uniform(options.sigma_range.first,
                                         options.sigma_range.second);
      config.n = static_cast<int>(std::llround(
          rng.log_uniform(static_cast<double>(options.n_range.first),
                          static_cast<double>(options.n_range.second))));
      config.n = std::clamp(config.n, options.n_range.first,
                            options.n_range.second);
      config.seed = mix_seed(seed, 0xb0d1e0000ULL + slot);
      CaseBundle bundle = generate_case(config);
      bundle.id = std::string(group_name(g)) + "-" + std::to_string(i);
      suite.push_back(std::move(bundle));
    }
  }
  return suite;
}

double quintile_key_value(const CaseBundle& bundle, QuintileKey key) {
  switch (key) {
    case QuintileKey::BaseAte:
      return std::abs(bundle.base_ate);
    case QuintileKey::Sigma:
      return bundle.config.noise_std;
    case QuintileKey::SampleSize:
      return static_cast<double>(bundle.config.n);
  }
  return 0.0;
}

std::vector<QuintileBucket> quintile_split(const std::vector<CaseBundle>& suite,
                                           QuintileKey key) {
  if (suite.empty()) throw DimensionError("quintile_split on empty suite");
  const std::size_t n = suite.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) {
                     return quintile_key_value(suite[i], key) <
                            quintile_key_value(suite[j], key);
                   });

  std::vector<QuintileBucket> buckets(5);
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t lo = b * n / 5;
    const std::size_t hi = (b + 1) * n / 5;
    buckets[b].label = "Q" + std::to_string(b + 1);
    for (std::size_t i = lo; i < hi; ++i)
      buckets[b].indices.push_back(order[i]);
    if (lo < hi) {
      buckets[b].lower = quintile_key_value(suite[order[lo]], key);
      buckets[b].upper = quintile_key_value(suite[order[hi - 1]], key);
    }
  }
  return buckets;
}

}  // namespace forge::cases
