#include "forge/scm_prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "forge/errors.hpp"

namespace forge::prior {
namespace {

constexpr double kActivationClip = 1e6;

double apply_activation(Activation act, double v) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Tanh:
      v = std::tanh(v);
      break;
  }
  // Clamp keeps downstream thresholds finite on deep Identity/ReLU stacks.
  if (v > kActivationClip) v = kActivationClip;
  if (v < -kActivationClip) v = -kActivationClip;
  return v;
}

double empirical_quantile(std::vector<double> column, double q) {
  std::sort(column.begin(), column.end());
  const auto n = column.size();
  auto idx = static_cast<std::size_t>(q * static_cast<double>(n - 1));
  if (idx >= n) idx = n - 1;
  return column[idx];
}

bool has_both_classes(const std::vector<std::int8_t>& v) {
  bool seen0 = false, seen1 = false;
  for (auto b : v) (b == 1 ? seen1 : seen0) = true;
  return seen0 && seen1;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::ReLU:
      return "relu";
    case Activation::Tanh:
      return "tanh";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

int feature_slot_count(int num_exogenous, int depth) {
  const int first_layer = depth >= 3 ? 2 : 1;
  const int layers = depth - first_layer;  // layers first_layer..depth-1
  return layers * num_exogenous - 1;       // outcome cell excluded
}

void PriorConfig::validate() const {
  if (num_exogenous < 2)
    throw ConfigError("num_exogenous must be at least 2");
  if (depth < 2) throw ConfigError("depth must be at least 2");
  if (num_samples < 2) throw ConfigError("num_samples must be at least 2");
  if (num_features < 1) throw ConfigError("num_features must be positive");
  if (num_features > feature_slot_count(num_exogenous, depth))
    throw ConfigError("num_features exceeds available endogenous slots");
  auto check_range = [](std::pair<double, double> r, const char* name,
                        bool positive) {
    if (r.first > r.second)
      throw ConfigError(std::string(name) + " range has low > high");
    if (positive && r.first <= 0.0)
      throw ConfigError(std::string(name) + " range must be positive");
  };
  check_range(sparsity_log_range, "sparsity_log_range", true);
  if (sparsity_log_range.second > 1.0)
    throw ConfigError("sparsity fraction cannot exceed 1");
  check_range(noise_std_range, "noise_std_range", true);
  if (nonlinearity_set.empty())
    throw ConfigError("nonlinearity_set may not be empty");
  if (sample_range.first != 0 || sample_range.second != 0) {
    if (sample_range.first < 2 || sample_range.first > sample_range.second)
      throw ConfigError("sample_range invalid");
  }
  if (feature_range.first != 0 || feature_range.second != 0) {
    if (feature_range.first < 1 || feature_range.first > feature_range.second)
      throw ConfigError("feature_range invalid");
  }
}

void ScmSpec::validate() const {
  if (width < 1 || depth < 2) throw DimensionError("scm too small");
  if (static_cast<int>(weights.size()) != depth - 1 ||
      masks.size() != weights.size())
    throw DimensionError("scm needs depth-1 weight and mask slices");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto u = static_cast<std::size_t>(width);
    if (weights[i].rows() != u || weights[i].cols() != u ||
        masks[i].rows() != u || masks[i].cols() != u)
      throw DimensionError("scm weight slice has wrong shape");
    for (double m : masks[i].storage())
      if (m != 0.0 && m != 1.0)
        throw FormatError("scm masks must be 0/1 valued");
  }
  if (static_cast<int>(activations.size()) != depth)
    throw DimensionError("scm needs one activation tag per layer");
  if (protected_row < 0 || protected_row >= width)
    throw DimensionError("protected row out of range");
  if (outcome_row < 0 || outcome_row >= width)
    throw DimensionError("outcome row out of range");
  for (auto [layer, row] : feature_locations) {
    if (layer < 1 || layer >= depth || row < 0 || row >= width)
      throw DimensionError("feature location out of range");
    if (layer == depth - 1 && row == outcome_row)
      throw DimensionError("feature location collides with outcome");
  }
  if (!(noise_std > 0.0)) throw ConfigError("noise_std must be positive");
}

ScmSpec sample_scm(const PriorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x5c3) );

  ScmSpec scm;
  scm.width = config.num_exogenous;
  scm.depth = config.depth;
  const int u = scm.width;
  const double weight_scale = 1.0 / std::sqrt(static_cast<double>(u));

  const double keep = rng.log_uniform(config.sparsity_log_range.first,
                                      config.sparsity_log_range.second);
  for (int t = 0; t < scm.transitions(); ++t) {
    MatrixD w(static_cast<std::size_t>(u), static_cast<std::size_t>(u));
    MatrixD p(static_cast<std::size_t>(u), static_cast<std::size_t>(u));
    for (int i = 0; i < u; ++i)
      for (int j = 0; j < u; ++j) {
        w(i, j) = rng.normal() * weight_scale;
        p(i, j) = rng.bernoulli(keep) ? 1.0 : 0.0;
      }
    scm.weights.push_back(std::move(w));
    scm.masks.push_back(std::move(p));
  }

  scm.activations.resize(static_cast<std::size_t>(scm.depth));
  for (auto& act : scm.activations)
    act = config.nonlinearity_set[rng.uniform_index(
        config.nonlinearity_set.size())];

  scm.protected_row = static_cast<int>(rng.uniform_index(u));
  scm.protected_value_lo = rng.normal();
  scm.protected_value_hi = rng.normal();
  scm.protected_threshold = inverse_normal_cdf(rng.uniform(0.2, 0.8));
  scm.outcome_row = static_cast<int>(rng.uniform_index(u));
  scm.noise_std = rng.log_uniform(config.noise_std_range.first,
                                  config.noise_std_range.second);

  // Feature cells: partial Fisher-Yates over the candidate list.
  const int first_layer = scm.depth >= 3 ? 2 : 1;
  std::vector<std::pair<int, int>> candidates;
  for (int layer = first_layer; layer < scm.depth; ++layer)
    for (int row = 0; row < u; ++row) {
      if (layer == scm.depth - 1 && row == scm.outcome_row) continue;
      candidates.emplace_back(layer, row);
    }
  for (int f = 0; f < config.num_features; ++f) {
    const auto pick =
        f + static_cast<int>(rng.uniform_index(candidates.size() - f));
    std::swap(candidates[f], candidates[pick]);
    scm.feature_locations.push_back(candidates[f]);
  }

  scm.outcome_threshold = 0.0;  // fixed later from the generated outcomes
  scm.validate();
  return scm;
}

MatrixD forward_pass(const ScmSpec& scm, const std::vector<double>& exogenous,
                     const MatrixD& noise, bool protected_masked) {
  const auto u = static_cast<std::size_t>(scm.width);
  const auto h = static_cast<std::size_t>(scm.depth);
  if (exogenous.size() != u)
    throw DimensionError("exogenous vector does not match scm width");
  if (noise.rows() != u || noise.cols() != h)
    throw DimensionError("noise matrix must be width x depth");
  for (double v : exogenous)
    if (!std::isfinite(v)) throw NumericError("non-finite exogenous input");
  for (double v : noise.storage())
    if (!std::isfinite(v)) throw NumericError("non-finite noise input");

  MatrixD acts(u, h);
  for (std::size_t i = 0; i < u; ++i) acts(i, 0) = exogenous[i];

  for (int t = 0; t < scm.transitions(); ++t) {
    const MatrixD& w = scm.weights[static_cast<std::size_t>(t)];
    const MatrixD& p = scm.masks[static_cast<std::size_t>(t)];
    const auto src = static_cast<std::size_t>(t);
    const auto dst = src + 1;
    for (std::size_t j = 0; j < u; ++j) {
      double sum = noise(j, src);
      for (std::size_t i = 0; i < u; ++i) {
        // The masked pass skips the protected row's outgoing terms in the
        // first transition instead of multiplying by zero, which makes the
        // result bitwise independent of the protected input.
        if (protected_masked && t == 0 &&
            i == static_cast<std::size_t>(scm.protected_row))
          continue;
        sum += p(i, j) * w(i, j) * acts(i, src);
      }
      const double v =
          apply_activation(scm.activations[static_cast<std::size_t>(t)], sum);
      if (!std::isfinite(v))
        throw NumericError("non-finite activation at layer " +
                           std::to_string(dst));
      acts(j, dst) = v;
    }
  }
  return acts;
}

PriorSample generate_pair(const ScmSpec& scm, int n, std::uint64_t seed) {
  scm.validate();
  if (n < 2) throw ConfigError("generate_pair needs n >= 2");
  Rng rng(mix_seed(seed, 0x9e1));

  const auto u = static_cast<std::size_t>(scm.width);
  const auto h = static_cast<std::size_t>(scm.depth);
  const auto rows = static_cast<std::size_t>(n);
  const int k = scm.protected_row;

  NoiseRecord record;
  record.exogenous = MatrixD(rows, u);
  record.noise.reserve(rows);
  for (std::size_t s = 0; s < rows; ++s) {
    for (std::size_t i = 0; i < u; ++i) record.exogenous(s, i) = rng.normal();
    MatrixD eps(u, h);
    for (double& e : eps.storage()) e = rng.normal(0.0, scm.noise_std);
    record.noise.push_back(std::move(eps));
  }

  // The masked pass ignores the protected input, so fair outcomes can be
  // computed once, before any threshold search.
  std::vector<double> y_fair_raw(rows);
  {
    std::vector<double> exo(u);
    for (std::size_t s = 0; s < rows; ++s) {
      for (std::size_t i = 0; i < u; ++i) exo[i] = record.exogenous(s, i);
      const MatrixD acts = forward_pass(scm, exo, record.noise[s], true);
      y_fair_raw[s] =
          acts(static_cast<std::size_t>(scm.outcome_row), h - 1);
    }
  }

  std::vector<double> protected_raw(rows);
  for (std::size_t s = 0; s < rows; ++s)
    protected_raw[s] = record.exogenous(s, static_cast<std::size_t>(k));

  ScmSpec used = scm;
  std::vector<std::int8_t> a_bin(rows), y_bias(rows), y_fair(rows);
  std::vector<double> y_bias_raw(rows);
  MatrixD features(rows, scm.feature_locations.size());

  double a_t = scm.protected_threshold;
  int attempts = 0;
  bool done = false;
  while (!done) {
    for (std::size_t s = 0; s < rows; ++s)
      a_bin[s] = protected_raw[s] > a_t ? 1 : 0;

    const bool a_ok = has_both_classes(a_bin);
    if (a_ok) {
      std::vector<double> exo(u);
      for (std::size_t s = 0; s < rows; ++s) {
        for (std::size_t i = 0; i < u; ++i) exo[i] = record.exogenous(s, i);
        exo[static_cast<std::size_t>(k)] =
            a_bin[s] == 1 ? scm.protected_value_hi : scm.protected_value_lo;
        const MatrixD acts = forward_pass(scm, exo, record.noise[s], false);
        y_bias_raw[s] =
            acts(static_cast<std::size_t>(scm.outcome_row), h - 1);
        for (std::size_t f = 0; f < scm.feature_locations.size(); ++f) {
          const auto [layer, row] = scm.feature_locations[f];
          features(s, f) = acts(static_cast<std::size_t>(row),
                                static_cast<std::size_t>(layer));
        }
      }
      // Outcome thresholds are cheap to retry against the cached pass.
      while (attempts < kThresholdAttempts) {
        const double y_t = empirical_quantile(y_bias_raw, rng.uniform(0.2, 0.8));
        for (std::size_t s = 0; s < rows; ++s) {
          y_bias[s] = y_bias_raw[s] > y_t ? 1 : 0;
          y_fair[s] = y_fair_raw[s] > y_t ? 1 : 0;
        }
        ++attempts;
        if (has_both_classes(y_bias) && has_both_classes(y_fair)) {
          used.protected_threshold = a_t;
          used.outcome_threshold = y_t;
          done = true;
          break;
        }
      }
    } else {
      ++attempts;
    }
    if (!done) {
      if (attempts >= kThresholdAttempts)
        throw DegenerateSampleError(
            "constant column persists after threshold resampling");
      a_t = empirical_quantile(protected_raw, rng.uniform(0.2, 0.8));
    }
  }

  PriorSample sample;
  sample.scm = std::move(used);
  sample.noise = std::move(record);
  sample.y_fair = std::move(y_fair);
  sample.dataset.a = std::move(a_bin);
  sample.dataset.x = std::move(features);
  sample.dataset.y = std::move(y_bias);
  sample.dataset.protected_index = 0;
  sample.dataset.column_names.push_back("A");
  for (std::size_t f = 0; f < scm.feature_locations.size(); ++f)
    sample.dataset.column_names.push_back("x" + std::to_string(f + 1));
  sample.dataset.validate();
  return sample;
}

std::vector<PriorSample> sample_prior_batch(const PriorConfig& config,
                                            int batch_size,
                                            std::uint64_t seed) {
  config.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");

  constexpr int kRedrawBudget = 16;
  std::vector<PriorSample> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const std::uint64_t element_seed = mix_seed(seed, static_cast<std::uint64_t>(b));
    Rng rng(mix_seed(element_seed, 0xba7c4));
    for (int attempt = 0;; ++attempt) {
      PriorConfig local = config;
      if (config.sample_range.second > 0)
        local.num_samples = static_cast<int>(std::llround(rng.log_uniform(
            static_cast<double>(config.sample_range.first),
            static_cast<double>(config.sample_range.second))));
      if (config.feature_range.second > 0)
        local.num_features = rng.uniform_int(config.feature_range.first,
                                             config.feature_range.second);
      local.num_samples = std::max(local.num_samples, 2);
      local.num_features =
          std::min(local.num_features,
                   feature_slot_count(local.num_exogenous, local.depth));
      try {
        const std::uint64_t draw_seed =
            mix_seed(element_seed, 0x11d + static_cast<std::uint64_t>(attempt));
        ScmSpec scm = sample_scm(local, draw_seed);
        out.push_back(
            generate_pair(scm, local.num_samples, mix_seed(draw_seed, 0x77)));
        break;
      } catch (const DegenerateSampleError&) {
        if (attempt + 1 >= kRedrawBudget) throw;
      }
    }
  }
  return out;
}

}  // namespace forge::prior
