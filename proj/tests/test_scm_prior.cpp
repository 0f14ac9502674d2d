#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "forge/errors.hpp"
#include "forge/metrics.hpp"
#include "forge/scm_prior.hpp"
#include "support/oracles.hpp"

using namespace forge;
using prior::Activation;

namespace {

prior::PriorConfig small_config() {
  prior::PriorConfig config;
  config.num_exogenous = 4;
  config.depth = 3;
  config.num_features = 2;
  config.num_samples = 64;
  config.sparsity_log_range = {0.5, 1.0};
  config.noise_std_range = {0.05, 0.5};
  return config;
}

bool scm_equal(const prior::ScmSpec& a, const prior::ScmSpec& b) {
  if (a.width != b.width || a.depth != b.depth) return false;
  for (std::size_t t = 0; t < a.weights.size(); ++t)
    if (!(a.weights[t] == b.weights[t]) || !(a.masks[t] == b.masks[t]))
      return false;
  return a.activations == b.activations && a.protected_row == b.protected_row &&
         a.protected_threshold == b.protected_threshold &&
         a.protected_value_lo == b.protected_value_lo &&
         a.protected_value_hi == b.protected_value_hi &&
         a.feature_locations == b.feature_locations &&
         a.outcome_row == b.outcome_row && a.noise_std == b.noise_std;
}

bool sample_equal(const prior::PriorSample& a, const prior::PriorSample& b) {
  return a.dataset.a == b.dataset.a && a.dataset.x == b.dataset.x &&
         a.dataset.y == b.dataset.y && a.y_fair == b.y_fair &&
         scm_equal(a.scm, b.scm) &&
         a.scm.outcome_threshold == b.scm.outcome_threshold &&
         a.noise.exogenous == b.noise.exogenous;
}

// Replays the masked pass from the retained noise record with the protected
// input flipped pre-binarization.
std::vector<std::int8_t> refair_with_flipped_protected(
    const prior::PriorSample& sample) {
  const auto& scm = sample.scm;
  const auto u = static_cast<std::size_t>(scm.width);
  std::vector<std::int8_t> result(sample.dataset.n_rows());
  std::vector<double> exo(u);
  for (std::size_t i = 0; i < sample.dataset.n_rows(); ++i) {
    for (std::size_t j = 0; j < u; ++j) exo[j] = sample.noise.exogenous(i, j);
    exo[static_cast<std::size_t>(scm.protected_row)] =
        sample.dataset.a[i] == 1 ? scm.protected_value_lo
                                 : scm.protected_value_hi;
    const MatrixD acts = prior::forward_pass(scm, exo, sample.noise.noise[i], true);
    const double y = acts(static_cast<std::size_t>(scm.outcome_row),
                          static_cast<std::size_t>(scm.depth - 1));
    result[i] = y > scm.outcome_threshold ? 1 : 0;
  }
  return result;
}

// Matched-pair treatment effect of the biased targets, from the noise record.
double base_ate_of(const prior::PriorSample& sample) {
  const auto& scm = sample.scm;
  const auto u = static_cast<std::size_t>(scm.width);
  std::vector<double> y_obs, y_flip;
  std::vector<std::int8_t> a;
  std::vector<double> exo(u);
  for (std::size_t i = 0; i < sample.dataset.n_rows(); ++i) {
    for (std::size_t j = 0; j < u; ++j) exo[j] = sample.noise.exogenous(i, j);
    exo[static_cast<std::size_t>(scm.protected_row)] =
        sample.dataset.a[i] == 1 ? scm.protected_value_lo
                                 : scm.protected_value_hi;
    const MatrixD acts =
        prior::forward_pass(scm, exo, sample.noise.noise[i], false);
    const double y = acts(static_cast<std::size_t>(scm.outcome_row),
                          static_cast<std::size_t>(scm.depth - 1));
    y_obs.push_back(sample.dataset.y[i]);
    y_flip.push_back(y > scm.outcome_threshold ? 1.0 : 0.0);
    a.push_back(sample.dataset.a[i]);
  }
  return oracles::brute_ate(y_obs, y_flip, a);
}

}  // namespace

TEST_CASE("sampled weights follow the width x width x depth-1 layout") {
  prior::PriorConfig config = small_config();
  config.num_exogenous = 4;
  config.depth = 3;
  const prior::ScmSpec scm = prior::sample_scm(config, 5);
  REQUIRE(scm.weights.size() == 2);
  CHECK(scm.weights[0].rows() == 4);
  CHECK(scm.weights[0].cols() == 4);
  CHECK(scm.masks.size() == 2);
  CHECK(scm.activations.size() == 3);
}

TEST_CASE("degenerate sparsity range keeps every mask entry") {
  prior::PriorConfig config = small_config();
  config.sparsity_log_range = {1.0, 1.0};
  const prior::ScmSpec scm = prior::sample_scm(config, 17);
  for (const auto& mask : scm.masks)
    for (double m : mask.storage()) CHECK(m == 1.0);
}

TEST_CASE("mean mask density tracks the log-uniform mean") {
  prior::PriorConfig config = small_config();
  config.num_exogenous = 6;
  config.sparsity_log_range = {0.1, 0.9};
  double total = 0.0, kept = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const prior::ScmSpec scm = prior::sample_scm(config, 1000 + draw);
    for (const auto& mask : scm.masks)
      for (double m : mask.storage()) {
        total += 1.0;
        kept += m;
      }
  }
  const double analytic = (0.9 - 0.1) / std::log(0.9 / 0.1);
  CHECK(std::abs(kept / total - analytic) < 0.03);
}

TEST_CASE("config validation rejects bad ranges") {
  prior::PriorConfig config = small_config();
  config.sparsity_log_range = {0.9, 0.1};
  CHECK_THROWS_AS(prior::sample_scm(config, 1), ConfigError);
  config = small_config();
  config.num_exogenous = 1;
  CHECK_THROWS_AS(prior::sample_scm(config, 1), ConfigError);
  config = small_config();
  config.noise_std_range = {0.0, 0.5};
  CHECK_THROWS_AS(prior::sample_scm(config, 1), ConfigError);
  config = small_config();
  config.num_features = 100;
  CHECK_THROWS_AS(prior::sample_scm(config, 1), ConfigError);
}

TEST_CASE("sample_scm is deterministic per seed") {
  const prior::PriorConfig config = small_config();
  CHECK(scm_equal(prior::sample_scm(config, 42), prior::sample_scm(config, 42)));
  CHECK_FALSE(
      scm_equal(prior::sample_scm(config, 42), prior::sample_scm(config, 43)));
}

TEST_CASE("feature cells avoid shallow layers and the outcome cell") {
  prior::PriorConfig config = small_config();
  config.depth = 4;
  config.num_features = prior::feature_slot_count(4, 4);
  const prior::ScmSpec scm = prior::sample_scm(config, 3);
  std::set<std::pair<int, int>> seen;
  for (auto [layer, row] : scm.feature_locations) {
    CHECK(layer >= 2);
    CHECK(layer <= 3);
    CHECK_FALSE((layer == 3 && row == scm.outcome_row));
    seen.insert({layer, row});
  }
  CHECK(seen.size() == scm.feature_locations.size());

  config.depth = 2;  // only layer 1 exists beyond the input
  config.num_features = 2;
  const prior::ScmSpec shallow = prior::sample_scm(config, 4);
  for (auto [layer, row] : shallow.feature_locations) CHECK(layer == 1);
}

TEST_CASE("forward pass of the zero model is zero") {
  prior::ScmSpec scm;
  scm.width = 3;
  scm.depth = 3;
  scm.weights.assign(2, MatrixD(3, 3, 0.0));
  scm.masks.assign(2, MatrixD(3, 3, 1.0));
  scm.activations = {Activation::Identity, Activation::Identity,
                     Activation::Identity};
  scm.noise_std = 1.0;
  const MatrixD acts =
      prior::forward_pass(scm, {0.0, 0.0, 0.0}, MatrixD(3, 3, 0.0), false);
  for (double v : acts.storage()) CHECK(v == 0.0);
}

TEST_CASE("single transition evaluates the affine update directly") {
  prior::ScmSpec scm;
  scm.width = 1;
  scm.depth = 2;
  scm.weights.assign(1, MatrixD(1, 1, 1.0));
  scm.masks.assign(1, MatrixD(1, 1, 1.0));
  scm.activations = {Activation::Identity, Activation::Identity};
  scm.noise_std = 1.0;
  MatrixD noise(1, 2, 0.0);
  noise(0, 0) = 0.5;
  const MatrixD acts = prior::forward_pass(scm, {2.0}, noise, false);
  CHECK(acts(0, 0) == 2.0);
  CHECK(acts(0, 1) == 2.5);
}

TEST_CASE("two-unit tanh model matches the hand-coded evaluator") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    oracles::TinyScm tiny;
    prior::ScmSpec scm;
    scm.width = 2;
    scm.depth = 3;
    scm.activations = {Activation::Tanh, Activation::Tanh, Activation::Tanh};
    for (int t = 0; t < 2; ++t) {
      MatrixD w(2, 2), p(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          tiny.w[t][i][j] = rng.normal();
          tiny.p[t][i][j] = rng.bernoulli(0.7) ? 1.0 : 0.0;
          w(i, j) = tiny.w[t][i][j];
          p(i, j) = tiny.p[t][i][j];
        }
      tiny.act[t] = 2;
      scm.weights.push_back(w);
      scm.masks.push_back(p);
    }
    scm.noise_std = 0.3;

    const double x0 = rng.normal(), x1 = rng.normal();
    double eps[2][2];
    MatrixD noise(2, 3, 0.0);
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < 2; ++j) {
        eps[t][j] = rng.normal();
        noise(j, t) = eps[t][j];
      }
    const MatrixD acts = prior::forward_pass(scm, {x0, x1}, noise, false);
    const std::vector<double> expected = oracles::tiny_forward(tiny, x0, x1, eps);
    CHECK(acts(0, 1) == doctest::Approx(expected[2]).epsilon(1e-12));
    CHECK(acts(1, 1) == doctest::Approx(expected[3]).epsilon(1e-12));
    CHECK(acts(0, 2) == doctest::Approx(expected[4]).epsilon(1e-12));
    CHECK(acts(1, 2) == doctest::Approx(expected[5]).epsilon(1e-12));
  }
}

TEST_CASE("forward pass rejects bad shapes and non-finite input") {
  const prior::ScmSpec scm = prior::sample_scm(small_config(), 7);
  CHECK_THROWS_AS(prior::forward_pass(scm, {0.0}, MatrixD(4, 3, 0.0), false),
                  DimensionError);
  CHECK_THROWS_AS(
      prior::forward_pass(scm, {0.0, 0.0, 0.0, 0.0}, MatrixD(4, 2, 0.0), false),
      DimensionError);
  MatrixD bad(4, 3, 0.0);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(
      prior::forward_pass(scm, {0.0, 0.0, 0.0, 0.0}, bad, false), NumericError);
}

TEST_CASE("masking a zero protected row leaves targets identical") {
  prior::PriorConfig config = small_config();
  for (int seed = 0; seed < 10; ++seed) {
    prior::ScmSpec scm = prior::sample_scm(config, 200 + seed);
    MatrixD& w0 = scm.weights[0];
    for (int j = 0; j < scm.width; ++j)
      w0(static_cast<std::size_t>(scm.protected_row),
         static_cast<std::size_t>(j)) = 0.0;
    const prior::PriorSample sample = prior::generate_pair(scm, 128, seed);
    CHECK(sample.dataset.y == sample.y_fair);
  }
}

TEST_CASE("fair targets are invariant to flipping the protected input") {
  prior::PriorConfig config = small_config();
  config.num_exogenous = 5;
  for (int i = 0; i < 100; ++i) {
    const prior::ScmSpec scm = prior::sample_scm(config, 300 + i);
    const prior::PriorSample sample = prior::generate_pair(scm, 48, 17 + i);
    CHECK(refair_with_flipped_protected(sample) == sample.y_fair);
  }
}

TEST_CASE("nonzero protected rows produce measurable bias") {
  prior::PriorConfig config;
  config.num_exogenous = 5;
  config.depth = 3;
  config.num_features = 2;
  config.num_samples = 1000;
  config.sparsity_log_range = {0.5, 1.0};
  config.noise_std_range = {0.05, 0.3};
  int biased_count = 0;
  for (int seed = 0; seed < 50; ++seed) {
    prior::ScmSpec scm = prior::sample_scm(config, 4000 + seed);
    // Condition of this check: the protected row must actually have live
    // outgoing weights, so re-draw until the masked row is nonzero.
    for (int redraw = 0; redraw < 32; ++redraw) {
      bool live = false;
      for (int j = 0; j < scm.width; ++j)
        live |= scm.masks[0](static_cast<std::size_t>(scm.protected_row),
                             static_cast<std::size_t>(j)) != 0.0;
      if (live) break;
      scm = prior::sample_scm(config, 4000 + seed + 100000 * (redraw + 1));
    }
    const prior::PriorSample sample =
        prior::generate_pair(scm, config.num_samples, 77 + seed);
    if (std::abs(base_ate_of(sample)) > 0.05) ++biased_count;
  }
  CHECK(biased_count >= 40);
}

TEST_CASE("generate_pair enforces minimum rows") {
  const prior::ScmSpec scm = prior::sample_scm(small_config(), 1);
  CHECK_THROWS_AS(prior::generate_pair(scm, 1, 0), ConfigError);
}

TEST_CASE("an unfixable constant target raises a degenerate-sample error") {
  prior::ScmSpec scm;
  scm.width = 2;
  scm.depth = 2;
  scm.weights.assign(1, MatrixD(2, 2, 0.0));
  scm.masks.assign(1, MatrixD(2, 2, 1.0));
  scm.weights[0](0, 1) = 1.0;  // protected input feeds the outcome
  scm.weights[0](1, 1) = 0.1;
  scm.activations = {Activation::Identity, Activation::Identity};
  scm.protected_row = 0;
  scm.outcome_row = 1;
  scm.noise_std = 0.1;
  // Both protected values sit far below anything the fair pass can reach, so
  // every fair outcome clears any threshold drawn from the biased outcomes.
  scm.protected_value_lo = -1000.0;
  scm.protected_value_hi = -1000.0;
  scm.protected_threshold = 0.0;
  CHECK_THROWS_AS(prior::generate_pair(scm, 64, 5), DegenerateSampleError);
}

TEST_CASE("batch generation is reproducible and spans distinct draws") {
  prior::PriorConfig config = small_config();
  config.num_samples = 32;
  const auto batch1 = prior::sample_prior_batch(config, 8, 900);
  const auto batch2 = prior::sample_prior_batch(config, 8, 900);
  REQUIRE(batch1.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(sample_equal(batch1[i], batch2[i]));
  bool any_different = false;
  for (std::size_t i = 1; i < 8; ++i)
    any_different |= !scm_equal(batch1[i].scm, batch1[0].scm);
  CHECK(any_different);
}

TEST_CASE("batch sample sizes follow the log-uniform median") {
  prior::PriorConfig config;
  config.num_exogenous = 4;
  config.depth = 2;
  config.num_features = 1;
  config.num_samples = 100;
  config.sparsity_log_range = {0.5, 1.0};
  config.noise_std_range = {0.1, 0.5};
  config.sample_range = {100, 10000};
  const auto batch = prior::sample_prior_batch(config, 1000, 31337);
  std::vector<double> sizes;
  for (const auto& s : batch)
    sizes.push_back(static_cast<double>(s.dataset.n_rows()));
  const double med = forge::metrics::median(sizes);
  CHECK(med > 900.0);
  CHECK(med < 1100.0);
}

TEST_CASE("every batch sample satisfies the dataset invariants") {
  prior::PriorConfig config = small_config();
  config.sample_range = {16, 128};
  config.feature_range = {1, 3};
  const auto batch = prior::sample_prior_batch(config, 32, 555);
  for (const auto& s : batch) {
    s.dataset.validate();
    CHECK(s.y_fair.size() == s.dataset.n_rows());
    bool a0 = false, a1 = false, yb0 = false, yb1 = false, yf0 = false,
         yf1 = false;
    for (std::size_t i = 0; i < s.dataset.n_rows(); ++i) {
      (s.dataset.a[i] == 1 ? a1 : a0) = true;
      (s.dataset.y[i] == 1 ? yb1 : yb0) = true;
      (s.y_fair[i] == 1 ? yf1 : yf0) = true;
    }
    CHECK((a0 && a1 && yb0 && yb1 && yf0 && yf1));
    for (const auto& mask : s.scm.masks)
      for (double m : mask.storage()) CHECK((m == 0.0 || m == 1.0));
  }
}
