#ifndef FORGE_SCM_PRIOR_HPP
#define FORGE_SCM_PRIOR_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "forge/matrix.hpp"
#include "forge/rng.hpp"
#include "forge/tabular.hpp"

namespace forge::prior {

enum class Activation : std::uint8_t { Identity, ReLU, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Knobs for sampling one family of sparse-MLP causal models.
//
// A model is a layered MLP of width `num_exogenous` (U) and `depth` (H)
// layers of state: column 0 holds the exogenous causes, columns 1..H-1 are
// produced by H-1 weighted transitions. One input row carries the protected
// attribute; features are read off hidden columns and the outcome off the
// last column.
struct PriorConfig {
  int num_exogenous = 8;  // U
  int depth = 4;          // H
  int num_features = 4;   // m
  int num_samples = 256;  // n
  std::pair<double, double> sparsity_log_range{0.3, 1.0};  // keep fraction
  std::pair<double, double> noise_std_range{0.01, 1.0};
  std::vector<Activation> nonlinearity_set{Activation::Identity,
                                           Activation::ReLU, Activation::Tanh};
  std::uint64_t seed = 0;

  // Per-element ranges used by sample_prior_batch; the scalar fields above
  // act as fixed values for direct single-model use.
  std::pair<int, int> sample_range{0, 0};   // n, log-uniform when set
  std::pair<int, int> feature_range{0, 0};  // m, uniform when set

  void validate() const;
};

// Candidate (layer, row) cells features may occupy: hidden columns at depth
// >= 2 when H allows, else column 1, always excluding the outcome cell.
int feature_slot_count(int num_exogenous, int depth);

struct ScmSpec {
  int width = 0;  // U
  int depth = 0;  // H
  std::vector<MatrixD> weights;  // H-1 matrices of U x U
  std::vector<MatrixD> masks;    // 0/1, same shapes
  std::vector<Activation> activations;  // H tags; transition i uses tag i
  int protected_row = 0;                // row k of the exogenous column
  double protected_threshold = 0.0;     // a_t
  double protected_value_lo = 0.0;      // a_0
  double protected_value_hi = 1.0;      // a_1
  std::vector<std::pair<int, int>> feature_locations;  // (layer, row)
  int outcome_row = 0;  // row in the last column
  double outcome_threshold = 0.0;  // y_t; set when a dataset is generated
  double noise_std = 0.1;

  int transitions() const { return depth - 1; }
  void validate() const;
};

// Exogenous and additive-noise draws retained per sample so oracle checks
// can replay a generation pass exactly.
struct NoiseRecord {
  MatrixD exogenous;            // n x U, raw standard-normal draws
  std::vector<MatrixD> noise;   // n matrices of U x H
};

struct PriorSample {
  TabularDataset dataset;            // biased world
  std::vector<std::int8_t> y_fair;   // same rows, protected edges removed
  ScmSpec scm;                       // thresholds filled in
  NoiseRecord noise;
};

// Draws one sparse-MLP causal model. Deterministic for fixed (config, seed).
ScmSpec sample_scm(const PriorConfig& config, std::uint64_t seed);

// Evaluates all layers for one sample. `exogenous` is column 0 as given;
// transition i computes column i+1 from column i with weights*masks, noise
// column i and activation tag i. With protected_masked set, the outgoing
// weights of the protected row in the first transition are skipped entirely,
// so the result is bit-for-bit independent of the protected input value.
MatrixD forward_pass(const ScmSpec& scm, const std::vector<double>& exogenous,
                     const MatrixD& noise, bool protected_masked);

// Generates the paired biased/fair dataset for one model: per sample one
// exogenous and noise draw feeds both the biased pass and the masked pass;
// the protected input takes value a_0/a_1 by thresholding its raw draw at
// a_t; both targets share the outcome threshold y_t. Thresholds are redrawn
// from empirical quantiles until A, y_bias and y_fair all carry both
// classes, at most kThresholdAttempts times.
PriorSample generate_pair(const ScmSpec& scm, int n, std::uint64_t seed);

inline constexpr int kThresholdAttempts = 64;

// Batch generation with per-element derived seeds; n and m are drawn from
// the config ranges when set. Elements that stay degenerate after a bounded
// number of fresh redraws propagate the error.
std::vector<PriorSample> sample_prior_batch(const PriorConfig& config,
                                            int batch_size,
                                            std::uint64_t seed);

}  // namespace forge::prior

#endif  // FORGE_SCM_PRIOR_HPP
