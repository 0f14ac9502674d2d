#ifndef FORGE_PFN_TRAIN_HPP
#define FORGE_PFN_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "forge/matrix.hpp"
#include "forge/pfn/checkpoint.hpp"
#include "forge/pfn/net.hpp"
#include "forge/scm_prior.hpp"
#include "forge/tabular.hpp"

namespace forge::pfn {

// Per-column standardization using context statistics: query rows reuse the
// context mean/std; zero-variance columns map to zero. Values are clamped to
// +-100 standard deviations.
template <class T>
BatchInput<T> make_batch(const MatrixD& context_features,
                         const std::vector<std::int8_t>& context_labels,
                         const MatrixD& query_features, int protected_index);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

// One optimizer update on float parameters. Returns false (state untouched,
// step counted as skipped by the caller) when the gradient is non-finite.
bool adam_step(NetParams<float>& params, NetParams<float>& m,
               NetParams<float>& v, std::int64_t& t,
               const NetParams<float>& grads, double learning_rate,
               const AdamState& adam = {});

struct TrainOptions {
  std::pair<double, double> split_fraction{0.5, 0.8};
  // Fraction of pre-training datasets whose flagged protected column is a
  // fresh noise draw (with targets equal to the biased labels); keeps the
  // noise-as-protected inference mode in-distribution.
  double noise_protected_prob = 0.15;
  int checkpoint_every = 0;        // 0 = only at the end
  std::string checkpoint_dir;      // empty = keep in memory only
  std::string loss_log_path;       // empty = no CSV
  std::function<void(int, double)> progress;  // (step, loss)
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<std::pair<int, double>> loss_log;  // (step, loss)
  int skipped_steps = 0;
};

// Pre-training loop: each step draws fresh prior datasets, reveals biased
// labels on the context split and regresses query predictions onto the fair
// targets. Deterministic for a fixed (model seed, prior config); resuming
// from a checkpoint replays the identical remaining step sequence.
TrainResult pretrain(const ModelConfig& model_config,
                     const prior::PriorConfig& prior_config,
                     const TrainOptions& options = {},
                     const Checkpoint* resume = nullptr);

// Mean query BCE of the given parameters over `count` freshly drawn prior
// datasets; used for before/after training-curve checks.
double held_out_bce(const Checkpoint& checkpoint,
                    const prior::PriorConfig& prior_config, int count,
                    std::uint64_t seed);

// Single-pass in-context prediction. `context` supplies the labeled rows,
// `query_features` one combined row per prediction (same column layout as
// context.combined()). Query rows are processed in chunks, which is exact
// because queries never attend to each other.
std::vector<double> predict(const Checkpoint& checkpoint,
                            const TabularDataset& context,
                            const MatrixD& query_features,
                            int protected_index);

// Same, over raw combined matrices (protected column already in place).
std::vector<double> predict_raw(const Checkpoint& checkpoint,
                                const MatrixD& context_features,
                                const std::vector<std::int8_t>& context_labels,
                                const MatrixD& query_features,
                                int protected_index);

extern template BatchInput<float> make_batch<float>(
    const MatrixD&, const std::vector<std::int8_t>&, const MatrixD&, int);
extern template BatchInput<double> make_batch<double>(
    const MatrixD&, const std::vector<std::int8_t>&, const MatrixD&, int);

}  // namespace forge::pfn

#endif  // FORGE_PFN_TRAIN_HPP
