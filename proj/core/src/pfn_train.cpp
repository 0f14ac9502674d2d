#include "forge/pfn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "forge/datasets_io.hpp"
#include "forge/errors.hpp"
#include "forge/rng.hpp"

namespace forge::pfn {
namespace {

constexpr double kStandardizedClip = 100.0;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string prior_config_digest(const prior::PriorConfig& c) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "u%d h%d m%d n%d sp%.6g,%.6g ns%.6g,%.6g a%zu sr%d,%d fr%d,%d",
                c.num_exogenous, c.depth, c.num_features, c.num_samples,
                c.sparsity_log_range.first, c.sparsity_log_range.second,
                c.noise_std_range.first, c.noise_std_range.second,
                c.nonlinearity_set.size(), c.sample_range.first,
                c.sample_range.second, c.feature_range.first,
                c.feature_range.second);
  char out[32];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(fnv1a(buf)));
  return out;
}

// Training view of one prior sample: combined features, context/query split,
// context labels and query targets.
struct TrainingBatch {
  MatrixD ctx_features;
  MatrixD query_features;
  std::vector<std::int8_t> ctx_labels;
  std::vector<std::int8_t> query_targets;
  int protected_index = 0;
};

TrainingBatch build_training_batch(const prior::PriorSample& sample,
                                   const ModelConfig& model_config,
                                   std::pair<double, double> split_fraction,
                                   double noise_protected_prob, Rng& rng) {
  const MatrixD combined = sample.dataset.combined();
  std::size_t n = combined.rows();
  const std::size_t width = combined.cols();

  const bool noise_protected = rng.bernoulli(noise_protected_prob);
  const double frac =
      rng.uniform(split_fraction.first, split_fraction.second);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

  n = std::min(n, static_cast<std::size_t>(model_config.max_rows));
  std::size_t ctx = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(n)));
  ctx = std::min(std::max<std::size_t>(ctx, 1), n - 1);

  TrainingBatch batch;
  const std::size_t out_width = noise_protected ? width + 1 : width;
  batch.protected_index = noise_protected ? static_cast<int>(width)
                                          : sample.dataset.protected_index;
  batch.ctx_features = MatrixD(ctx, out_width);
  batch.query_features = MatrixD(n - ctx, out_width);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = perm[i];
    MatrixD& dst = i < ctx ? batch.ctx_features : batch.query_features;
    const std::size_t row = i < ctx ? i : i - ctx;
    for (std::size_t j = 0; j < width; ++j) dst(row, j) = combined(src, j);
    if (noise_protected) dst(row, width) = rng.normal();
    if (i < ctx) {
      batch.ctx_labels.push_back(sample.dataset.y[src]);
    } else {
      // With a noise column flagged, nothing causal hangs off the flagged
      // attribute, so the fair target coincides with the biased label.
      batch.query_targets.push_back(noise_protected ? sample.dataset.y[src]
                                                    : sample.y_fair[src]);
    }
  }
  return batch;
}

void add_scaled(NetParams<float>& into, const NetParams<float>& from,
                float scale) {
  std::vector<const Tensor<float>*> src;
  from.for_each([&](const Tensor<float>& t) { src.push_back(&t); });
  std::size_t idx = 0;
  into.for_each([&](Tensor<float>& t) {
    const Tensor<float>& s = *src[idx++];
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] += scale * s.v[i];
  });
}

}  // namespace

template <class T>
BatchInput<T> make_batch(const MatrixD& context_features,
                         const std::vector<std::int8_t>& context_labels,
                         const MatrixD& query_features, int protected_index) {
  const std::size_t c = context_features.rows();
  const std::size_t q = query_features.rows();
  const std::size_t f = context_features.cols();
  if (c < 1 || q < 1) throw DimensionError("need context and query rows");
  if (query_features.cols() != f)
    throw DimensionError("context/query schema mismatch");
  if (context_labels.size() != c)
    throw DimensionError("context labels misaligned");
  if (protected_index < 0 || static_cast<std::size_t>(protected_index) >= f)
    throw DimensionError("protected_index out of range");

  std::vector<double> mean(f, 0.0), std(f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t i = 0; i < c; ++i) mean[j] += context_features(i, j);
    mean[j] /= static_cast<double>(c);
    for (std::size_t i = 0; i < c; ++i) {
      const double d = context_features(i, j) - mean[j];
      std[j] += d * d;
    }
    std[j] = std::sqrt(std[j] / static_cast<double>(c));
  }

  BatchInput<T> batch;
  batch.n_context = c;
  batch.context_labels = context_labels;
  batch.features = Matrix<T>(c + q, f);
  batch.protected_col.assign(c + q, T(0));
  auto standardize = [&](double v, std::size_t j) -> T {
    if (std[j] < 1e-12) return T(0);
    double z = (v - mean[j]) / std[j];
    z = std::clamp(z, -kStandardizedClip, kStandardizedClip);
    return static_cast<T>(z);
  };
  for (std::size_t i = 0; i < c + q; ++i) {
    const MatrixD& src = i < c ? context_features : query_features;
    const std::size_t row = i < c ? i : i - c;
    for (std::size_t j = 0; j < f; ++j)
      batch.features(i, j) = standardize(src(row, j), j);
    batch.protected_col[i] =
        batch.features(i, static_cast<std::size_t>(protected_index));
  }
  return batch;
}

template BatchInput<float> make_batch<float>(const MatrixD&,
                                             const std::vector<std::int8_t>&,
                                             const MatrixD&, int);
template BatchInput<double> make_batch<double>(const MatrixD&,
                                               const std::vector<std::int8_t>&,
                                               const MatrixD&, int);

bool adam_step(NetParams<float>& params, NetParams<float>& m,
               NetParams<float>& v, std::int64_t& t,
               const NetParams<float>& grads, double learning_rate,
               const AdamState& adam) {
  double sq_norm = 0.0;
  bool finite = true;
  grads.for_each([&](const Tensor<float>& g) {
    for (float x : g.v) {
      if (!std::isfinite(x)) finite = false;
      sq_norm += static_cast<double>(x) * static_cast<double>(x);
    }
  });
  if (!finite || !std::isfinite(sq_norm)) return false;

  const double norm = std::sqrt(sq_norm);
  const double rescale =
      norm > adam.clip_norm && norm > 0.0 ? adam.clip_norm / norm : 1.0;

  ++t;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));

  std::vector<const Tensor<float>*> gs;
  grads.for_each([&](const Tensor<float>& g) { gs.push_back(&g); });
  std::vector<Tensor<float>*> ms, vs;
  m.for_each([&](Tensor<float>& x) { ms.push_back(&x); });
  v.for_each([&](Tensor<float>& x) { vs.push_back(&x); });

  std::size_t idx = 0;
  params.for_each([&](Tensor<float>& p) {
    const Tensor<float>& g = *gs[idx];
    Tensor<float>& mm = *ms[idx];
    Tensor<float>& vv = *vs[idx];
    ++idx;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      const double gi = static_cast<double>(g.v[i]) * rescale;
      const double mi =
          adam.beta1 * static_cast<double>(mm.v[i]) + (1.0 - adam.beta1) * gi;
      const double vi = adam.beta2 * static_cast<double>(vv.v[i]) +
                        (1.0 - adam.beta2) * gi * gi;
      mm.v[i] = static_cast<float>(mi);
      vv.v[i] = static_cast<float>(vi);
      const double update =
          learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + adam.eps);
      p.v[i] = static_cast<float>(static_cast<double>(p.v[i]) - update);
    }
  });
  return true;
}

Checkpoint Checkpoint::fresh(const ModelConfig& config, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config = config;
  Net<float> net(config);
  net.init(seed);
  ckpt.params = net.params();
  ckpt.adam_m = NetParams<float>::shaped(config);
  ckpt.adam_v = NetParams<float>::shaped(config);
  return ckpt;
}

TrainResult pretrain(const ModelConfig& model_config,
                     const prior::PriorConfig& prior_config,
                     const TrainOptions& options, const Checkpoint* resume) {
  model_config.validate();
  prior_config.validate();

  TrainResult result;
  if (resume) {
    if (resume->format_version != kCheckpointVersion)
      throw FormatError("cannot resume from unknown checkpoint version");
    result.checkpoint = *resume;
  } else {
    result.checkpoint = Checkpoint::fresh(model_config, model_config.seed);
    result.checkpoint.prior_digest = prior_config_digest(prior_config);
  }
  Checkpoint& ckpt = result.checkpoint;

  Net<float> net(model_config);
  net.params() = ckpt.params;

  const std::uint64_t run_seed =
      mix_seed(mix_seed(model_config.seed, 0x7a417), prior_config.seed);
  const int total_steps = model_config.steps * model_config.epochs;

  std::ofstream loss_log;
  if (!options.loss_log_path.empty()) {
    loss_log.open(options.loss_log_path);
    if (!loss_log) throw IoError("cannot open loss log for writing");
    loss_log << "step,loss\n";
  }

  NetParams<float> grads = NetParams<float>::shaped(model_config);
  NetParams<float> dataset_grads = NetParams<float>::shaped(model_config);

  for (int step = static_cast<int>(ckpt.steps_completed); step < total_steps;
       ++step) {
    const std::uint64_t step_seed =
        mix_seed(run_seed, static_cast<std::uint64_t>(step));
    std::vector<prior::PriorSample> samples = prior::sample_prior_batch(
        prior_config, model_config.batch_datasets, step_seed);

    grads.for_each([](Tensor<float>& t) {
      std::fill(t.v.begin(), t.v.end(), 0.0f);
    });
    double step_loss = 0.0;
    for (std::size_t b = 0; b < samples.size(); ++b) {
      Rng rng(mix_seed(step_seed, 0xd5a0 + b));
      const TrainingBatch tb = build_training_batch(
          samples[b], model_config, options.split_fraction,
          options.noise_protected_prob, rng);
      const BatchInput<float> batch = make_batch<float>(
          tb.ctx_features, tb.ctx_labels, tb.query_features,
          tb.protected_index);
      dataset_grads.for_each([](Tensor<float>& t) {
        std::fill(t.v.begin(), t.v.end(), 0.0f);
      });
      step_loss += net.loss_and_grad(batch, tb.query_targets, &dataset_grads);
      add_scaled(grads, dataset_grads,
                 1.0f / static_cast<float>(samples.size()));
    }
    step_loss /= static_cast<double>(samples.size());

    if (!adam_step(net.params(), ckpt.adam_m, ckpt.adam_v, ckpt.adam_t, grads,
                   model_config.learning_rate))
      ++result.skipped_steps;

    ckpt.steps_completed = step + 1;
    ckpt.final_loss = step_loss;
    result.loss_log.emplace_back(step, step_loss);
    if (loss_log) loss_log << step << "," << step_loss << "\n";
    if (options.progress) options.progress(step, step_loss);
    if (options.checkpoint_every > 0 && !options.checkpoint_dir.empty() &&
        (step + 1) % options.checkpoint_every == 0 &&
        step + 1 < total_steps) {
      ckpt.params = net.params();
      io::save_checkpoint(ckpt, options.checkpoint_dir + "/step_" +
                                    std::to_string(step + 1) + ".ckpt");
    }
  }
  ckpt.params = net.params();
  return result;
}

double held_out_bce(const Checkpoint& checkpoint,
                    const prior::PriorConfig& prior_config, int count,
                    std::uint64_t seed) {
  Net<float> net(checkpoint.config);
  net.params() = checkpoint.params;
  const std::vector<prior::PriorSample> samples =
      prior::sample_prior_batch(prior_config, count, mix_seed(seed, 0xe5a1));
  double total = 0.0;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    Rng rng(mix_seed(seed, 0xeb + b));
    const TrainingBatch tb =
        build_training_batch(samples[b], checkpoint.config,
                             {0.7, 0.7}, 0.0, rng);
    const BatchInput<float> batch =
        make_batch<float>(tb.ctx_features, tb.ctx_labels, tb.query_features,
                          tb.protected_index);
    const std::vector<float> probs = net.forward(batch);
    total += Net<float>::bce(probs, tb.query_targets);
  }
  return total / static_cast<double>(samples.size());
}

std::vector<double> predict_raw(const Checkpoint& checkpoint,
                                const MatrixD& context_features,
                                const std::vector<std::int8_t>& context_labels,
                                const MatrixD& query_features,
                                int protected_index) {
  if (query_features.cols() != context_features.cols())
    throw DimensionError("query schema does not match context");
  if (context_features.cols() >
      static_cast<std::size_t>(checkpoint.config.max_features))
    throw DimensionError("dataset exceeds max_features");
  const std::size_t c = context_features.rows();
  if (c + 1 > static_cast<std::size_t>(checkpoint.config.max_rows))
    throw DimensionError("context exceeds max_rows");

  Net<float> net(checkpoint.config);
  net.params() = checkpoint.params;

  const std::size_t chunk =
      static_cast<std::size_t>(checkpoint.config.max_rows) - c;
  const std::size_t nq = query_features.rows();
  std::vector<double> probs;
  probs.reserve(nq);
  for (std::size_t start = 0; start < nq; start += chunk) {
    const std::size_t stop = std::min(start + chunk, nq);
    MatrixD q(stop - start, query_features.cols());
    for (std::size_t i = start; i < stop; ++i)
      for (std::size_t j = 0; j < query_features.cols(); ++j)
        q(i - start, j) = query_features(i, j);
    const BatchInput<float> batch =
        make_batch<float>(context_features, context_labels, q, protected_index);
    const std::vector<float> out = net.forward(batch);
    for (float p : out) probs.push_back(static_cast<double>(p));
  }
  return probs;
}

std::vector<double> predict(const Checkpoint& checkpoint,
                            const TabularDataset& context,
                            const MatrixD& query_features,
                            int protected_index) {
  context.validate();
  return predict_raw(checkpoint, context.combined(), context.y, query_features,
                     protected_index);
}

}  // namespace forge::pfn
