// Microbenchmarks for the hot paths: prior generation, model forward and
// the heavier metrics.

#include <benchmark/benchmark.h>

#include "forge/case_studies.hpp"
#include "forge/metrics.hpp"
#include "forge/pfn/train.hpp"
#include "forge/rng.hpp"
#include "forge/scm_prior.hpp"

using namespace forge;

namespace {

prior::PriorConfig bench_prior_config() {
  prior::PriorConfig config;
  config.num_exogenous = 8;
  config.depth = 4;
  config.num_features = 6;
  config.num_samples = 256;
  config.sparsity_log_range = {0.3, 1.0};
  config.noise_std_range = {0.05, 0.5};
  return config;
}

void BM_PriorGeneratePair(benchmark::State& state) {
  const prior::PriorConfig config = bench_prior_config();
  const prior::ScmSpec scm = prior::sample_scm(config, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        prior::generate_pair(scm, static_cast<int>(state.range(0)), seed++));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PriorGeneratePair)->Arg(128)->Arg(512);

void BM_CaseStudyGenerate(benchmark::State& state) {
  cases::CaseStudyConfig config;
  config.group = cases::Group::FairObservable;
  config.causal_weight = 1.5;
  config.noise_std = 0.4;
  config.n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    config.seed++;
    benchmark::DoNotOptimize(cases::generate_case(config));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CaseStudyGenerate)->Arg(1000)->Arg(10000);

void BM_ModelForward(benchmark::State& state) {
  pfn::ModelConfig config;
  config.embed_dim = 64;
  config.num_layers = 4;
  config.num_heads = 4;
  config.ff_dim = 128;
  config.max_features = 16;
  config.max_rows = 1024;
  pfn::Net<float> net(config);
  net.init(3);

  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(9);
  pfn::BatchInput<float> batch;
  batch.n_context = rows / 2;
  batch.features = Matrix<float>(rows, 8);
  for (auto& v : batch.features.storage()) v = static_cast<float>(rng.normal());
  batch.protected_col.assign(rows, 1.0f);
  batch.context_labels.assign(rows / 2, 1);
  for (std::size_t i = 0; i < rows / 2; ++i)
    batch.context_labels[i] = rng.bernoulli(0.5);

  for (auto _ : state) benchmark::DoNotOptimize(net.forward(batch));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_ModelForward)->Arg(128)->Arg(256)->Arg(512);

void BM_ModelLossAndGrad(benchmark::State& state) {
  pfn::ModelConfig config;
  config.embed_dim = 64;
  config.num_layers = 4;
  config.num_heads = 4;
  config.ff_dim = 128;
  config.max_features = 16;
  config.max_rows = 1024;
  pfn::Net<float> net(config);
  net.init(3);

  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(11);
  pfn::BatchInput<float> batch;
  batch.n_context = rows / 2;
  batch.features = Matrix<float>(rows, 8);
  for (auto& v : batch.features.storage()) v = static_cast<float>(rng.normal());
  batch.protected_col.assign(rows, 1.0f);
  batch.context_labels.assign(rows / 2, 1);
  std::vector<std::int8_t> targets(rows - rows / 2);
  for (auto& t : targets) t = rng.bernoulli(0.5);
  pfn::NetParams<float> grads = pfn::NetParams<float>::shaped(config);

  for (auto _ : state) {
    grads.for_each(
        [](pfn::Tensor<float>& t) { std::fill(t.v.begin(), t.v.end(), 0.f); });
    benchmark::DoNotOptimize(net.loss_and_grad(batch, targets, &grads));
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_ModelLossAndGrad)->Arg(128)->Arg(256);

void BM_KendallTau(benchmark::State& state) {
  Rng rng(13);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = 0.3 * x[i] + rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::kendall_tau(x, y));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_KendallTau)->Arg(1000)->Arg(10000);

void BM_Auc(benchmark::State& state) {
  Rng rng(17);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<std::int8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform01();
    labels[i] = rng.bernoulli(0.5);
  }
  labels[0] = 0;
  labels[1] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Auc)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
