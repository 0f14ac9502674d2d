#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "forge/errors.hpp"
#include "forge/pfn/net.hpp"
#include "forge/rng.hpp"
#include "support/gradcheck.hpp"

using namespace forge;
using pfn::BatchInput;
using pfn::ModelConfig;
using pfn::Net;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.embed_dim = 16;
  config.num_layers = 2;
  config.num_heads = 2;
  config.ff_dim = 24;
  config.max_features = 6;
  config.max_rows = 64;
  return config;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig config = tiny_config();
  config.num_heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = tiny_config();
  config.embed_dim = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("tokens follow the documented embedding form") {
  ModelConfig config;
  config.embed_dim = 4;
  config.num_layers = 1;
  config.num_heads = 1;
  config.ff_dim = 4;
  config.max_features = 2;
  config.max_rows = 8;
  Net<double> net(config);
  auto& p = net.params();
  // Feature affine: column c maps onto axis c; bias 0.5 everywhere.
  p.embed_w.v = {1, 0, 0, 0, 0, 1, 0, 0};
  p.embed_b.v = {0.5, 0.5, 0.5, 0.5};
  p.prot_w.v = {0, 0, 1, 0};
  p.prot_b.v = {0, 0, 0, 0};
  p.lbl_ctx1.v = {0, 0, 0, 2};
  p.lbl_ctx0.v = {0, 0, 0, 0};
  p.lbl_query.v = {0, 0, 0, -1};

  BatchInput<double> batch;
  batch.n_context = 1;
  batch.features = Matrix<double>(2, 2);
  batch.features(0, 0) = 3.0;
  batch.features(0, 1) = -1.0;
  batch.features(1, 0) = 2.0;
  batch.features(1, 1) = 5.0;
  batch.protected_col = {3.0, 2.0};
  batch.context_labels = {1};

  const Matrix<double> tokens = net.embed(batch);
  // token = embed_b + sum_c f_c * w_c + a * prot_w + prot_b + label
  CHECK(tokens(0, 0) == doctest::Approx(3.5));
  CHECK(tokens(0, 1) == doctest::Approx(-0.5));
  CHECK(tokens(0, 2) == doctest::Approx(3.5));
  CHECK(tokens(0, 3) == doctest::Approx(2.5));
  CHECK(tokens(1, 0) == doctest::Approx(2.5));
  CHECK(tokens(1, 1) == doctest::Approx(5.5));
  CHECK(tokens(1, 2) == doctest::Approx(2.5));
  CHECK(tokens(1, 3) == doctest::Approx(-0.5));
}

TEST_CASE("query outputs are invariant to context row permutation") {
  Rng rng(5);
  Net<float> net(tiny_config());
  net.init(7);
  auto batch = gradcheck::random_batch<float>(10, 4, 4, rng);
  const std::vector<float> base = net.forward(batch);

  // Reverse the context rows.
  BatchInput<float> permuted = batch;
  for (std::size_t i = 0; i < batch.n_context; ++i) {
    const std::size_t j = batch.n_context - 1 - i;
    for (std::size_t c = 0; c < batch.features.cols(); ++c)
      permuted.features(i, c) = batch.features(j, c);
    permuted.protected_col[i] = batch.protected_col[j];
    permuted.context_labels[i] = batch.context_labels[j];
  }
  const std::vector<float> perm = net.forward(permuted);
  for (std::size_t q = 0; q < base.size(); ++q)
    CHECK(std::abs(static_cast<double>(base[q]) -
                   static_cast<double>(perm[q])) < 1e-5);
}

TEST_CASE("appending all-zero feature columns leaves outputs unchanged") {
  Rng rng(11);
  Net<float> net(tiny_config());
  net.init(13);
  auto batch = gradcheck::random_batch<float>(8, 3, 3, rng);
  const std::vector<float> base = net.forward(batch);

  BatchInput<float> padded = batch;
  padded.features = Matrix<float>(batch.features.rows(), 5);
  for (std::size_t i = 0; i < batch.features.rows(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      padded.features(i, c) = batch.features(i, c);
  const std::vector<float> with_pad = net.forward(padded);
  for (std::size_t q = 0; q < base.size(); ++q)
    CHECK(std::abs(static_cast<double>(base[q]) -
                   static_cast<double>(with_pad[q])) <= 1e-6);
}

TEST_CASE("probabilities stay inside the open unit interval") {
  Rng rng(17);
  Net<float> net(tiny_config());
  net.init(19);
  for (int trial = 0; trial < 20; ++trial) {
    auto batch = gradcheck::random_batch<float>(6, 6, 4, rng);
    for (float p : net.forward(batch)) {
      CHECK(p > 0.0f);
      CHECK(p < 1.0f);
    }
  }
}

TEST_CASE("duplicated query rows get identical probabilities") {
  Rng rng(23);
  Net<float> net(tiny_config());
  net.init(29);
  auto batch = gradcheck::random_batch<float>(8, 2, 4, rng);
  // Make the second query an exact copy of the first.
  const std::size_t base_row = batch.n_context;
  for (std::size_t c = 0; c < batch.features.cols(); ++c)
    batch.features(base_row + 1, c) = batch.features(base_row, c);
  batch.protected_col[base_row + 1] = batch.protected_col[base_row];
  const std::vector<float> probs = net.forward(batch);
  CHECK(probs[0] == probs[1]);
}

TEST_CASE("query rows are isolated from each other exactly") {
  Rng rng(31);
  Net<float> net(tiny_config());
  net.init(37);
  for (int trial = 0; trial < 100; ++trial) {
    auto batch = gradcheck::random_batch<float>(6, 5, 4, rng);
    const std::vector<float> base = net.forward(batch);
    const std::size_t victim =
        batch.n_context + rng.uniform_index(batch.n_query());
    BatchInput<float> altered = batch;
    for (std::size_t c = 0; c < batch.features.cols(); ++c)
      altered.features(victim, c) += static_cast<float>(rng.normal());
    altered.protected_col[victim] = -altered.protected_col[victim];
    const std::vector<float> changed = net.forward(altered);
    for (std::size_t q = 0; q < base.size(); ++q) {
      if (batch.n_context + q == victim) continue;
      CHECK(base[q] == changed[q]);
    }
  }
}

TEST_CASE("identical inputs give identical outputs") {
  Rng rng(41);
  Net<float> net(tiny_config());
  net.init(43);
  const auto batch = gradcheck::random_batch<float>(8, 4, 4, rng);
  CHECK(net.forward(batch) == net.forward(batch));
}

TEST_CASE("bce matches the analytic values") {
  CHECK(Net<float>::bce({0.5f, 0.5f}, {0, 1}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  // Perfect predictions cost only the clamp.
  CHECK(Net<float>::bce({1.0f, 0.0f}, {1, 0}) ==
        doctest::Approx(1e-7).epsilon(0.2));
  CHECK_THROWS_AS(Net<float>::bce({0.5f}, {0, 1}), DimensionError);
}

TEST_CASE("analytic gradients agree with central finite differences") {
  ModelConfig config;
  config.embed_dim = 8;
  config.num_layers = 1;
  config.num_heads = 2;
  config.ff_dim = 12;
  config.max_features = 3;
  config.max_rows = 32;
  Net<double> net(config);
  net.init(51);
  Rng rng(53);
  const auto batch = gradcheck::random_batch<double>(6, 3, 3, rng);
  const auto targets = gradcheck::random_targets(3, rng);
  const auto report = gradcheck::finite_difference_report(net, batch, targets);
  CHECK(report.size() == net.params().tensor_count());
  for (const auto& tensor : report) {
    INFO("tensor ", tensor.name);
    CHECK(tensor.worst_rel_err <= 1e-3);
  }
}

TEST_CASE("oversized batches are rejected") {
  Net<float> net(tiny_config());
  net.init(1);
  Rng rng(2);
  auto too_wide = gradcheck::random_batch<float>(4, 2, 7, rng);  // > 6 features
  CHECK_THROWS_AS(net.forward(too_wide), DimensionError);
  auto too_long = gradcheck::random_batch<float>(60, 8, 3, rng);  // > 64 rows
  CHECK_THROWS_AS(net.forward(too_long), DimensionError);
  auto no_query = gradcheck::random_batch<float>(4, 1, 3, rng);
  no_query.n_context = 5;  // labels mismatch triggers too
  CHECK_THROWS_AS(net.forward(no_query), DimensionError);
}
