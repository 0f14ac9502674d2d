#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "forge/case_studies.hpp"
#include "forge/datasets_io.hpp"
#include "forge/errors.hpp"
#include "forge/pfn/train.hpp"
#include "forge/rng.hpp"
#include "forge/scm_prior.hpp"
#include "support/standin.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

std::string temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("forge_io_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

pfn::Checkpoint sample_checkpoint() {
  pfn::ModelConfig config;
  config.embed_dim = 16;
  config.num_layers = 1;
  config.num_heads = 2;
  config.ff_dim = 16;
  config.max_features = 4;
  config.max_rows = 64;
  pfn::Checkpoint ckpt = pfn::Checkpoint::fresh(config, 9);
  ckpt.steps_completed = 17;
  ckpt.final_loss = 0.625;
  ckpt.prior_digest = "cafef00ddeadbeef";
  ckpt.adam_t = 17;
  Rng rng(3);
  ckpt.adam_m.for_each([&](pfn::Tensor<float>& t) {
    for (auto& v : t.v) v = static_cast<float>(rng.normal());
  });
  return ckpt;
}

bool params_equal(const pfn::NetParams<float>& a,
                  const pfn::NetParams<float>& b) {
  bool equal = true;
  std::vector<const pfn::Tensor<float>*> bv;
  b.for_each([&](const pfn::Tensor<float>& t) { bv.push_back(&t); });
  std::size_t i = 0;
  a.for_each([&](const pfn::Tensor<float>& t) {
    if (t.v != bv[i++]->v) equal = false;
  });
  return equal;
}

}  // namespace

TEST_CASE("csv io round-trips full double precision") {
  const std::string dir = temp_dir("csv");
  Rng rng(1);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_index(30)) - 15.0);
    b[i] = rng.uniform01();
  }
  const std::string path = dir + "/table.csv";
  io::write_csv(path, {"alpha", "beta"}, {a, b});
  const io::CsvTable table = io::read_csv(path);
  REQUIRE(table.rows.size() == 50);
  CHECK(table.column("alpha") == 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::stod(table.rows[i][0]) == a[i]);
    CHECK(std::stod(table.rows[i][1]) == b[i]);
  }
  CHECK_THROWS_AS(table.column("gamma"), FormatError);
}

TEST_CASE("checkpoint round-trip is bitwise stable") {
  const std::string dir = temp_dir("ckpt");
  const pfn::Checkpoint original = sample_checkpoint();
  const std::string path = dir + "/model.ckpt";
  io::save_checkpoint(original, path);
  const pfn::Checkpoint loaded = io::load_checkpoint(path);
  CHECK(params_equal(original.params, loaded.params));
  CHECK(params_equal(original.adam_m, loaded.adam_m));
  CHECK(params_equal(original.adam_v, loaded.adam_v));
  CHECK(loaded.steps_completed == 17);
  CHECK(loaded.final_loss == 0.625);
  CHECK(loaded.prior_digest == "cafef00ddeadbeef");
  CHECK(loaded.adam_t == 17);

  // Save -> load -> save produces identical bytes.
  const std::string path2 = dir + "/model2.ckpt";
  io::save_checkpoint(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("corrupted and truncated checkpoints fail loudly") {
  const std::string dir = temp_dir("ckpt_bad");
  const pfn::Checkpoint original = sample_checkpoint();
  const std::string path = dir + "/model.ckpt";
  io::save_checkpoint(original, path);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("BOGUS123", 8);
  }
  CHECK_THROWS_AS(io::load_checkpoint(path), FormatError);

  io::save_checkpoint(original, path);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 64);
  CHECK_THROWS_AS(io::load_checkpoint(path), FormatError);

  io::save_checkpoint(original, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);  // version field
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), sizeof(bad));
  }
  CHECK_THROWS_AS(io::load_checkpoint(path), FormatError);

  CHECK_THROWS_AS(io::load_checkpoint(dir + "/missing.ckpt"), IoError);
}

TEST_CASE("manifest loading encodes and maps the stand-in dataset") {
  const std::string dir = temp_dir("manifest");
  const standin::Paths paths = standin::write(dir);
  const io::DatasetManifest manifest = io::read_manifest(paths.manifest);
  CHECK(manifest.folds == 5);
  const io::LoadedDataset data = io::load_manifest(manifest, dir);

  data.observational.validate();
  REQUIRE(data.counterfactual.has_value());
  CHECK(data.observational.n_rows() == 1200);
  CHECK(data.observational.column_names ==
        std::vector<std::string>{"race", "sex", "UGPA", "LSAT"});
  CHECK(data.observational.protected_index == 0);
  // Sorted distinct values: black -> 0, white -> 1.
  CHECK(data.protected_mapping.at("black") == 0);
  CHECK(data.protected_mapping.at("white") == 1);
  CHECK_FALSE(data.digest.empty());

  // Counterfactual protected column is the exact complement.
  for (std::size_t i = 0; i < data.observational.n_rows(); ++i)
    CHECK(data.counterfactual->a[i] == 1 - data.observational.a[i]);

  CHECK(data.fair_noise.count("eps_UGPA") == 1);
  CHECK(data.fair_noise.count("eps_LSAT") == 1);
  CHECK(data.fair_noise.at("eps_UGPA").size() == 1200);
}

TEST_CASE("manifest without optional files degrades cleanly") {
  const std::string dir = temp_dir("manifest_degraded");
  standin::Options options;
  options.write_counterfactual = false;
  options.write_noise = false;
  const standin::Paths paths = standin::write(dir, options);
  const io::LoadedDataset data =
      io::load_manifest(io::read_manifest(paths.manifest), dir);
  CHECK_FALSE(data.counterfactual.has_value());
  CHECK(data.fair_noise.empty());
}

TEST_CASE("categorical columns are one-hot encoded") {
  const std::string dir = temp_dir("categorical");
  {
    std::ofstream obs(dir + "/data.csv");
    obs << "group,score,target,region\n";
    obs << "a,1.5,0,north\n";
    obs << "b,2.5,1,south\n";
    obs << "a,3.5,1,west\n";
    obs << "b,0.5,0,north\n";
  }
  {
    std::ofstream manifest(dir + "/m.json");
    manifest << R"({
      "observational_csv": "data.csv",
      "protected_column": "group",
      "target_column": "target",
      "folds": 2,
      "columns": [
        {"name": "group", "type": "binary"},
        {"name": "score", "type": "numeric"},
        {"name": "region", "type": "categorical"}
      ]
    })";
  }
  const io::LoadedDataset data =
      io::load_manifest(io::read_manifest(dir + "/m.json"), dir);
  CHECK(data.observational.column_names ==
        std::vector<std::string>{"group", "score", "region=north",
                                 "region=south", "region=west"});
  CHECK(data.observational.x(0, 1) == 1.0);  // row 0 is north
  CHECK(data.observational.x(0, 2) == 0.0);
  CHECK(data.observational.x(1, 2) == 1.0);  // row 1 is south
}

TEST_CASE("missing values are rejected rather than imputed") {
  const std::string dir = temp_dir("missing");
  {
    std::ofstream obs(dir + "/data.csv");
    obs << "group,score,target\n";
    obs << "a,1.5,0\n";
    obs << "b,,1\n";
  }
  {
    std::ofstream manifest(dir + "/m.json");
    manifest << R"({
      "observational_csv": "data.csv",
      "protected_column": "group",
      "target_column": "target",
      "folds": 2,
      "columns": [
        {"name": "group", "type": "binary"},
        {"name": "score", "type": "numeric"}
      ]
    })";
  }
  CHECK_THROWS_AS(io::load_manifest(io::read_manifest(dir + "/m.json"), dir),
                  FormatError);
}

TEST_CASE("kfold partitions rows deterministically") {
  const auto folds = io::kfold(100, 5, 42);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& fold : folds) {
    CHECK(fold.validation_ids.size() == 20);
    CHECK(fold.train_ids.size() == 80);
    for (auto id : fold.validation_ids) {
      CHECK(seen.count(id) == 0);
      seen.insert(id);
    }
  }
  CHECK(seen.size() == 100);

  const auto again = io::kfold(100, 5, 42);
  for (std::size_t f = 0; f < 5; ++f)
    CHECK(folds[f].validation_ids == again[f].validation_ids);
  CHECK_THROWS_AS(io::kfold(3, 5, 1), ConfigError);
}

TEST_CASE("report emission round-trips and handles the empty case") {
  const std::string dir = temp_dir("report");
  io::emit_report({}, dir);
  {
    std::ifstream in(dir + "/report.json");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK(text.find("[]") != std::string::npos);
  }
  CHECK(io::read_report(dir + "/report.json").empty());

  metrics::MetricsReport r;
  r.dataset_id = "biased-0";
  r.method = "fairpfn";
  r.ate = -0.123456789012345;
  r.ae.median = 0.25;
  r.ae.mean = 0.3;
  r.ae.max = 0.99;
  r.ae.histogram[3] = 7;
  r.dsp = 0.01;
  r.auc = 0.875;
  r.error = 0.125;
  r.auc_fair = 0.9;
  r.has_counterfactual = true;
  r.uses_causal_information = false;
  io::emit_report({r}, dir);
  const auto back = io::read_report(dir + "/report.json");
  REQUIRE(back.size() == 1);
  CHECK(back[0].dataset_id == r.dataset_id);
  CHECK(back[0].method == r.method);
  CHECK(back[0].ate == r.ate);
  CHECK(back[0].ae.median == r.ae.median);
  CHECK(back[0].ae.histogram == r.ae.histogram);
  CHECK(back[0].auc == r.auc);
  REQUIRE(back[0].auc_fair.has_value());
  CHECK(*back[0].auc_fair == 0.9);
  CHECK(fs::exists(dir + "/plot_data/tradeoff_points.csv"));
  CHECK(fs::exists(dir + "/plot_data/ate_box.csv"));
  CHECK(fs::exists(dir + "/plot_data/ae_hist.csv"));
}

TEST_CASE("prior samples are written with the documented layout") {
  const std::string dir = temp_dir("prior_sample");
  prior::PriorConfig config;
  config.num_exogenous = 4;
  config.depth = 3;
  config.num_features = 2;
  config.num_samples = 32;
  const auto sample =
      prior::generate_pair(prior::sample_scm(config, 3), 32, 4);
  io::write_prior_sample(sample, dir, true);

  const io::CsvTable biased = io::read_csv(dir + "/biased.csv");
  CHECK(biased.header == std::vector<std::string>{"A", "x1", "x2", "y"});
  CHECK(biased.rows.size() == 32);
  for (std::size_t i = 0; i < 32; ++i) {
    CHECK(std::stod(biased.rows[i][0]) == sample.dataset.a[i]);
    CHECK(std::stod(biased.rows[i][1]) == sample.dataset.x(i, 0));
  }
  const io::CsvTable fair = io::read_csv(dir + "/fair_targets.csv");
  CHECK(fair.header == std::vector<std::string>{"y_fair"});
  CHECK(fs::exists(dir + "/scm.json"));
  // Noise record retained on request.
  std::ifstream in(dir + "/scm.json");
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  CHECK(text.find("noise_record") != std::string::npos);
}

TEST_CASE("bundle write/read round-trips every field") {
  const std::string dir = temp_dir("bundle");
  cases::CaseStudyConfig config;
  config.group = cases::Group::FairObservable;
  config.causal_weight = -1.5;
  config.noise_std = 0.35;
  config.n = 150;
  config.seed = 77;
  const cases::CaseBundle bundle = cases::generate_case(config);
  io::write_bundle(bundle, dir);
  const cases::CaseBundle back = io::read_bundle(dir);

  CHECK(back.id == bundle.id);
  CHECK(back.base_ate == bundle.base_ate);
  CHECK(back.outcome_threshold == bundle.outcome_threshold);
  CHECK(back.config.causal_weight == bundle.config.causal_weight);
  CHECK(back.config.noise_std == bundle.config.noise_std);
  CHECK(back.prior_violating == bundle.prior_violating);
  CHECK(back.observational.a == bundle.observational.a);
  CHECK(back.observational.x == bundle.observational.x);
  CHECK(back.observational.y == bundle.observational.y);
  CHECK(back.counterfactual.x == bundle.counterfactual.x);
  CHECK(back.y_fair == bundle.y_fair);
  CHECK(back.fair_observables == bundle.fair_observables);
  REQUIRE(back.fair_variables.count("eps_X") == 1);
  CHECK(back.fair_variables.at("eps_X") == bundle.fair_variables.at("eps_X"));
}

TEST_CASE("config files round-trip") {
  const std::string dir = temp_dir("configs");
  prior::PriorConfig prior_config;
  prior_config.num_exogenous = 6;
  prior_config.depth = 4;
  prior_config.num_features = 3;
  prior_config.num_samples = 96;
  prior_config.sparsity_log_range = {0.25, 0.75};
  prior_config.noise_std_range = {0.02, 0.8};
  prior_config.nonlinearity_set = {prior::Activation::ReLU,
                                   prior::Activation::Tanh};
  prior_config.seed = 31;
  prior_config.sample_range = {64, 256};
  prior_config.feature_range = {1, 5};
  io::save_prior_config(prior_config, dir + "/prior.json");
  const prior::PriorConfig back = io::load_prior_config(dir + "/prior.json");
  CHECK(back.num_exogenous == 6);
  CHECK(back.sparsity_log_range == prior_config.sparsity_log_range);
  CHECK(back.nonlinearity_set == prior_config.nonlinearity_set);
  CHECK(back.sample_range == prior_config.sample_range);

  pfn::ModelConfig model_config;
  model_config.embed_dim = 32;
  model_config.num_heads = 4;
  model_config.seed = 5;
  io::save_model_config(model_config, dir + "/model.json");
  const pfn::ModelConfig model_back = io::load_model_config(dir + "/model.json");
  CHECK(model_back.embed_dim == 32);
  CHECK(model_back.seed == 5);
}

TEST_CASE("external prediction files parse both column layouts") {
  const std::string dir = temp_dir("preds");
  {
    std::ofstream out(dir + "/p.csv");
    out << "prob_obs,prob_cf\n0.25,0.75\n0.5,0.5\n";
  }
  const auto both = io::read_predictions_csv(dir + "/p.csv");
  CHECK(both.probs_obs == std::vector<double>{0.25, 0.5});
  CHECK(both.probs_cf == std::vector<double>{0.75, 0.5});
  {
    std::ofstream out(dir + "/obs_only.csv");
    out << "prob_obs\n0.125\n";
  }
  const auto obs_only = io::read_predictions_csv(dir + "/obs_only.csv");
  CHECK(obs_only.probs_cf.empty());
}
