// forge: synthetic causal-fairness data, in-context model training and the
// benchmark harness behind one command-line tool.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "forge/baselines.hpp"
#include "forge/case_studies.hpp"
#include "forge/datasets_io.hpp"
#include "forge/errors.hpp"
#include "forge/harness.hpp"
#include "forge/pfn/train.hpp"
#include "forge/scm_prior.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<forge::baselines::Method> parse_methods(const std::string& csv) {
  std::vector<forge::baselines::Method> methods;
  std::string token;
  std::stringstream ss(csv);
  while (std::getline(ss, token, ','))
    if (!token.empty())
      methods.push_back(forge::baselines::method_from_name(token));
  if (methods.empty()) throw forge::ConfigError("no methods requested");
  return methods;
}

std::vector<forge::cases::Group> parse_groups(const std::string& csv) {
  std::vector<forge::cases::Group> groups;
  if (csv == "all") {
    for (int g = 0; g < forge::cases::kPaperGroupCount; ++g)
      groups.push_back(static_cast<forge::cases::Group>(g));
    return groups;
  }
  std::string token;
  std::stringstream ss(csv);
  while (std::getline(ss, token, ','))
    if (!token.empty()) groups.push_back(forge::cases::group_from_name(token));
  if (groups.empty()) throw forge::ConfigError("no groups requested");
  return groups;
}

std::vector<std::string> discover_bundles(const std::string& root) {
  std::vector<std::string> dirs;
  if (fs::exists(fs::path(root) / "ground_truth.json")) {
    dirs.push_back(root);
    return dirs;
  }
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "ground_truth.json"))
      dirs.push_back(entry.path().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw forge::IoError("no bundles found under " + root);
  return dirs;
}

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Deterministic run seed");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--threads", threads, "Worker threads");
  }
};

int cmd_prior_sample(const std::string& config_path, int count,
                     const CommonFlags& flags, bool keep_noise) {
  forge::prior::PriorConfig config = forge::io::load_prior_config(config_path);
  if (flags.seed != 0) config.seed = flags.seed;
  const auto samples =
      forge::prior::sample_prior_batch(config, count, config.seed);
  fs::create_directories(flags.out);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04zu", i);
    forge::io::write_prior_sample(
        samples[i], (fs::path(flags.out) / name).string(), keep_noise);
  }
  std::cout << "wrote " << samples.size() << " prior samples to " << flags.out
            << "\n";
  return 0;
}

int cmd_bench_generate(const std::string& groups_csv, int per_group,
                       std::pair<int, int> n_range, const CommonFlags& flags) {
  forge::cases::SuiteOptions options;
  options.groups = parse_groups(groups_csv);
  options.per_group = per_group;
  options.n_range = n_range;
  const auto suite = forge::cases::generate_suite(options, flags.seed);
  for (const auto& bundle : suite)
    forge::io::write_bundle(bundle, (fs::path(flags.out) / bundle.id).string());
  std::cout << "wrote " << suite.size() << " bundles to " << flags.out << "\n";
  return 0;
}

int cmd_train(const std::string& model_config_path,
              const std::string& prior_config_path, const CommonFlags& flags,
              const std::string& resume_path, int log_every) {
  forge::pfn::ModelConfig model_config =
      forge::io::load_model_config(model_config_path);
  const forge::prior::PriorConfig prior_config =
      forge::io::load_prior_config(prior_config_path);
  if (flags.seed != 0) model_config.seed = flags.seed;

  fs::create_directories(flags.out);
  forge::pfn::TrainOptions options;
  options.loss_log_path = (fs::path(flags.out) / "loss_log.csv").string();
  options.checkpoint_dir = flags.out;
  options.checkpoint_every = 500;
  options.progress = [&](int step, double loss) {
    if (log_every > 0 && step % log_every == 0)
      std::cout << "step " << step << " loss " << loss << std::endl;
  };

  forge::pfn::TrainResult result;
  if (!resume_path.empty()) {
    const forge::pfn::Checkpoint resume =
        forge::io::load_checkpoint(resume_path);
    result = forge::pfn::pretrain(model_config, prior_config, options, &resume);
  } else {
    result = forge::pfn::pretrain(model_config, prior_config, options);
  }
  const std::string ckpt_path = (fs::path(flags.out) / "model.ckpt").string();
  forge::io::save_checkpoint(result.checkpoint, ckpt_path);
  std::cout << "trained " << result.checkpoint.steps_completed
            << " steps (skipped " << result.skipped_steps << "), final loss "
            << result.checkpoint.final_loss << ", checkpoint at " << ckpt_path
            << "\n";
  return 0;
}

forge::harness::ExperimentPlan make_plan(const CommonFlags& flags,
                                         const std::string& methods_csv,
                                         std::size_t max_context,
                                         std::size_t max_query) {
  forge::harness::ExperimentPlan plan;
  plan.methods = parse_methods(methods_csv);
  plan.seed = flags.seed;
  plan.threads = flags.threads;
  plan.eval.max_context = max_context;
  plan.eval.max_query = max_query;
  return plan;
}

int cmd_evaluate(const std::string& bundle_root, const std::string& ckpt_path,
                 const std::string& methods_csv, const CommonFlags& flags,
                 const std::vector<std::string>& imports,
                 std::size_t max_context, std::size_t max_query) {
  const forge::pfn::Checkpoint ckpt = forge::io::load_checkpoint(ckpt_path);
  std::vector<forge::cases::CaseBundle> bundles;
  for (const auto& dir : discover_bundles(bundle_root))
    bundles.push_back(forge::io::read_bundle(dir));

  forge::harness::ExperimentPlan plan =
      make_plan(flags, methods_csv, max_context, max_query);
  forge::harness::SuiteEvaluation eval =
      forge::harness::evaluate_suite(bundles, plan, ckpt);

  for (const auto& import : imports) {
    const auto eq = import.find('=');
    if (eq == std::string::npos)
      throw forge::ConfigError("--import-preds expects name=path");
    const std::string name = import.substr(0, eq);
    const std::string path = import.substr(eq + 1);
    std::vector<forge::metrics::PredictionSet> preds;
    for (std::size_t b = 0; b < bundles.size(); ++b) {
      const std::string file =
          fs::is_directory(path)
              ? (fs::path(path) / (bundles[b].id + ".csv")).string()
              : path;
      const forge::io::ImportedPredictions imported =
          forge::io::read_predictions_csv(file);
      forge::metrics::PredictionSet p;
      p.probs_obs = imported.probs_obs;
      p.probs_cf = imported.probs_cf;
      preds.push_back(std::move(p));
    }
    forge::harness::attach_imported_method(eval, bundles, name, preds);
  }

  std::vector<forge::metrics::MetricsReport> reports;
  for (const auto& per_bundle : eval.results)
    for (const auto& me : per_bundle) reports.push_back(me.report);
  forge::io::emit_report(reports, flags.out);
  forge::harness::write_tradeoff(forge::harness::run_tradeoff(eval), flags.out);
  if (std::find(plan.methods.begin(), plan.methods.end(),
                forge::baselines::Method::AvgCntf) != plan.methods.end())
    forge::harness::write_difference_table(
        forge::harness::difference_table(eval, bundles,
                                         forge::baselines::Method::AvgCntf),
        flags.out);
  std::cout << "evaluated " << bundles.size() << " bundles x "
            << eval.column_count() << " methods into " << flags.out << "\n";
  return 0;
}

int cmd_sweep(const std::string& axis, const std::string& ckpt_path,
              int per_group, const CommonFlags& flags) {
  const forge::pfn::Checkpoint ckpt = forge::io::load_checkpoint(ckpt_path);
  if (axis == "complexity") {
    forge::harness::ComplexityOptions options;
    const auto rows = forge::harness::run_complexity(ckpt, options, flags.seed);
    forge::harness::write_complexity(rows, flags.out);
    std::cout << "complexity sweep: " << rows.size() << " runs into "
              << flags.out << "\n";
    return 0;
  }

  forge::cases::QuintileKey key;
  if (axis == "base_ate") key = forge::cases::QuintileKey::BaseAte;
  else if (axis == "sigma") key = forge::cases::QuintileKey::Sigma;
  else if (axis == "n") key = forge::cases::QuintileKey::SampleSize;
  else throw forge::ConfigError("unknown sweep axis '" + axis + "'");

  forge::harness::ExperimentPlan plan =
      make_plan(flags, "fairpfn,unfair", 384, 1024);
  plan.suite.per_group = per_group;
  const auto suite = forge::cases::generate_suite(plan.suite, flags.seed);
  const auto eval = forge::harness::evaluate_suite(suite, plan, ckpt);
  forge::harness::write_ablation(
      forge::harness::run_ablation(eval, suite, key), flags.out);
  std::cout << "ablation over " << suite.size() << " bundles into "
            << flags.out << "\n";
  return 0;
}

int cmd_stress(const std::string& ckpt_path, int per_group,
               const CommonFlags& flags) {
  const forge::pfn::Checkpoint ckpt = forge::io::load_checkpoint(ckpt_path);
  forge::harness::ExperimentPlan plan =
      make_plan(flags, "fairpfn,unfair", 384, 1024);
  plan.suite.per_group = per_group;
  forge::harness::write_stress(forge::harness::run_stress(plan, ckpt),
                               flags.out);
  std::cout << "stress report written to " << flags.out << "\n";
  return 0;
}

int cmd_real(const std::string& manifest_path, const std::string& ckpt_path,
             const std::string& methods_csv, const CommonFlags& flags) {
  const forge::pfn::Checkpoint ckpt = forge::io::load_checkpoint(ckpt_path);
  const forge::io::DatasetManifest manifest =
      forge::io::read_manifest(manifest_path);
  const forge::io::LoadedDataset data = forge::io::load_manifest(
      manifest, fs::path(manifest_path).parent_path().string());
  forge::harness::ExperimentPlan plan =
      make_plan(flags, methods_csv, 512, 4096);
  const forge::harness::RealWorldResult result =
      forge::harness::run_realworld(data, manifest.folds, plan, ckpt);
  forge::harness::write_realworld(result, flags.out);
  std::cout << "real-world evaluation (" << manifest.folds << " folds"
            << (result.counterfactual_available
                    ? ")"
                    : ", no counterfactual file: ATE/AE unavailable)")
            << " written to " << flags.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: causal-fairness prior, in-context model and benchmarks"};
  app.require_subcommand(1);

  auto* prior = app.add_subcommand("prior", "Synthetic prior operations");
  prior->require_subcommand(1);
  auto* prior_sample =
      prior->add_subcommand("sample", "Sample prior dataset pairs");
  std::string prior_config_path;
  int prior_count = 1;
  bool keep_noise = false;
  CommonFlags prior_flags;
  prior_sample->add_option("--config", prior_config_path, "Prior config JSON")
      ->required();
  prior_sample->add_option("--count", prior_count, "Number of samples");
  prior_sample->add_flag("--keep-noise", keep_noise,
                         "Record noise draws in scm.json");
  prior_flags.attach(prior_sample);

  auto* bench = app.add_subcommand("bench", "Benchmark suite operations");
  bench->require_subcommand(1);
  auto* bench_generate =
      bench->add_subcommand("generate", "Generate case-study bundles");
  std::string groups_csv = "all";
  int per_group = 10;
  std::pair<int, int> n_range{100, 10000};
  CommonFlags bench_flags;
  bench_generate->add_option("--groups", groups_csv,
                             "'all' or comma list (stress groups by name: "
                             "endogenous_a, multiple_a)");
  bench_generate->add_option("--per-group", per_group, "Bundles per group");
  bench_generate->add_option("--n-min", n_range.first, "Minimum sample size");
  bench_generate->add_option("--n-max", n_range.second, "Maximum sample size");
  bench_flags.attach(bench_generate);

  auto* train = app.add_subcommand("train", "Pre-train the model");
  std::string model_config_path, train_prior_config, resume_path;
  int log_every = 50;
  CommonFlags train_flags;
  train->add_option("--model-config", model_config_path, "Model config JSON")
      ->required();
  train->add_option("--prior-config", train_prior_config, "Prior config JSON")
      ->required();
  train->add_option("--resume", resume_path, "Checkpoint to resume from");
  train->add_option("--log-every", log_every, "Progress print interval");
  train_flags.attach(train);

  auto* evaluate =
      app.add_subcommand("evaluate", "Evaluate methods on bundles");
  std::string bundle_root, eval_ckpt,
      methods_csv = "fairpfn,unfair,unaware,avgcntf,constant,random,cfp";
  std::vector<std::string> imports;
  std::size_t max_context = 512, max_query = 2048;
  CommonFlags eval_flags;
  evaluate->add_option("--bundle", bundle_root,
                       "Bundle directory (or a directory of bundles)")
      ->required();
  evaluate->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  evaluate->add_option("--methods", methods_csv, "Comma-separated methods");
  evaluate->add_option("--import-preds", imports,
                       "name=path.csv external predictions");
  evaluate->add_option("--max-context", max_context, "Context row cap");
  evaluate->add_option("--max-query", max_query, "Query row cap");
  eval_flags.attach(evaluate);

  auto* sweep = app.add_subcommand("sweep", "Quintile/complexity ablations");
  std::string axis, sweep_ckpt;
  int sweep_per_group = 10;
  CommonFlags sweep_flags;
  sweep->add_option("--axis", axis, "base_ate | sigma | n | complexity")
      ->required();
  sweep->add_option("--ckpt", sweep_ckpt, "Model checkpoint")->required();
  sweep->add_option("--per-group", sweep_per_group, "Bundles per group");
  sweep_flags.attach(sweep);

  auto* stress = app.add_subcommand(
      "stress", "Prior-violating stress measurement (endogenous/multiple A)");
  std::string stress_ckpt;
  int stress_per_group = 10;
  CommonFlags stress_flags;
  stress->add_option("--ckpt", stress_ckpt, "Model checkpoint")->required();
  stress->add_option("--per-group", stress_per_group, "Bundles per group");
  stress_flags.attach(stress);

  auto* real = app.add_subcommand("real", "Real-world K-fold evaluation");
  std::string manifest_path, real_ckpt,
      real_methods = "fairpfn,unfair,unaware,avgcntf,constant,random,cfp";
  CommonFlags real_flags;
  real->add_option("--manifest", manifest_path, "Dataset manifest JSON")
      ->required();
  real->add_option("--ckpt", real_ckpt, "Model checkpoint")->required();
  real->add_option("--methods", real_methods, "Comma-separated methods");
  real_flags.attach(real);

  CLI11_PARSE(app, argc, argv);

  try {
    if (prior_sample->parsed())
      return cmd_prior_sample(prior_config_path, prior_count, prior_flags,
                              keep_noise);
    if (bench_generate->parsed())
      return cmd_bench_generate(groups_csv, per_group, n_range, bench_flags);
    if (train->parsed())
      return cmd_train(model_config_path, train_prior_config, train_flags,
                       resume_path, log_every);
    if (evaluate->parsed())
      return cmd_evaluate(bundle_root, eval_ckpt, methods_csv, eval_flags,
                          imports, max_context, max_query);
    if (sweep->parsed())
      return cmd_sweep(axis, sweep_ckpt, sweep_per_group, sweep_flags);
    if (stress->parsed())
      return cmd_stress(stress_ckpt, stress_per_group, stress_flags);
    if (real->parsed())
      return cmd_real(manifest_path, real_ckpt, real_methods, real_flags);
  } catch (const forge::Error& e) {
    std::cout << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}
                     .dump()
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cout << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}
                     .dump()
              << std::endl;
    return 1;
  }
  return 0;
}
