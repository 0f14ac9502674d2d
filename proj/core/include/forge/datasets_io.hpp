#ifndef FORGE_DATASETS_IO_HPP
#define FORGE_DATASETS_IO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/case_studies.hpp"
#include "forge/metrics.hpp"
#include "forge/pfn/checkpoint.hpp"
#include "forge/scm_prior.hpp"
#include "forge/tabular.hpp"

namespace forge::io {

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

// ---------------------------------------------------------------------------
// Real-world dataset manifests

enum class ColumnType : std::uint8_t { Numeric, Binary, Categorical };

struct ManifestColumn {
  std::string name;
  ColumnType type = ColumnType::Numeric;
};

struct DatasetManifest {
  std::string observational_csv;
  std::optional<std::string> counterfactual_csv;
  std::optional<std::string> fair_noise_csv;
  std::string protected_column;
  std::string target_column;
  std::vector<ManifestColumn> columns;  // feature columns
  int folds = 5;
};

DatasetManifest read_manifest(const std::string& path);

struct LoadedDataset {
  TabularDataset observational;
  std::optional<TabularDataset> counterfactual;
  std::map<std::string, std::vector<double>> fair_noise;  // column name -> values
  // How the raw protected/target values map onto {0,1}.
  std::map<std::string, int> protected_mapping;
  std::map<std::string, int> target_mapping;
  std::string digest;  // content digest recorded in reports
};

// Loads the observational CSV (plus optional counterfactual twin and noise
// columns), one-hot encoding categoricals and mapping the protected and
// target columns onto {0,1}. Missing values are rejected, not imputed.
LoadedDataset load_manifest(const DatasetManifest& manifest,
                            const std::string& base_dir = "");

struct FoldSplit {
  int fold = 0;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> validation_ids;
};

std::vector<FoldSplit> kfold(std::size_t n_rows, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints (versioned binary container of named f32 tensors)

void save_checkpoint(const pfn::Checkpoint& checkpoint,
                     const std::string& path);
pfn::Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Reports

// report.json plus flat plot_data/*.csv (trade-off points, box-plot samples,
// AE histograms) under out_dir.
void emit_report(const std::vector<metrics::MetricsReport>& reports,
                 const std::string& out_dir);

std::vector<metrics::MetricsReport> read_report(const std::string& json_path);

// ---------------------------------------------------------------------------
// Prior samples and case bundles on disk

void write_prior_sample(const prior::PriorSample& sample,
                        const std::string& dir, bool keep_noise);

void write_bundle(const cases::CaseBundle& bundle, const std::string& dir);
cases::CaseBundle read_bundle(const std::string& dir);

// ---------------------------------------------------------------------------
// Config files

prior::PriorConfig load_prior_config(const std::string& path);
void save_prior_config(const prior::PriorConfig& config,
                       const std::string& path);
pfn::ModelConfig load_model_config(const std::string& path);
void save_model_config(const pfn::ModelConfig& config, const std::string& path);

// External predictions (probability columns prob_obs[,prob_cf]) for methods
// produced outside this harness.
struct ImportedPredictions {
  std::vector<double> probs_obs;
  std::vector<double> probs_cf;  // empty when the file has no prob_cf column
};
ImportedPredictions read_predictions_csv(const std::string& path);

}  // namespace forge::io

#endif  // FORGE_DATASETS_IO_HPP
