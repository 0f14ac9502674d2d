#ifndef FORGE_BASELINES_HPP
#define FORGE_BASELINES_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forge/case_studies.hpp"
#include "forge/metrics.hpp"
#include "forge/pfn/checkpoint.hpp"
#include "forge/tabular.hpp"

namespace forge::baselines {

enum class Method : std::uint8_t {
  FairPFN,
  Unfair,
  Unaware,
  AvgCntf,
  Constant,
  Random,
  Cfp,
};

const char* method_name(Method m);
Method method_from_name(const std::string& name);

// AvgCntf and CFP consume ground-truth causal quantities; reports render
// them with the light-border flag.
bool uses_causal_information(Method m);

// What a method may look at: the observational dataset, an optional
// row-aligned counterfactual twin, hidden fair columns and the names of
// observable columns that are causally fair.
struct EvalData {
  const TabularDataset* obs = nullptr;
  const TabularDataset* cf = nullptr;
  const std::map<std::string, std::vector<double>>* fair_variables = nullptr;
  const std::vector<std::string>* fair_observables = nullptr;
};

EvalData eval_data(const cases::CaseBundle& bundle);

// Shared context/query row split so every method predicts the same rows.
struct EvalSplit {
  std::vector<std::size_t> context_ids;
  std::vector<std::size_t> query_ids;
};

EvalSplit make_eval_split(std::size_t n_rows, std::size_t max_context,
                          std::size_t max_query, std::uint64_t seed);

struct EvalOptions {
  std::size_t max_context = 512;
  std::size_t max_query = 2048;
  std::uint64_t seed = 0;
  int cfp_level = 0;  // 0 = auto (union of available fair columns)
};

// Runs one method over the split. All model-backed methods drive the same
// checkpoint; the non-FairPFN ones feed a fresh noise column through the
// protected slot. probs_cf stays empty when the data has no counterfactual
// twin (except for methods that never look at features).
metrics::PredictionSet evaluate_method(Method method, const EvalData& data,
                                       const pfn::Checkpoint& checkpoint,
                                       const EvalSplit& split,
                                       const EvalOptions& options);

}  // namespace forge::baselines

#endif  // FORGE_BASELINES_HPP
