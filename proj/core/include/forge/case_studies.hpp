#ifndef FORGE_CASE_STUDIES_HPP
#define FORGE_CASE_STUDIES_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forge/tabular.hpp"

namespace forge::cases {

// Benchmark families. The first six are the paper-facing groups; the last
// two deliberately violate the prior's assumptions (endogenous protected
// attribute, second protected attribute) for stress measurement.
enum class Group : std::uint8_t {
  Biased,
  DirectEffect,
  IndirectEffect,
  FairObservable,
  FairUnobservable,
  FairAdditiveNoise,
  EndogenousA,
  MultipleA,
};

inline constexpr int kPaperGroupCount = 6;

const char* group_name(Group g);
Group group_from_name(const std::string& name);
bool group_is_stress(Group g);

struct CaseStudyConfig {
  Group group = Group::Biased;
  double causal_weight = 1.0;  // w_A
  double noise_std = 0.5;      // sigma
  int n = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// One benchmark dataset with its exact counterfactual twin and ground truth.
// observational/counterfactual are row-aligned with complementary protected
// columns; y_fair comes from the same draws with the protected effect
// removed and is identical in both worlds.
struct CaseBundle {
  TabularDataset observational;
  TabularDataset counterfactual;
  std::vector<std::int8_t> y_fair;
  // Hidden ground-truth columns (fair unobservables and feature-side noise
  // terms), keyed by name. Fair observables are regular dataset columns and
  // are listed by name in fair_observables.
  std::map<std::string, std::vector<double>> fair_variables;
  std::vector<std::string> fair_observables;
  double base_ate = 0.0;
  double outcome_threshold = 0.0;  // shared discretization cut
  CaseStudyConfig config;
  bool prior_violating = false;
  std::string id;
};

CaseBundle generate_case(const CaseStudyConfig& config);

// Audit hook: replays the bundle's draws with the protected column flipped
// and re-evaluates the fair equations under the bundle's own discretization.
// Counterfactually fair targets must come back bit-identical.
std::vector<std::int8_t> refair_with_flipped_protected(const CaseBundle& bundle);

struct SuiteOptions {
  int per_group = 10;
  std::pair<int, int> n_range{100, 10000};          // log-uniform
  std::pair<double, double> sigma_range{0.01, 1.0};  // log-uniform
  std::pair<double, double> weight_magnitude{0.25, 4.0};  // log-uniform, ± sign
  std::vector<Group> groups;  // defaults to the six paper groups
};

// per_group bundles for each requested group, deterministic per seed.
std::vector<CaseBundle> generate_suite(const SuiteOptions& options,
                                       std::uint64_t seed);

enum class QuintileKey : std::uint8_t { BaseAte, Sigma, SampleSize };

struct QuintileBucket {
  std::string label;              // "Q1".."Q5"
  std::vector<std::size_t> indices;  // into the input suite
  double lower = 0.0;             // key range covered by the bucket
  double upper = 0.0;
};

// Splits a suite into five near-equal buckets by the empirical quintiles of
// the key (|base ATE|, sigma, or n); ties break by dataset index.
std::vector<QuintileBucket> quintile_split(const std::vector<CaseBundle>& suite,
                                           QuintileKey key);

double quintile_key_value(const CaseBundle& bundle, QuintileKey key);

}  // namespace forge::cases

#endif  // FORGE_CASE_STUDIES_HPP
