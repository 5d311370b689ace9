#pragma once

#include "mplane/config.hpp"
#include "mplane/eval.hpp"
#include "mplane/phantom.hpp"
#include "mplane/qlearn.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mplane {

struct GenDataOptions {
  int count = 5;
  std::uint64_t seed = 0;  ///< case i uses phantom seed `seed + i`
  PhantomConfig phantom;
  std::filesystem::path out;
  bool force = false;  ///< replace case directories of an existing dataset
};

/// Writes case_0000 ... under `out` plus a dataset.txt manifest.
void gen_data(const GenDataOptions& opt);

struct DatasetSplit {
  std::vector<PhantomCase> train, val, test;
};

/// Consecutive train / val / test blocks of the sorted dataset. A test_count
/// of 0 takes every case after the validation block.
DatasetSplit load_split(const ExperimentConfig& cfg, bool with_train, bool with_test);

/// search: genotype.txt, alpha.{bin,manifest}, search_curves.csv, selection.txt.
SearchResult search_stage(const ExperimentConfig& cfg, std::ostream* log = nullptr);
/// train: weights.{bin,manifest}, genotype.txt, curves.csv, validation.txt.
Validation train_stage(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct EvalSummary {
  MetricsReport policy;
  MetricsReport random;
  Validation test_policy;
  Validation test_random;
  Validation validation;  ///< greedy rerun of the train-time validation
};

/// eval: report.csv, report.txt, cases.csv, cases_random.csv, summary.txt, validation.txt.
EvalSummary eval_stage(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// reward.svg, sad.svg and loss.svg from labelled curve CSVs.
void plot_stage(const std::vector<std::pair<std::string, std::filesystem::path>>& curves,
                const std::filesystem::path& out);

/// Files each stage leaves in its output directory, config.txt and inputs.txt included.
std::vector<std::string> stage_artifacts(const std::string& stage);

void write_validation(const Validation& v, const std::filesystem::path& file);
Validation read_validation(const std::filesystem::path& file);

}  // namespace mplane
