#pragma once

#include "uqpen/dataset.hpp"
#include "uqpen/model.hpp"
#include "uqpen/posterior.hpp"
#include "uqpen/training.hpp"
#include "uqpen/uncertainty.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace uqpen {

enum class HandSelector { Right, Left, Both };

struct DataConfig {
    bool use_generator = true;
    GeneratorConfig generator;
    std::string csv_path;
};

struct SplitConfig {
    SplitMode mode = SplitMode::WriterDependent;
    int folds = 5;
    std::uint64_t seed = 1;
};

enum class EvalTarget { Test, Train, All };

struct EvalConfig {
    int draws = 30;
    HandSelector train_hand = HandSelector::Both;
    HandSelector eval_hand = HandSelector::Both;
    int fold = 0;
    // Which samples to score: "test" excludes everything the model trained
    // on, "train" is exactly the training set, "all" ignores the split.
    EvalTarget on = EvalTarget::Test;
};

struct ReportConfig {
    std::string out_dir = "out";
};

/**
 * One experiment = one JSON document with sections data, split, arch, train,
 * swag, ensemble, eval, report. Every field has a default; unknown keys are
 * rejected. `--set section.key=value` overrides apply to the raw JSON before
 * parsing.
 */
struct ExperimentConfig {
    DataConfig data;
    SplitConfig split;
    std::string arch_preset = "desk"; // "desk" or "paper"
    Architecture arch;                // class_count 0 means: infer from data
    TrainConfig train;
    SwagConfig swag;
    double swag_scale = 1.0; // posterior sampling scale gamma
    EnsembleConfig ensemble;
    EvalConfig eval;
    ReportConfig report;

    static ExperimentConfig from_json_text(const std::string& text,
                                           const std::vector<std::string>& overrides = {});
    static ExperimentConfig load(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {});
};

// UQPEN_THREADS when set (>= 1), otherwise hardware concurrency.
int thread_cap();

Dataset load_experiment_dataset(const ExperimentConfig& config);
Dataset select_hand(const Dataset& dataset, HandSelector selector);
Architecture resolve_architecture(const ExperimentConfig& config, int class_count);

// Subcommand bodies. Output messages go to stdout; failures throw.
void run_gen(const ExperimentConfig& config, const std::filesystem::path& out_csv);
void run_train(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void run_swag_train(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void run_ensemble_train(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void run_evaluate(const ExperimentConfig& config,
                  const std::vector<std::filesystem::path>& model_paths,
                  const std::filesystem::path& out_dir);
void run_report(const std::filesystem::path& bundle_dir, const std::filesystem::path& out_dir);

} // namespace uqpen
