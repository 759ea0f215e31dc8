#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmfuse/training.hpp"

namespace cmfuse {

// Binary confusion counts with derived ratios. Ratios with a zero denominator
// are left unset rather than zeroed.
struct Metrics {
    long tp = 0, fn = 0, tn = 0, fp = 0;
    std::optional<double> acc, sen, spe;
};

Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& actual,
                        int positive_class);

// Stratified k-fold assignment: folds[f] holds indices into `labels`; per
// class, fold sizes differ by at most one.
std::vector<std::vector<int>> stratified_folds(const std::vector<int>& labels, int k,
                                               std::uint64_t seed);

enum class EvalMode { RetrainHead, FineTune };

struct EvalConfig {
    int folds = 5;
    std::uint64_t seed = 17;
    EvalMode mode = EvalMode::RetrainHead;
    int retrain_epochs = 300;
    double lr = 1e-3;
    double weight_decay = 0.01;
    // FineTune mode only: full-model epochs added on the train folds.
    int finetune_epochs = 20;
};

struct FoldOutcome {
    int fold = 0;
    Metrics metrics;          // binary experiments
    long correct = 0;         // fourway
    long total = 0;
    double accuracy = 0.0;
};

struct ExperimentResult {
    std::string name;
    std::vector<FoldOutcome> folds;
    Metrics pooled;          // counts summed over folds (binary experiments)
    double mean_accuracy = 0.0;
};

// Binary stage-vs-stage experiment per the cross-validation protocol: the
// trained generator is frozen; per fold, the classifier head is retrained on
// the train split (or the whole model fine-tuned) and the decision restricts
// the 4-way softmax to the two stages.
ExperimentResult binary_experiment(const std::vector<Subject>& cohort, const TrainState& trained,
                                   Stage stage_pos, Stage stage_neg, const TrainConfig& tcfg,
                                   const EvalConfig& ecfg);

// 4-way accuracy under the same protocol.
ExperimentResult fourway_experiment(const std::vector<Subject>& cohort, const TrainState& trained,
                                    const TrainConfig& tcfg, const EvalConfig& ecfg);

void write_experiment_csv(const std::string& path, const ExperimentResult& result);
std::string experiment_summary(const ExperimentResult& result);

}  // namespace cmfuse
