#pragma once

#include "uqpen/dataset.hpp"
#include "uqpen/model.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

namespace uqpen {

struct TrainConfig {
    double learning_rate = 1e-2;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs_max = 2000;
    int batch_size = 50;
    int early_stop_patience = 50;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct SwagConfig {
    int burn_in_epochs = 10;
    int snapshot_every_epochs = 1;
    int max_rank = 20; // K_dev; the SWA phase runs max_rank * snapshot_every epochs
    double swa_learning_rate = 1e-2;
};

struct EnsembleConfig {
    int member_count = 10;
    std::uint64_t base_seed = 1; // member i trains with seed base_seed + i
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

/**
 * Running SWA statistics over SGD iterates. Moments use the incremental
 * (Welford) update m += (x - m)/n, which is the running-mean recurrence in a
 * form that is exact on constant snapshot sequences. Deviation columns hold
 * x - m evaluated at snapshot time; the oldest column is evicted once
 * max_rank are held.
 */
struct SwagStats {
    std::size_t n_snapshots = 0;
    ParamVector first_moment;
    ParamVector second_moment; // running mean of elementwise squares
    std::deque<ParamVector> deviation_columns;
    int max_rank = 20;

    void add_snapshot(const ParamVector& params);
};

struct TrainResult {
    ParamVector params;
    TrainHistory history;
};

struct SwagTrainResult {
    SwagStats stats;
    ParamVector swa_params;
    TrainHistory history;
};

/**
 * SGD with momentum and (coupled) weight decay, per-epoch reshuffling, a
 * deterministic validation carve-out, and early stopping that restores the
 * best-validation weights. Everything is a pure function of the config seed;
 * `threads` only parallelizes within a batch and never changes the result.
 * With validation_fraction = 0 early stopping is disabled and the val
 * columns of the history mirror the train metrics.
 */
TrainResult train(const Architecture& arch, const Dataset& dataset,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& config,
                  int threads = 1);

// Phase 1: ordinary training for burn_in_epochs. Phase 2: continue at the
// constant SWA learning rate for max_rank * snapshot_every epochs, feeding
// each cadence point into SwagStats. swa_params is the final first moment.
SwagTrainResult train_swag(const Architecture& arch, const Dataset& dataset,
                           const std::vector<std::size_t>& train_indices,
                           const TrainConfig& config, const SwagConfig& swag, int threads = 1);

// member_count independent runs seeded base_seed + i; members may train
// concurrently and the result is identical to sequential execution.
std::vector<TrainResult> train_ensemble(const Architecture& arch, const Dataset& dataset,
                                        const std::vector<std::size_t>& train_indices,
                                        const TrainConfig& config, const EnsembleConfig& ensemble,
                                        int threads = 1);

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path);

// Eval-mode cross-entropy (nats) and accuracy over the given samples.
std::pair<double, double> evaluate_loss_acc(const Architecture& arch, const ParamVector& params,
                                            const Dataset& dataset,
                                            const std::vector<std::size_t>& indices);

} // namespace uqpen
