#include "uqpen/training.hpp"

#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"
#include "uqpen/prob.hpp"
#include "uqpen/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace uqpen {

namespace {

// Per-sample gradients are accumulated into a fixed number of groups and the
// groups are reduced in order, so results do not depend on the thread count.
constexpr int kReduceGroups = 8;

double sample_loss(const std::vector<double>& logits, int target) {
    double max_logit = logits[0];
    for (double v : logits) {
        max_logit = std::max(max_logit, v);
    }
    double sum = 0.0;
    for (double v : logits) {
        sum += std::exp(v - max_logit);
    }
    return max_logit + std::log(sum) - logits[static_cast<std::size_t>(target)];
}

struct BatchAccumulator {
    ParamVector grad;
    double loss = 0.0;
    int correct = 0;
};

struct EpochResult {
    double loss = 0.0;
    double acc = 0.0;
};

// One pass of mini-batch SGD over `order`. Per-sample dropout streams are
// epoch_rng.split(position-in-epoch), which keeps them independent of both
// batching and threading.
EpochResult run_sgd_epoch(const Architecture& arch, const Dataset& dataset,
                          const std::vector<std::size_t>& order, ParamVector& params,
                          ParamVector& velocity, double learning_rate, double momentum,
                          double weight_decay, int batch_size, const RngStream& epoch_rng,
                          int threads) {
    const std::size_t n = order.size();
    const std::size_t p = params.size();
    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;

    std::vector<BatchAccumulator> groups(kReduceGroups);
    for (auto& g : groups) {
        g.grad.assign(p, 0.0);
    }

    for (std::size_t batch_start = 0; batch_start < n;
         batch_start += static_cast<std::size_t>(batch_size)) {
        const std::size_t batch_end =
            std::min(n, batch_start + static_cast<std::size_t>(batch_size));
        const std::size_t batch_n = batch_end - batch_start;

        for (auto& g : groups) {
            std::fill(g.grad.begin(), g.grad.end(), 0.0);
            g.loss = 0.0;
            g.correct = 0;
        }

        const auto process_group = [&](int group) {
            // Group g owns every (batch-relative) position j with j % G == g.
            for (std::size_t j = static_cast<std::size_t>(group); j < batch_n;
                 j += kReduceGroups) {
                const std::size_t position = batch_start + j;
                const std::size_t sample_index = order[position];
                const auto& sample = dataset.samples[sample_index];
                RngStream sample_rng = epoch_rng.split(position);
                const auto output =
                    forward(arch, params, sample.values, RunMode::Train, &sample_rng);
                auto [loss, grad] = backward(arch, params, output, sample.label);
                auto& acc = groups[static_cast<std::size_t>(group)];
                acc.loss += loss;
                if (static_cast<int>(argmax(output.logits)) == sample.label) {
                    ++acc.correct;
                }
                for (std::size_t i = 0; i < p; ++i) {
                    acc.grad[i] += grad[i];
                }
            }
        };

        const int worker_count = std::max(1, std::min(threads, kReduceGroups));
        if (worker_count == 1) {
            for (int g = 0; g < kReduceGroups; ++g) {
                process_group(g);
            }
        } else {
            std::atomic<int> next_group{0};
            std::vector<std::thread> workers;
            workers.reserve(static_cast<std::size_t>(worker_count));
            for (int w = 0; w < worker_count; ++w) {
                workers.emplace_back([&]() {
                    int g;
                    while ((g = next_group.fetch_add(1)) < kReduceGroups) {
                        process_group(g);
                    }
                });
            }
            for (auto& worker : workers) {
                worker.join();
            }
        }

        // Fixed-order reduction.
        for (int g = 1; g < kReduceGroups; ++g) {
            for (std::size_t i = 0; i < p; ++i) {
                groups[0].grad[i] += groups[static_cast<std::size_t>(g)].grad[i];
            }
            groups[0].loss += groups[static_cast<std::size_t>(g)].loss;
            groups[0].correct += groups[static_cast<std::size_t>(g)].correct;
        }
        epoch_loss += groups[0].loss;
        epoch_correct += static_cast<std::size_t>(groups[0].correct);

        const double inv_batch = 1.0 / static_cast<double>(batch_n);
        for (std::size_t i = 0; i < p; ++i) {
            const double g = groups[0].grad[i] * inv_batch + weight_decay * params[i];
            velocity[i] = momentum * velocity[i] - learning_rate * g;
            params[i] += velocity[i];
        }
    }

    EpochResult result;
    result.loss = epoch_loss / static_cast<double>(n);
    result.acc = static_cast<double>(epoch_correct) / static_cast<double>(n);
    return result;
}

void validate_config(const TrainConfig& config) {
    if (config.batch_size < 1) {
        throw std::invalid_argument("train: batch_size must be at least 1");
    }
    if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
        throw std::invalid_argument("train: validation_fraction must be in [0, 1)");
    }
    if (config.epochs_max < 0 || config.early_stop_patience < 0) {
        throw std::invalid_argument("train: epochs_max and patience must be non-negative");
    }
    if (config.learning_rate < 0.0 || config.momentum < 0.0 || config.weight_decay < 0.0) {
        throw std::invalid_argument("train: negative hyperparameter");
    }
}

struct Carve {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

Carve carve_validation(const RngStream& root, const std::vector<std::size_t>& train_indices,
                       double fraction) {
    Carve carve;
    std::vector<std::size_t> shuffled = train_indices;
    RngStream val_rng = root.split(1);
    val_rng.shuffle(shuffled);
    const std::size_t n_val =
        static_cast<std::size_t>(fraction * static_cast<double>(shuffled.size()));
    carve.val.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
    carve.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
    return carve;
}

} // namespace

std::pair<double, double> evaluate_loss_acc(const Architecture& arch, const ParamVector& params,
                                            const Dataset& dataset,
                                            const std::vector<std::size_t>& indices) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t index : indices) {
        const auto& sample = dataset.samples[index];
        const auto output = forward(arch, params, sample.values, RunMode::Eval);
        loss += sample_loss(output.logits, sample.label);
        if (static_cast<int>(argmax(output.logits)) == sample.label) {
            ++correct;
        }
    }
    const double n = static_cast<double>(indices.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const Architecture& arch, const Dataset& dataset,
                  const std::vector<std::size_t>& train_indices, const TrainConfig& config,
                  int threads) {
    arch.validate();
    validate_config(config);
    if (train_indices.empty()) {
        throw std::invalid_argument("train: empty training set");
    }
    for (std::size_t index : train_indices) {
        if (index >= dataset.samples.size()) {
            throw std::invalid_argument("train: sample index out of range");
        }
    }

    const RngStream root(config.seed);
    RngStream init_rng = root.split(0);
    ParamVector params = init_params(arch, init_rng);
    ParamVector velocity(params.size(), 0.0);

    const Carve carve = carve_validation(root, train_indices, config.validation_fraction);
    const bool has_val = !carve.val.empty();

    TrainResult result;
    ParamVector best_params = params;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    for (int epoch = 0; epoch < config.epochs_max; ++epoch) {
        const RngStream epoch_rng = root.split(2 + static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order = carve.train;
        RngStream shuffle_rng = epoch_rng;
        shuffle_rng.shuffle(order);

        const EpochResult metrics =
            run_sgd_epoch(arch, dataset, order, params, velocity, config.learning_rate,
                          config.momentum, config.weight_decay, config.batch_size, epoch_rng,
                          threads);

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = metrics.loss;
        stats.train_acc = metrics.acc;
        if (has_val) {
            std::tie(stats.val_loss, stats.val_acc) =
                evaluate_loss_acc(arch, params, dataset, carve.val);
        } else {
            stats.val_loss = metrics.loss;
            stats.val_acc = metrics.acc;
        }
        result.history.push_back(stats);

        if (has_val) {
            if (stats.val_loss < best_val_loss) {
                best_val_loss = stats.val_loss;
                best_params = params;
                stale_epochs = 0;
            } else {
                ++stale_epochs;
                if (stale_epochs >= config.early_stop_patience) {
                    break;
                }
            }
        }
    }

    result.params = has_val ? std::move(best_params) : std::move(params);
    return result;
}

void SwagStats::add_snapshot(const ParamVector& params) {
    ++n_snapshots;
    if (n_snapshots == 1) {
        first_moment = params;
        second_moment.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            second_moment[i] = params[i] * params[i];
        }
    } else {
        const double inv_n = 1.0 / static_cast<double>(n_snapshots);
        for (std::size_t i = 0; i < params.size(); ++i) {
            first_moment[i] += (params[i] - first_moment[i]) * inv_n;
            second_moment[i] += (params[i] * params[i] - second_moment[i]) * inv_n;
        }
    }
    ParamVector deviation(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        deviation[i] = params[i] - first_moment[i];
    }
    deviation_columns.push_back(std::move(deviation));
    while (static_cast<int>(deviation_columns.size()) > max_rank) {
        deviation_columns.pop_front();
    }
}

SwagTrainResult train_swag(const Architecture& arch, const Dataset& dataset,
                           const std::vector<std::size_t>& train_indices,
                           const TrainConfig& config, const SwagConfig& swag, int threads) {
    if (swag.max_rank < 2) {
        throw std::invalid_argument("train_swag: max_rank must be at least 2");
    }
    if (swag.snapshot_every_epochs < 1) {
        throw std::invalid_argument("train_swag: snapshot_every_epochs must be positive");
    }
    if (swag.burn_in_epochs < 0 || swag.swa_learning_rate < 0.0) {
        throw std::invalid_argument("train_swag: invalid burn-in or SWA learning rate");
    }

    TrainConfig burn_in_config = config;
    burn_in_config.epochs_max = swag.burn_in_epochs;
    TrainResult burn_in = train(arch, dataset, train_indices, burn_in_config, threads);

    SwagTrainResult result;
    result.history = std::move(burn_in.history);
    result.stats.max_rank = swag.max_rank;

    ParamVector params = std::move(burn_in.params);
    ParamVector velocity(params.size(), 0.0);

    const RngStream root(config.seed);
    const Carve carve = carve_validation(root, train_indices, config.validation_fraction);
    const bool has_val = !carve.val.empty();

    const int swa_epochs = swag.max_rank * swag.snapshot_every_epochs;
    for (int e = 0; e < swa_epochs; ++e) {
        const int epoch = swag.burn_in_epochs + e;
        const RngStream epoch_rng = root.split(2 + static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order = carve.train;
        RngStream shuffle_rng = epoch_rng;
        shuffle_rng.shuffle(order);

        const EpochResult metrics =
            run_sgd_epoch(arch, dataset, order, params, velocity, swag.swa_learning_rate,
                          config.momentum, config.weight_decay, config.batch_size, epoch_rng,
                          threads);

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = metrics.loss;
        stats.train_acc = metrics.acc;
        if (has_val) {
            std::tie(stats.val_loss, stats.val_acc) =
                evaluate_loss_acc(arch, params, dataset, carve.val);
        } else {
            stats.val_loss = metrics.loss;
            stats.val_acc = metrics.acc;
        }
        result.history.push_back(stats);

        if ((e + 1) % swag.snapshot_every_epochs == 0) {
            result.stats.add_snapshot(params);
        }
    }

    if (result.stats.n_snapshots < 2) {
        throw InvalidStateError("train_swag: fewer than 2 snapshots collected");
    }
    result.swa_params = result.stats.first_moment;
    return result;
}

std::vector<TrainResult> train_ensemble(const Architecture& arch, const Dataset& dataset,
                                        const std::vector<std::size_t>& train_indices,
                                        const TrainConfig& config, const EnsembleConfig& ensemble,
                                        int threads) {
    if (ensemble.member_count < 1) {
        throw std::invalid_argument("train_ensemble: member_count must be at least 1");
    }
    const int m = ensemble.member_count;
    std::vector<TrainResult> results(static_cast<std::size_t>(m));

    const auto run_member = [&](int i, int member_threads) {
        TrainConfig member_config = config;
        member_config.seed = ensemble.base_seed + static_cast<std::uint64_t>(i);
        results[static_cast<std::size_t>(i)] =
            train(arch, dataset, train_indices, member_config, member_threads);
    };

    const int workers = std::max(1, std::min(threads, m));
    if (workers == 1 || m == 1) {
        for (int i = 0; i < m; ++i) {
            try {
                run_member(i, threads);
            } catch (const std::exception& e) {
                throw std::runtime_error("ensemble member " + std::to_string(i) + ": " +
                                         e.what());
            }
        }
        return results;
    }

    std::vector<std::string> errors(static_cast<std::size_t>(m));
    std::vector<char> failed(static_cast<std::size_t>(m), 0);
    std::atomic<int> next_member{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            int i;
            while ((i = next_member.fetch_add(1)) < m) {
                try {
                    run_member(i, 1);
                } catch (const std::exception& e) {
                    errors[static_cast<std::size_t>(i)] = e.what();
                    failed[static_cast<std::size_t>(i)] = 1;
                }
            }
        });
    }
    for (auto& worker : pool) {
        worker.join();
    }
    for (int i = 0; i < m; ++i) {
        if (failed[static_cast<std::size_t>(i)]) {
            throw std::runtime_error("ensemble member " + std::to_string(i) + ": " +
                                     errors[static_cast<std::size_t>(i)]);
        }
    }
    return results;
}

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_history_csv: cannot open " + path.string());
    }
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& row : history) {
        out << row.epoch << ',' << format_double(row.train_loss) << ','
            << format_double(row.train_acc) << ',' << format_double(row.val_loss) << ','
            << format_double(row.val_acc) << "\n";
    }
}

} // namespace uqpen
