#pragma once

#include "uqpen/dataset.hpp"
#include "uqpen/posterior.hpp"
#include "uqpen/prob.hpp"
#include "uqpen/tensor.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace uqpen {

// Softmax-variability decomposition over T = S stochastic passes:
//   aleatoric = (1/T) sum_t diag(c_t) - c_t c_t^T
//   epistemic = (1/T) sum_t (c_t - c_bar)(c_t - c_bar)^T
// Both are symmetric K x K matrices and sum to diag(c_bar) - c_bar c_bar^T.
struct KwonMatrices {
    Matrix aleatoric;
    Matrix epistemic;
};

// Arithmetic mean over draw rows (the Monte Carlo model average).
ProbVector bma(const SoftmaxDraws& draws);

KwonMatrices kwon_decompose(const SoftmaxDraws& draws);

// Entropy-based decomposition in bits: total = H(bma), aleatoric = mean
// per-draw entropy, epistemic = total - aleatoric (mutual information),
// clamped to 0 when a rounding residue dips within -1e-9.
struct InfoDecomposition {
    double total_bits = 0.0;
    double aleatoric_bits = 0.0;
    double epistemic_bits = 0.0;
};

InfoDecomposition info_decompose(const SoftmaxDraws& draws);

struct SampleUncertainty {
    int sample_id = 0;
    int true_label = 0;
    int predicted = 0;
    double confidence = 0.0; // max of the BMA distribution
    double total_bits = 0.0;
    double aleatoric_bits = 0.0;
    double epistemic_bits = 0.0;
    KwonMatrices kwon;
    std::vector<double> bma;
    bool correct = false;
};

struct UncertaintyReport {
    int class_count = 0;
    std::vector<std::string> class_names;
    std::vector<SampleUncertainty> samples;
    Matrix confusion_percent;   // rows = true class, row-normalized to percent
    Matrix mean_aleatoric;      // elementwise mean over evaluated samples
    Matrix mean_epistemic;
    std::vector<double> class_mean_total;     // per true class, 0 when absent
    std::vector<double> class_mean_aleatoric;
    std::vector<double> class_mean_epistemic;
    std::vector<std::size_t> class_counts;
    double accuracy = 0.0;
};

// Draw source for one input; `position` is the index within the evaluated
// set so parallel callers can derive per-input rng sub-streams.
using DrawFn =
    std::function<SoftmaxDraws(const MultivariateTimeSeries& sample, std::size_t position)>;

UncertaintyReport evaluate_draws(const DrawFn& draw_fn, const Dataset& dataset,
                                 const std::vector<std::size_t>& indices);

// SWAG predictor: rng.split(position) seeds each input's draw stream.
UncertaintyReport evaluate(const Architecture& arch, const SwagPosterior& posterior,
                           const Dataset& dataset, const std::vector<std::size_t>& indices,
                           int s_draws, const RngStream& rng);

UncertaintyReport evaluate(const Architecture& arch, const std::vector<ParamVector>& members,
                           const Dataset& dataset, const std::vector<std::size_t>& indices);

// Accuracy on each side of an entropy threshold. Following the reference
// figure's axis naming: acc_above is the confident side (TU < tau) and
// acc_below the uncertain side (TU >= tau). Empty sides stay unset.
struct SweepRow {
    double threshold = 0.0;
    std::optional<double> acc_below;
    std::optional<double> acc_above;
    std::size_t n_below = 0;
    std::size_t n_above = 0;
};

std::vector<SweepRow> entropy_threshold_sweep(const UncertaintyReport& report,
                                              const std::vector<double>& thresholds);

// 0 .. log2(K) in steps of 0.05.
std::vector<double> default_threshold_grid(int class_count);

// Report bundle CSVs: per-sample scalars, K x K grids with class-name
// headers, per-class means, and the confusion matrix.
void save_report(const UncertaintyReport& report, const std::filesystem::path& directory);
void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

} // namespace uqpen
