#include "uqpen/uncertainty.hpp"

#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace uqpen {

namespace {
constexpr double kEpistemicClamp = 1e-9;
}

ProbVector bma(const SoftmaxDraws& draws) {
    const std::size_t s = draws.draw_count();
    const std::size_t k = draws.class_count();
    if (s < 1) {
        throw std::invalid_argument("bma: need at least one draw");
    }
    std::vector<double> mean(k, 0.0);
    for (std::size_t t = 0; t < s; ++t) {
        for (std::size_t i = 0; i < k; ++i) {
            mean[i] += draws.draws(t, i);
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(s);
    }
    return ProbVector(std::move(mean));
}

KwonMatrices kwon_decompose(const SoftmaxDraws& draws) {
    const std::size_t t_count = draws.draw_count();
    const std::size_t k = draws.class_count();
    if (t_count < 1) {
        throw std::invalid_argument("kwon_decompose: need at least one draw");
    }
    const ProbVector mean = bma(draws);

    KwonMatrices result;
    result.aleatoric = Matrix(k, k, 0.0);
    result.epistemic = Matrix(k, k, 0.0);
    const double inv_t = 1.0 / static_cast<double>(t_count);

    for (std::size_t t = 0; t < t_count; ++t) {
        const double* row = draws.draws.row_ptr(t);
        for (std::size_t i = 0; i < k; ++i) {
            const double ci = row[i];
            const double di = ci - mean[i];
            for (std::size_t j = i; j < k; ++j) {
                const double a = -ci * row[j];
                const double e = di * (row[j] - mean[j]);
                result.aleatoric(i, j) += a;
                result.epistemic(i, j) += e;
                if (j != i) {
                    result.aleatoric(j, i) += a;
                    result.epistemic(j, i) += e;
                }
            }
            result.aleatoric(i, i) += ci;
        }
    }
    for (double& v : result.aleatoric.data()) {
        v *= inv_t;
    }
    for (double& v : result.epistemic.data()) {
        v *= inv_t;
    }
    return result;
}

InfoDecomposition info_decompose(const SoftmaxDraws& draws) {
    const std::size_t s = draws.draw_count();
    if (s < 1) {
        throw std::invalid_argument("info_decompose: need at least one draw");
    }
    InfoDecomposition result;
    result.total_bits = entropy_bits(bma(draws));
    double mean_entropy = 0.0;
    for (std::size_t t = 0; t < s; ++t) {
        mean_entropy += entropy_bits(draws.row(t));
    }
    result.aleatoric_bits = mean_entropy / static_cast<double>(s);
    result.epistemic_bits = result.total_bits - result.aleatoric_bits;
    if (result.epistemic_bits < 0.0 && result.epistemic_bits >= -kEpistemicClamp) {
        result.epistemic_bits = 0.0;
    }
    return result;
}

UncertaintyReport evaluate_draws(const DrawFn& draw_fn, const Dataset& dataset,
                                 const std::vector<std::size_t>& indices) {
    if (indices.empty()) {
        throw std::invalid_argument("evaluate_draws: empty index set");
    }
    const int k = dataset.class_count;
    UncertaintyReport report;
    report.class_count = k;
    report.class_names = dataset.class_names;
    report.confusion_percent = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    report.mean_aleatoric = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    report.mean_epistemic = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    report.class_mean_total.assign(static_cast<std::size_t>(k), 0.0);
    report.class_mean_aleatoric.assign(static_cast<std::size_t>(k), 0.0);
    report.class_mean_epistemic.assign(static_cast<std::size_t>(k), 0.0);
    report.class_counts.assign(static_cast<std::size_t>(k), 0);

    Matrix confusion_counts(static_cast<std::size_t>(k), static_cast<std::size_t>(k), 0.0);
    std::size_t correct = 0;

    for (std::size_t position = 0; position < indices.size(); ++position) {
        const auto& sample = dataset.samples[indices[position]];
        const SoftmaxDraws draws = draw_fn(sample, position);
        if (static_cast<int>(draws.class_count()) != k) {
            throw std::invalid_argument("evaluate_draws: draw width does not match class count");
        }

        SampleUncertainty record;
        record.sample_id = sample.sample_id;
        record.true_label = sample.label;
        const ProbVector mean = bma(draws);
        record.bma = mean.values();
        record.predicted = static_cast<int>(argmax(record.bma));
        record.confidence = record.bma[static_cast<std::size_t>(record.predicted)];
        record.correct = record.predicted == sample.label;
        const InfoDecomposition info = info_decompose(draws);
        record.total_bits = info.total_bits;
        record.aleatoric_bits = info.aleatoric_bits;
        record.epistemic_bits = info.epistemic_bits;
        record.kwon = kwon_decompose(draws);

        correct += record.correct ? 1 : 0;
        confusion_counts(static_cast<std::size_t>(record.true_label),
                         static_cast<std::size_t>(record.predicted)) += 1.0;
        for (std::size_t i = 0; i < report.mean_aleatoric.data().size(); ++i) {
            report.mean_aleatoric.data()[i] += record.kwon.aleatoric.data()[i];
            report.mean_epistemic.data()[i] += record.kwon.epistemic.data()[i];
        }
        const auto label = static_cast<std::size_t>(record.true_label);
        report.class_mean_total[label] += record.total_bits;
        report.class_mean_aleatoric[label] += record.aleatoric_bits;
        report.class_mean_epistemic[label] += record.epistemic_bits;
        ++report.class_counts[label];

        report.samples.push_back(std::move(record));
    }

    const double inv_n = 1.0 / static_cast<double>(indices.size());
    for (std::size_t i = 0; i < report.mean_aleatoric.data().size(); ++i) {
        report.mean_aleatoric.data()[i] *= inv_n;
        report.mean_epistemic.data()[i] *= inv_n;
    }
    for (int c = 0; c < k; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        double row_total = 0.0;
        for (int j = 0; j < k; ++j) {
            row_total += confusion_counts(cc, static_cast<std::size_t>(j));
        }
        if (row_total > 0.0) {
            for (int j = 0; j < k; ++j) {
                report.confusion_percent(cc, static_cast<std::size_t>(j)) =
                    100.0 * confusion_counts(cc, static_cast<std::size_t>(j)) / row_total;
            }
        }
        if (report.class_counts[cc] > 0) {
            const double inv = 1.0 / static_cast<double>(report.class_counts[cc]);
            report.class_mean_total[cc] *= inv;
            report.class_mean_aleatoric[cc] *= inv;
            report.class_mean_epistemic[cc] *= inv;
        }
    }
    report.accuracy = static_cast<double>(correct) * inv_n;
    return report;
}

UncertaintyReport evaluate(const Architecture& arch, const SwagPosterior& posterior,
                           const Dataset& dataset, const std::vector<std::size_t>& indices,
                           int s_draws, const RngStream& rng) {
    return evaluate_draws(
        [&](const MultivariateTimeSeries& sample, std::size_t position) {
            RngStream input_rng = rng.split(position);
            return predictive_draws_swag(arch, posterior, sample.values, s_draws, input_rng);
        },
        dataset, indices);
}

UncertaintyReport evaluate(const Architecture& arch, const std::vector<ParamVector>& members,
                           const Dataset& dataset, const std::vector<std::size_t>& indices) {
    return evaluate_draws(
        [&](const MultivariateTimeSeries& sample, std::size_t) {
            return predictive_draws_ensemble(arch, members, sample.values);
        },
        dataset, indices);
}

std::vector<SweepRow> entropy_threshold_sweep(const UncertaintyReport& report,
                                              const std::vector<double>& thresholds) {
    if (report.samples.empty()) {
        throw std::invalid_argument("entropy_threshold_sweep: empty report");
    }
    std::vector<SweepRow> rows;
    rows.reserve(thresholds.size());
    for (double tau : thresholds) {
        SweepRow row;
        row.threshold = tau;
        std::size_t correct_above = 0, correct_below = 0;
        for (const auto& sample : report.samples) {
            if (sample.total_bits < tau) {
                ++row.n_above; // confident side
                correct_above += sample.correct ? 1 : 0;
            } else {
                ++row.n_below; // uncertain side
                correct_below += sample.correct ? 1 : 0;
            }
        }
        if (row.n_above > 0) {
            row.acc_above = static_cast<double>(correct_above) / static_cast<double>(row.n_above);
        }
        if (row.n_below > 0) {
            row.acc_below = static_cast<double>(correct_below) / static_cast<double>(row.n_below);
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<double> default_threshold_grid(int class_count) {
    const double limit = std::log2(static_cast<double>(class_count));
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double tau = 0.05 * static_cast<double>(i);
        if (tau > limit + 1e-12) {
            break;
        }
        grid.push_back(tau);
    }
    return grid;
}

namespace {

void save_matrix_csv(const Matrix& matrix, const std::vector<std::string>& class_names,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_matrix_csv: cannot open " + path.string());
    }
    out << "class";
    for (const auto& name : class_names) {
        out << ',' << name;
    }
    out << "\n";
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out << class_names[r];
        for (std::size_t c = 0; c < matrix.cols(); ++c) {
            out << ',' << format_double(matrix(r, c));
        }
        out << "\n";
    }
}

} // namespace

void save_report(const UncertaintyReport& report, const std::filesystem::path& directory) {
    if (!std::filesystem::is_directory(directory)) {
        throw std::invalid_argument("save_report: directory does not exist: " +
                                    directory.string());
    }
    {
        std::ofstream out(directory / "samples.csv", std::ios::binary);
        out << "sample_id,true,pred,tu_bits,au_bits,eu_bits,confidence\n";
        for (const auto& s : report.samples) {
            out << s.sample_id << ',' << report.class_names[static_cast<std::size_t>(s.true_label)]
                << ',' << report.class_names[static_cast<std::size_t>(s.predicted)] << ','
                << format_double(s.total_bits) << ',' << format_double(s.aleatoric_bits) << ','
                << format_double(s.epistemic_bits) << ',' << format_double(s.confidence) << "\n";
        }
    }
    save_matrix_csv(report.mean_aleatoric, report.class_names, directory / "aleatoric.csv");
    save_matrix_csv(report.mean_epistemic, report.class_names, directory / "epistemic.csv");
    save_matrix_csv(report.confusion_percent, report.class_names, directory / "confusion.csv");
    {
        std::ofstream out(directory / "per_class.csv", std::ios::binary);
        out << "class,count,mean_tu,mean_au,mean_eu\n";
        for (int c = 0; c < report.class_count; ++c) {
            const auto cc = static_cast<std::size_t>(c);
            out << report.class_names[cc] << ',' << report.class_counts[cc] << ','
                << format_double(report.class_mean_total[cc]) << ','
                << format_double(report.class_mean_aleatoric[cc]) << ','
                << format_double(report.class_mean_epistemic[cc]) << "\n";
        }
    }
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_sweep_csv: cannot open " + path.string());
    }
    out << "threshold,acc_below,acc_above,n_below,n_above\n";
    for (const auto& row : rows) {
        out << format_double(row.threshold) << ','
            << (row.acc_below ? format_double(*row.acc_below) : std::string("nan")) << ','
            << (row.acc_above ? format_double(*row.acc_above) : std::string("nan")) << ','
            << row.n_below << ',' << row.n_above << "\n";
    }
}

} // namespace uqpen
