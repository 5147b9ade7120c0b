#include "uqpen/calibration.hpp"

#include "uqpen/ioutil.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace uqpen {

CalibrationTable calibrate(const std::vector<PredictionOutcome>& predictions, int bin_count) {
    if (bin_count < 1) {
        throw std::invalid_argument("calibrate: bin_count must be positive");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("calibrate: need at least one prediction");
    }
    CalibrationTable table;
    table.bin_count = bin_count;
    table.n = predictions.size();
    table.bins.resize(static_cast<std::size_t>(bin_count));
    const double width = 1.0 / static_cast<double>(bin_count);
    for (int e = 0; e < bin_count; ++e) {
        table.bins[static_cast<std::size_t>(e)].lower = static_cast<double>(e) * width;
        table.bins[static_cast<std::size_t>(e)].upper = static_cast<double>(e + 1) * width;
    }

    std::vector<double> conf_sum(static_cast<std::size_t>(bin_count), 0.0);
    std::vector<std::size_t> correct(static_cast<std::size_t>(bin_count), 0);
    for (const auto& p : predictions) {
        if (!(p.confidence > 0.0 && p.confidence <= 1.0)) {
            throw std::invalid_argument("calibrate: confidence must lie in (0, 1]");
        }
        // Bin e holds (e/E, (e+1)/E]: the smallest e with confidence <= (e+1)/E.
        int e = static_cast<int>(
                    std::ceil(p.confidence * static_cast<double>(bin_count))) - 1;
        if (e < 0) e = 0;
        if (e >= bin_count) e = bin_count - 1;
        auto& bin = table.bins[static_cast<std::size_t>(e)];
        ++bin.count;
        conf_sum[static_cast<std::size_t>(e)] += p.confidence;
        correct[static_cast<std::size_t>(e)] += p.correct ? 1 : 0;
    }

    double ece = 0.0;
    for (int e = 0; e < bin_count; ++e) {
        auto& bin = table.bins[static_cast<std::size_t>(e)];
        if (bin.count == 0) {
            continue;
        }
        bin.confidence = conf_sum[static_cast<std::size_t>(e)] / static_cast<double>(bin.count);
        bin.accuracy =
            static_cast<double>(correct[static_cast<std::size_t>(e)]) /
            static_cast<double>(bin.count);
        const double gap = bin.accuracy - bin.confidence;
        bin.over_under = gap > 0.0 ? 1 : (gap < 0.0 ? -1 : 0);
        ece += static_cast<double>(bin.count) / static_cast<double>(table.n) * std::abs(gap);
    }
    table.ece = ece;
    return table;
}

ReliabilityData reliability_data(const CalibrationTable& table) {
    ReliabilityData data;
    data.bars.reserve(table.bins.size());
    for (const auto& bin : table.bins) {
        ReliabilityBar bar;
        bar.mid = 0.5 * (bin.lower + bin.upper);
        bar.accuracy = bin.count > 0 ? bin.accuracy : 0.0;
        bar.empty = bin.count == 0;
        bar.histogram_count = bin.count;
        data.bars.push_back(bar);
    }
    return data;
}

void save_calibration_csv(const CalibrationTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_calibration_csv: cannot open " + path.string());
    }
    out << "bin_lower,bin_upper,count,confidence,accuracy\n";
    for (const auto& bin : table.bins) {
        out << format_double(bin.lower) << ',' << format_double(bin.upper) << ',' << bin.count
            << ',' << format_double(bin.confidence) << ',' << format_double(bin.accuracy)
            << "\n";
    }
}

} // namespace uqpen
