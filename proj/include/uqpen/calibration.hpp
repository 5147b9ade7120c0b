#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace uqpen {

struct PredictionOutcome {
    double confidence = 0.0; // max of the BMA distribution, in (0, 1]
    bool correct = false;
};

struct CalibrationBin {
    double lower = 0.0; // open
    double upper = 0.0; // closed
    std::size_t count = 0;
    double confidence = 0.0; // mean confidence of members; 0 for empty bins
    double accuracy = 0.0;   // fraction correct; 0 for empty bins
    int over_under = 0;      // sign(accuracy - confidence); 0 for empty bins
};

struct CalibrationTable {
    int bin_count = 10;
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
    std::size_t n = 0;
};

// Bins partition (0, 1] into bin_count equal intervals (l_e, u_e]. ECE is
// the bin-count-weighted |accuracy - confidence|; empty bins contribute 0.
CalibrationTable calibrate(const std::vector<PredictionOutcome>& predictions, int bin_count = 10);

// Plot-ready reshaping of a table: accuracy bar per bin (with an explicit
// empty flag distinguishing empty bins from accuracy 0), the bisector
// reference at the bin midpoint, and the confidence histogram counts.
struct ReliabilityBar {
    double mid = 0.0;
    double accuracy = 0.0;
    bool empty = true;
    std::size_t histogram_count = 0;
};

struct ReliabilityData {
    std::vector<ReliabilityBar> bars;
};

ReliabilityData reliability_data(const CalibrationTable& table);

// CSV: bin_lower,bin_upper,count,confidence,accuracy
void save_calibration_csv(const CalibrationTable& table, const std::filesystem::path& path);

} // namespace uqpen
