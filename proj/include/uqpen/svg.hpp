#pragma once

#include "uqpen/calibration.hpp"
#include "uqpen/tensor.hpp"
#include "uqpen/uncertainty.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace uqpen {

// Standalone deterministic SVG documents (no timestamps, fixed formatting).

// Accuracy bars against the dashed bisector, with the confidence histogram
// in a lower panel. Empty bins are drawn as hollow markers.
void write_reliability_svg(const CalibrationTable& table, const std::filesystem::path& path);

// K x K heatmap on a caller-fixed color scale; vmin/vmax are printed in the
// legend so a shared scale is visible in the output itself.
void write_heatmap_svg(const Matrix& matrix, const std::vector<std::string>& class_names,
                       const std::string& title, double vmin, double vmax,
                       const std::filesystem::path& path);

// Grouped per-class TU/AU/EU bars.
void write_class_bars_svg(const std::vector<std::string>& class_names,
                          const std::vector<double>& total_bits,
                          const std::vector<double>& aleatoric_bits,
                          const std::vector<double>& epistemic_bits,
                          const std::filesystem::path& path);

// Accuracy of the confident/uncertain partitions across entropy thresholds,
// with markers at each threshold; undefined partitions leave gaps.
void write_sweep_svg(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

} // namespace uqpen
