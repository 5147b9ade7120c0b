#pragma once

#include "uqpen/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace uqpen {

enum class Hand { Right, Left };

// One labeled pen recording: q time steps x l sensor channels.
struct MultivariateTimeSeries {
    Matrix values;
    int label = 0;
    int writer_id = 0;
    Hand hand = Hand::Right;
    int sample_id = 0;
};

struct Dataset {
    std::vector<MultivariateTimeSeries> samples;
    int class_count = 0;
    std::vector<std::string> class_names;
};

enum class SplitMode { WriterDependent, WriterIndependent };

struct FoldIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct FoldSplit {
    SplitMode mode = SplitMode::WriterDependent;
    int fold_count = 5;
    std::vector<FoldIndices> folds;
};

/**
 * Synthetic pen-sensor generator configuration.
 *
 * Each class has a fixed 2D stroke template; confusable pairs share the
 * template of their first member scaled by 0.6. Writers get a deterministic
 * style (scale, slant, speed) from their seeded sub-stream; samples differ
 * only by additive Gaussian channel noise. Left-handed writers produce a
 * structured domain shift: mirrored x axis, one negated gyro channel, and a
 * rotated magnetometer frame.
 */
struct GeneratorConfig {
    int class_count = 10;
    std::vector<std::pair<int, int>> confusable_pairs = {{0, 1}, {2, 3}};
    int writers_right = 20;
    int writers_left = 4;
    int samples_per_writer_per_class = 6;
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;
};

// 13 channels: c0..c2 / c3..c5 accelerometers (second differences of pen
// position + gravity on the third axis; placements differ by a fixed gain),
// c6..c8 gyroscope (heading rate), c9..c11 magnetometer (rotated unit
// heading), c12 pen force.
inline constexpr int kChannelCount = 13;
inline constexpr int kDefaultSteps = 64;

Dataset generate(const GeneratorConfig& config);

// CSV format: header sample_id,writer_id,hand,label,step,c0,...,c12 with
// hand in {R, L}, step 0-based and contiguous per sample. Variable-length
// samples are resampled to target_steps. Labels map to contiguous indices
// in sorted class-name order. Throws ParseError naming the offending line.
Dataset load_csv(const std::filesystem::path& path, int target_steps = kDefaultSteps);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

// WD: stratified-by-label partition of samples; WI: partition of writers.
FoldSplit split(const Dataset& dataset, SplitMode mode, int fold_count, std::uint64_t seed);

void save_split(const FoldSplit& fold_split, const std::filesystem::path& path);
FoldSplit load_split(const std::filesystem::path& path);

// Keeps sample order and class_count. Classes left empty are appended to
// *empty_classes when given, otherwise a warning goes to stderr.
Dataset filter_by_hand(const Dataset& dataset, Hand hand,
                       std::vector<int>* empty_classes = nullptr);

std::string hand_token(Hand hand); // "R" / "L"

} // namespace uqpen
