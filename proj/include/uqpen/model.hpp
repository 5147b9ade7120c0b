#pragma once

#include "uqpen/rng.hpp"
#include "uqpen/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace uqpen {

struct ConvBlockSpec {
    int filters = 64;
    int kernel_size = 4;
    double dropout_rate = 0.2;
};

struct TcnSpec {
    int channels = 48;
    int kernel_size = 4;
    std::vector<int> dilations = {1, 2};
};

/**
 * CNN feature extractor + temporal convolutional unit + dense classifier.
 *
 * Pipeline: per conv block [conv1d same padding -> ReLU -> max-pool/2 ->
 * dropout (train only)], then one TCN residual block per dilation (two
 * dilated causal convs, ReLU, residual add with a 1x1 projection when the
 * channel count changes), global average pool over time, dense layer to
 * class_count logits.
 *
 * Lengths: same-padding and causal convolutions preserve the step count;
 * each max-pool maps T to floor(T/2), so the TCN runs on
 * input_steps / 2^(number of conv blocks) steps.
 */
struct Architecture {
    int input_steps = 64;
    int input_channels = 13;
    std::vector<ConvBlockSpec> conv_blocks = {{64, 4, 0.2}, {64, 4, 0.2}};
    TcnSpec tcn;
    int class_count = 0;

    static Architecture desk_scale(int class_count);
    static Architecture paper_scale(int class_count);

    void validate() const; // throws std::invalid_argument
};

// Flat parameter vector; the layout below is its documented decomposition.
using ParamVector = std::vector<double>;

struct LayoutEntry {
    std::string name;
    std::vector<int> shape; // conv: (out, kernel, in); dense/proj: (out, in); bias: (n)
    std::size_t offset = 0;
    std::size_t count = 0;
};

std::vector<LayoutEntry> param_layout(const Architecture& arch);
std::size_t param_count(const Architecture& arch);

// He-normal weights (std = sqrt(2/fan_in)) drawn in layout order; zero biases.
ParamVector init_params(const Architecture& arch, RngStream& rng);

enum class RunMode { Train, Eval };

struct ConvBlockCache {
    Matrix pre_relu;
    Matrix post_relu;
    Matrix pooled;
    std::vector<std::uint8_t> pool_pick; // offset of the max within each window
    std::vector<double> dropout_scale;   // 0 or 1/(1-rate); empty in Eval mode
    Matrix out;
};

struct TcnBlockCache {
    Matrix h1_pre;
    Matrix h1;
    Matrix h2;
    Matrix residual;
    Matrix out_pre;
    Matrix out;
};

struct ForwardCache {
    Matrix input;
    RunMode mode = RunMode::Eval;
    std::vector<ConvBlockCache> conv;
    std::vector<TcnBlockCache> tcn;
    std::vector<double> pooled_features;
};

struct ForwardOutput {
    std::vector<double> logits;
    ForwardCache cache;
};

// Train mode applies inverted dropout from rng; Eval is deterministic and
// needs no rng. x must be input_steps x input_channels.
ForwardOutput forward(const Architecture& arch, const ParamVector& params, const Matrix& x,
                      RunMode mode, RngStream* rng = nullptr);

// Softmax cross-entropy in nats against the cached forward pass; the
// gradient shares the parameter layout and differentiates the exact graph
// that ran (including recorded dropout masks).
std::pair<double, ParamVector> backward(const Architecture& arch, const ParamVector& params,
                                        const ForwardOutput& output, int target);

// Checkpoint file: magic "UQHW", version u32 LE, u32 LE JSON length, the
// architecture as UTF-8 JSON, parameter count u64 LE, count x f64 LE.
void save_checkpoint(const ParamVector& params, const Architecture& arch,
                     const std::filesystem::path& path);
std::pair<Architecture, ParamVector> load_checkpoint(const std::filesystem::path& path);

// Architecture JSON helpers shared with the posterior container.
std::string arch_to_json(const Architecture& arch);
Architecture arch_from_json(const std::string& text);

} // namespace uqpen
