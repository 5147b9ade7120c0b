#include "uqpen/model.hpp"

#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"
#include "uqpen/prob.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace uqpen {

namespace {

constexpr char kCheckpointMagic[4] = {'U', 'Q', 'H', 'W'};
constexpr std::uint32_t kCheckpointVersion = 1;

int pooled_steps(const Architecture& arch) {
    int steps = arch.input_steps;
    for (std::size_t i = 0; i < arch.conv_blocks.size(); ++i) {
        steps /= 2;
    }
    return steps;
}

// Same-padding 1D convolution over a [time][channel] matrix.
// W layout: (out, kernel, in), pad_left = (k-1)/2.
void conv1d_same(const Matrix& in, const double* w, const double* b, int out_ch, int kernel,
                 Matrix& out) {
    const int t_len = static_cast<int>(in.rows());
    const int in_ch = static_cast<int>(in.cols());
    const int pad_left = (kernel - 1) / 2;
    for (int t = 0; t < t_len; ++t) {
        double* out_row = out.row_ptr(static_cast<std::size_t>(t));
        for (int co = 0; co < out_ch; ++co) {
            out_row[co] = b[co];
        }
        for (int j = 0; j < kernel; ++j) {
            const int tt = t + j - pad_left;
            if (tt < 0 || tt >= t_len) {
                continue;
            }
            const double* in_row = in.row_ptr(static_cast<std::size_t>(tt));
            for (int co = 0; co < out_ch; ++co) {
                const double* w_row = w + (static_cast<std::size_t>(co) * kernel + j) * in_ch;
                double acc = 0.0;
                for (int ci = 0; ci < in_ch; ++ci) {
                    acc += w_row[ci] * in_row[ci];
                }
                out_row[co] += acc;
            }
        }
    }
}

void conv1d_same_backward(const Matrix& in, const double* w, int out_ch, int kernel,
                          const Matrix& d_out, Matrix& d_in, double* d_w, double* d_b) {
    const int t_len = static_cast<int>(in.rows());
    const int in_ch = static_cast<int>(in.cols());
    const int pad_left = (kernel - 1) / 2;
    for (int t = 0; t < t_len; ++t) {
        const double* d_row = d_out.row_ptr(static_cast<std::size_t>(t));
        for (int co = 0; co < out_ch; ++co) {
            d_b[co] += d_row[co];
        }
        for (int j = 0; j < kernel; ++j) {
            const int tt = t + j - pad_left;
            if (tt < 0 || tt >= t_len) {
                continue;
            }
            const double* in_row = in.row_ptr(static_cast<std::size_t>(tt));
            double* d_in_row = d_in.row_ptr(static_cast<std::size_t>(tt));
            for (int co = 0; co < out_ch; ++co) {
                const double g = d_row[co];
                if (g == 0.0) {
                    continue;
                }
                const std::size_t base = (static_cast<std::size_t>(co) * kernel + j) * in_ch;
                const double* w_row = w + base;
                double* d_w_row = d_w + base;
                for (int ci = 0; ci < in_ch; ++ci) {
                    d_w_row[ci] += g * in_row[ci];
                    d_in_row[ci] += g * w_row[ci];
                }
            }
        }
    }
}

// Left-padded causal dilated convolution: output at t reads taps
// t - (kernel-1-j)*dilation for j = 0..kernel-1.
void conv1d_causal(const Matrix& in, const double* w, const double* b, int out_ch, int kernel,
                   int dilation, Matrix& out) {
    const int t_len = static_cast<int>(in.rows());
    const int in_ch = static_cast<int>(in.cols());
    for (int t = 0; t < t_len; ++t) {
        double* out_row = out.row_ptr(static_cast<std::size_t>(t));
        for (int co = 0; co < out_ch; ++co) {
            out_row[co] = b[co];
        }
        for (int j = 0; j < kernel; ++j) {
            const int tt = t - (kernel - 1 - j) * dilation;
            if (tt < 0) {
                continue;
            }
            const double* in_row = in.row_ptr(static_cast<std::size_t>(tt));
            for (int co = 0; co < out_ch; ++co) {
                const double* w_row = w + (static_cast<std::size_t>(co) * kernel + j) * in_ch;
                double acc = 0.0;
                for (int ci = 0; ci < in_ch; ++ci) {
                    acc += w_row[ci] * in_row[ci];
                }
                out_row[co] += acc;
            }
        }
    }
}

void conv1d_causal_backward(const Matrix& in, const double* w, int out_ch, int kernel,
                            int dilation, const Matrix& d_out, Matrix& d_in, double* d_w,
                            double* d_b) {
    const int t_len = static_cast<int>(in.rows());
    const int in_ch = static_cast<int>(in.cols());
    for (int t = 0; t < t_len; ++t) {
        const double* d_row = d_out.row_ptr(static_cast<std::size_t>(t));
        for (int co = 0; co < out_ch; ++co) {
            d_b[co] += d_row[co];
        }
        for (int j = 0; j < kernel; ++j) {
            const int tt = t - (kernel - 1 - j) * dilation;
            if (tt < 0) {
                continue;
            }
            const double* in_row = in.row_ptr(static_cast<std::size_t>(tt));
            double* d_in_row = d_in.row_ptr(static_cast<std::size_t>(tt));
            for (int co = 0; co < out_ch; ++co) {
                const double g = d_row[co];
                if (g == 0.0) {
                    continue;
                }
                const std::size_t base = (static_cast<std::size_t>(co) * kernel + j) * in_ch;
                const double* w_row = w + base;
                double* d_w_row = d_w + base;
                for (int ci = 0; ci < in_ch; ++ci) {
                    d_w_row[ci] += g * in_row[ci];
                    d_in_row[ci] += g * w_row[ci];
                }
            }
        }
    }
}

void relu_inplace(const Matrix& pre, Matrix& out) {
    out = pre;
    for (double& v : out.data()) {
        if (v < 0.0) {
            v = 0.0;
        }
    }
}

struct ParamCursor {
    const double* base;
    std::size_t offset = 0;
    const double* take(std::size_t n) {
        const double* p = base + offset;
        offset += n;
        return p;
    }
};

struct GradCursor {
    double* base;
    std::size_t offset = 0;
    double* take(std::size_t n) {
        double* p = base + offset;
        offset += n;
        return p;
    }
};

} // namespace

Architecture Architecture::desk_scale(int class_count) {
    Architecture arch;
    arch.conv_blocks = {{64, 4, 0.2}, {64, 4, 0.2}};
    arch.tcn = {48, 4, {1, 2}};
    arch.class_count = class_count;
    return arch;
}

Architecture Architecture::paper_scale(int class_count) {
    Architecture arch;
    arch.conv_blocks = {{200, 4, 0.2}, {200, 4, 0.2}};
    arch.tcn = {120, 4, {1, 2}};
    arch.class_count = class_count;
    return arch;
}

void Architecture::validate() const {
    if (input_steps < 1 || input_channels < 1) {
        throw std::invalid_argument("Architecture: input shape must be positive");
    }
    if (class_count < 2) {
        throw std::invalid_argument("Architecture: class_count must be at least 2");
    }
    if (conv_blocks.empty()) {
        throw std::invalid_argument("Architecture: need at least one conv block");
    }
    for (const auto& block : conv_blocks) {
        if (block.filters < 1 || block.kernel_size < 1) {
            throw std::invalid_argument("Architecture: conv block shape must be positive");
        }
        if (block.dropout_rate < 0.0 || block.dropout_rate >= 1.0) {
            throw std::invalid_argument("Architecture: dropout_rate must be in [0, 1)");
        }
    }
    if (tcn.channels < 1 || tcn.kernel_size < 1 || tcn.dilations.empty()) {
        throw std::invalid_argument("Architecture: tcn shape must be positive");
    }
    int prev = 0;
    for (int d : tcn.dilations) {
        if (d <= prev) {
            throw std::invalid_argument(
                "Architecture: dilations must be strictly increasing positive integers");
        }
        prev = d;
    }
    if (pooled_steps(*this) < 1) {
        throw std::invalid_argument("Architecture: input_steps too short for the pooling chain");
    }
}

std::vector<LayoutEntry> param_layout(const Architecture& arch) {
    std::vector<LayoutEntry> layout;
    std::size_t offset = 0;
    const auto push = [&](const std::string& name, std::vector<int> shape) {
        std::size_t count = 1;
        for (int dim : shape) {
            count *= static_cast<std::size_t>(dim);
        }
        layout.push_back({name, std::move(shape), offset, count});
        offset += count;
    };

    int in_ch = arch.input_channels;
    for (std::size_t b = 0; b < arch.conv_blocks.size(); ++b) {
        const auto& block = arch.conv_blocks[b];
        const std::string prefix = "conv" + std::to_string(b);
        push(prefix + ".weight", {block.filters, block.kernel_size, in_ch});
        push(prefix + ".bias", {block.filters});
        in_ch = block.filters;
    }
    for (std::size_t i = 0; i < arch.tcn.dilations.size(); ++i) {
        const std::string prefix = "tcn" + std::to_string(i);
        push(prefix + ".conv1.weight", {arch.tcn.channels, arch.tcn.kernel_size, in_ch});
        push(prefix + ".conv1.bias", {arch.tcn.channels});
        push(prefix + ".conv2.weight", {arch.tcn.channels, arch.tcn.kernel_size, arch.tcn.channels});
        push(prefix + ".conv2.bias", {arch.tcn.channels});
        if (in_ch != arch.tcn.channels) {
            push(prefix + ".proj.weight", {arch.tcn.channels, in_ch});
            push(prefix + ".proj.bias", {arch.tcn.channels});
        }
        in_ch = arch.tcn.channels;
    }
    push("dense.weight", {arch.class_count, in_ch});
    push("dense.bias", {arch.class_count});
    return layout;
}

std::size_t param_count(const Architecture& arch) {
    const auto layout = param_layout(arch);
    return layout.back().offset + layout.back().count;
}

ParamVector init_params(const Architecture& arch, RngStream& rng) {
    arch.validate();
    const auto layout = param_layout(arch);
    ParamVector params(param_count(arch), 0.0);
    for (const auto& entry : layout) {
        if (entry.name.ends_with(".bias")) {
            continue;
        }
        // fan_in = product of all dims after the output dim.
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < entry.shape.size(); ++i) {
            fan_in *= static_cast<std::size_t>(entry.shape[i]);
        }
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < entry.count; ++i) {
            params[entry.offset + i] = stddev * rng.next_normal();
        }
    }
    return params;
}

ForwardOutput forward(const Architecture& arch, const ParamVector& params, const Matrix& x,
                      RunMode mode, RngStream* rng) {
    arch.validate();
    if (x.rows() != static_cast<std::size_t>(arch.input_steps) ||
        x.cols() != static_cast<std::size_t>(arch.input_channels)) {
        throw std::invalid_argument("forward: input shape mismatch");
    }
    if (params.size() != param_count(arch)) {
        throw std::invalid_argument("forward: parameter count mismatch");
    }

    ForwardOutput output;
    ForwardCache& cache = output.cache;
    cache.input = x;
    cache.mode = mode;

    ParamCursor cursor{params.data()};
    const Matrix* current = &cache.input;
    int in_ch = arch.input_channels;

    for (const auto& block : arch.conv_blocks) {
        ConvBlockCache bc;
        const int t_len = static_cast<int>(current->rows());
        const double* w = cursor.take(static_cast<std::size_t>(block.filters) *
                                      static_cast<std::size_t>(block.kernel_size) *
                                      static_cast<std::size_t>(in_ch));
        const double* b = cursor.take(static_cast<std::size_t>(block.filters));

        bc.pre_relu = Matrix(static_cast<std::size_t>(t_len),
                             static_cast<std::size_t>(block.filters));
        conv1d_same(*current, w, b, block.filters, block.kernel_size, bc.pre_relu);
        relu_inplace(bc.pre_relu, bc.post_relu);

        const int pooled_len = t_len / 2;
        bc.pooled = Matrix(static_cast<std::size_t>(pooled_len),
                           static_cast<std::size_t>(block.filters));
        bc.pool_pick.resize(static_cast<std::size_t>(pooled_len) *
                            static_cast<std::size_t>(block.filters));
        for (int t = 0; t < pooled_len; ++t) {
            const double* a = bc.post_relu.row_ptr(static_cast<std::size_t>(2 * t));
            const double* b2 = bc.post_relu.row_ptr(static_cast<std::size_t>(2 * t + 1));
            double* out_row = bc.pooled.row_ptr(static_cast<std::size_t>(t));
            std::uint8_t* pick =
                bc.pool_pick.data() + static_cast<std::size_t>(t) * block.filters;
            for (int c = 0; c < block.filters; ++c) {
                // Ties go to the earlier step.
                if (a[c] >= b2[c]) {
                    out_row[c] = a[c];
                    pick[c] = 0;
                } else {
                    out_row[c] = b2[c];
                    pick[c] = 1;
                }
            }
        }

        if (mode == RunMode::Train && block.dropout_rate > 0.0) {
            if (rng == nullptr) {
                throw std::invalid_argument("forward: Train mode needs an rng for dropout");
            }
            const double keep_scale = 1.0 / (1.0 - block.dropout_rate);
            bc.dropout_scale.resize(bc.pooled.data().size());
            bc.out = bc.pooled;
            for (std::size_t i = 0; i < bc.dropout_scale.size(); ++i) {
                const bool keep = rng->next_uniform() >= block.dropout_rate;
                bc.dropout_scale[i] = keep ? keep_scale : 0.0;
                bc.out.data()[i] = bc.pooled.data()[i] * bc.dropout_scale[i];
            }
        } else {
            bc.out = bc.pooled;
        }

        cache.conv.push_back(std::move(bc));
        current = &cache.conv.back().out;
        in_ch = block.filters;
    }

    for (int dilation : arch.tcn.dilations) {
        TcnBlockCache tc;
        const int t_len = static_cast<int>(current->rows());
        const int ch = arch.tcn.channels;
        const int k = arch.tcn.kernel_size;

        const double* w1 = cursor.take(static_cast<std::size_t>(ch) * k * in_ch);
        const double* b1 = cursor.take(static_cast<std::size_t>(ch));
        const double* w2 = cursor.take(static_cast<std::size_t>(ch) * k * ch);
        const double* b2 = cursor.take(static_cast<std::size_t>(ch));

        tc.h1_pre = Matrix(static_cast<std::size_t>(t_len), static_cast<std::size_t>(ch));
        conv1d_causal(*current, w1, b1, ch, k, dilation, tc.h1_pre);
        relu_inplace(tc.h1_pre, tc.h1);

        tc.h2 = Matrix(static_cast<std::size_t>(t_len), static_cast<std::size_t>(ch));
        conv1d_causal(tc.h1, w2, b2, ch, k, dilation, tc.h2);

        if (in_ch != ch) {
            const double* wp = cursor.take(static_cast<std::size_t>(ch) * in_ch);
            const double* bp = cursor.take(static_cast<std::size_t>(ch));
            tc.residual = Matrix(static_cast<std::size_t>(t_len), static_cast<std::size_t>(ch));
            for (int t = 0; t < t_len; ++t) {
                const double* in_row = current->row_ptr(static_cast<std::size_t>(t));
                double* out_row = tc.residual.row_ptr(static_cast<std::size_t>(t));
                for (int co = 0; co < ch; ++co) {
                    const double* w_row = wp + static_cast<std::size_t>(co) * in_ch;
                    double acc = bp[co];
                    for (int ci = 0; ci < in_ch; ++ci) {
                        acc += w_row[ci] * in_row[ci];
                    }
                    out_row[co] = acc;
                }
            }
        } else {
            tc.residual = *current;
        }

        tc.out_pre = tc.h2;
        for (std::size_t i = 0; i < tc.out_pre.data().size(); ++i) {
            tc.out_pre.data()[i] += tc.residual.data()[i];
        }
        relu_inplace(tc.out_pre, tc.out);

        cache.tcn.push_back(std::move(tc));
        current = &cache.tcn.back().out;
        in_ch = ch;
    }

    // Global average pool then dense classifier.
    const int t_len = static_cast<int>(current->rows());
    cache.pooled_features.assign(static_cast<std::size_t>(in_ch), 0.0);
    for (int t = 0; t < t_len; ++t) {
        const double* row = current->row_ptr(static_cast<std::size_t>(t));
        for (int c = 0; c < in_ch; ++c) {
            cache.pooled_features[static_cast<std::size_t>(c)] += row[c];
        }
    }
    for (double& v : cache.pooled_features) {
        v /= static_cast<double>(t_len);
    }

    const double* wd = cursor.take(static_cast<std::size_t>(arch.class_count) * in_ch);
    const double* bd = cursor.take(static_cast<std::size_t>(arch.class_count));
    output.logits.assign(static_cast<std::size_t>(arch.class_count), 0.0);
    for (int k = 0; k < arch.class_count; ++k) {
        const double* w_row = wd + static_cast<std::size_t>(k) * in_ch;
        double acc = bd[k];
        for (int c = 0; c < in_ch; ++c) {
            acc += w_row[c] * cache.pooled_features[static_cast<std::size_t>(c)];
        }
        output.logits[static_cast<std::size_t>(k)] = acc;
    }
    return output;
}

std::pair<double, ParamVector> backward(const Architecture& arch, const ParamVector& params,
                                        const ForwardOutput& output, int target) {
    if (target < 0 || target >= arch.class_count) {
        throw std::invalid_argument("backward: target class out of range");
    }
    if (params.size() != param_count(arch)) {
        throw std::invalid_argument("backward: parameter count mismatch");
    }
    const ForwardCache& cache = output.cache;

    // Stable log-softmax loss in nats.
    const auto& logits = output.logits;
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum_exp = 0.0;
    for (double v : logits) {
        sum_exp += std::exp(v - max_logit);
    }
    const double log_sum = max_logit + std::log(sum_exp);
    const double loss = log_sum - logits[static_cast<std::size_t>(target)];

    std::vector<double> d_logits(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        d_logits[k] = std::exp(logits[k] - log_sum);
    }
    d_logits[static_cast<std::size_t>(target)] -= 1.0;

    ParamVector grad(params.size(), 0.0);

    // Walk the layout backwards by recomputing forward cursor offsets.
    const auto layout = param_layout(arch);
    std::size_t entry_index = 0;
    const auto take_offset = [&](std::size_t n) {
        const std::size_t off = layout[entry_index].offset;
        (void)n;
        ++entry_index;
        return off;
    };

    struct ConvOffsets {
        std::size_t w, b;
    };
    struct TcnOffsets {
        std::size_t w1, b1, w2, b2, wp = 0, bp = 0;
        bool has_proj = false;
    };
    std::vector<ConvOffsets> conv_offsets;
    std::vector<TcnOffsets> tcn_offsets;
    int in_ch = arch.input_channels;
    for (const auto& block : arch.conv_blocks) {
        ConvOffsets off{};
        off.w = take_offset(0);
        off.b = take_offset(0);
        conv_offsets.push_back(off);
        in_ch = block.filters;
    }
    for (std::size_t i = 0; i < arch.tcn.dilations.size(); ++i) {
        TcnOffsets off{};
        off.w1 = take_offset(0);
        off.b1 = take_offset(0);
        off.w2 = take_offset(0);
        off.b2 = take_offset(0);
        if (in_ch != arch.tcn.channels) {
            off.has_proj = true;
            off.wp = take_offset(0);
            off.bp = take_offset(0);
        }
        tcn_offsets.push_back(off);
        in_ch = arch.tcn.channels;
    }
    const std::size_t dense_w_off = take_offset(0);
    const std::size_t dense_b_off = take_offset(0);

    const int feat = in_ch;
    const Matrix& tcn_out =
        cache.tcn.empty() ? cache.conv.back().out : cache.tcn.back().out;
    const int gap_len = static_cast<int>(tcn_out.rows());

    // Dense layer.
    std::vector<double> d_features(static_cast<std::size_t>(feat), 0.0);
    for (int k = 0; k < arch.class_count; ++k) {
        const double g = d_logits[static_cast<std::size_t>(k)];
        grad[dense_b_off + static_cast<std::size_t>(k)] += g;
        const double* w_row = params.data() + dense_w_off + static_cast<std::size_t>(k) * feat;
        double* d_w_row = grad.data() + dense_w_off + static_cast<std::size_t>(k) * feat;
        for (int c = 0; c < feat; ++c) {
            d_w_row[c] += g * cache.pooled_features[static_cast<std::size_t>(c)];
            d_features[static_cast<std::size_t>(c)] += g * w_row[c];
        }
    }

    // Global average pool.
    Matrix d_current(tcn_out.rows(), tcn_out.cols(), 0.0);
    for (int t = 0; t < gap_len; ++t) {
        double* row = d_current.row_ptr(static_cast<std::size_t>(t));
        for (int c = 0; c < feat; ++c) {
            row[c] = d_features[static_cast<std::size_t>(c)] / static_cast<double>(gap_len);
        }
    }

    // TCN blocks in reverse.
    for (std::size_t bi = cache.tcn.size(); bi-- > 0;) {
        const TcnBlockCache& tc = cache.tcn[bi];
        const TcnOffsets& off = tcn_offsets[bi];
        const int dilation = arch.tcn.dilations[bi];
        const int ch = arch.tcn.channels;
        const int k = arch.tcn.kernel_size;
        const Matrix& block_in = bi == 0 ? cache.conv.back().out : cache.tcn[bi - 1].out;
        const int block_in_ch = static_cast<int>(block_in.cols());

        // Final ReLU.
        Matrix d_out_pre = d_current;
        for (std::size_t i = 0; i < d_out_pre.data().size(); ++i) {
            if (tc.out_pre.data()[i] <= 0.0) {
                d_out_pre.data()[i] = 0.0;
            }
        }

        Matrix d_block_in(block_in.rows(), block_in.cols(), 0.0);

        // Residual path.
        if (off.has_proj) {
            for (std::size_t t = 0; t < block_in.rows(); ++t) {
                const double* in_row = block_in.row_ptr(t);
                const double* d_row = d_out_pre.row_ptr(t);
                double* d_in_row = d_block_in.row_ptr(t);
                for (int co = 0; co < ch; ++co) {
                    const double g = d_row[co];
                    if (g == 0.0) {
                        continue;
                    }
                    grad[off.bp + static_cast<std::size_t>(co)] += g;
                    const double* w_row =
                        params.data() + off.wp + static_cast<std::size_t>(co) * block_in_ch;
                    double* d_w_row =
                        grad.data() + off.wp + static_cast<std::size_t>(co) * block_in_ch;
                    for (int ci = 0; ci < block_in_ch; ++ci) {
                        d_w_row[ci] += g * in_row[ci];
                        d_in_row[ci] += g * w_row[ci];
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < d_block_in.data().size(); ++i) {
                d_block_in.data()[i] += d_out_pre.data()[i];
            }
        }

        // conv2 back to h1, through the inner ReLU, then conv1.
        Matrix d_h1(tc.h1.rows(), tc.h1.cols(), 0.0);
        conv1d_causal_backward(tc.h1, params.data() + off.w2, ch, k, dilation, d_out_pre, d_h1,
                               grad.data() + off.w2, grad.data() + off.b2);
        for (std::size_t i = 0; i < d_h1.data().size(); ++i) {
            if (tc.h1_pre.data()[i] <= 0.0) {
                d_h1.data()[i] = 0.0;
            }
        }
        conv1d_causal_backward(block_in, params.data() + off.w1, ch, k, dilation, d_h1,
                               d_block_in, grad.data() + off.w1, grad.data() + off.b1);

        d_current = std::move(d_block_in);
    }

    // Conv blocks in reverse.
    for (std::size_t bi = cache.conv.size(); bi-- > 0;) {
        const ConvBlockCache& bc = cache.conv[bi];
        const ConvOffsets& off = conv_offsets[bi];
        const auto& spec = arch.conv_blocks[bi];
        const Matrix& block_in = bi == 0 ? cache.input : cache.conv[bi - 1].out;

        // Dropout.
        Matrix d_pooled = d_current;
        if (!bc.dropout_scale.empty()) {
            for (std::size_t i = 0; i < d_pooled.data().size(); ++i) {
                d_pooled.data()[i] *= bc.dropout_scale[i];
            }
        }

        // Max pool: route to the selected step.
        Matrix d_post_relu(bc.post_relu.rows(), bc.post_relu.cols(), 0.0);
        const int pooled_len = static_cast<int>(bc.pooled.rows());
        for (int t = 0; t < pooled_len; ++t) {
            const double* d_row = d_pooled.row_ptr(static_cast<std::size_t>(t));
            const std::uint8_t* pick =
                bc.pool_pick.data() + static_cast<std::size_t>(t) * spec.filters;
            for (int c = 0; c < spec.filters; ++c) {
                d_post_relu(static_cast<std::size_t>(2 * t + pick[c]),
                            static_cast<std::size_t>(c)) = d_row[c];
            }
        }

        // ReLU.
        for (std::size_t i = 0; i < d_post_relu.data().size(); ++i) {
            if (bc.pre_relu.data()[i] <= 0.0) {
                d_post_relu.data()[i] = 0.0;
            }
        }

        Matrix d_block_in(block_in.rows(), block_in.cols(), 0.0);
        conv1d_same_backward(block_in, params.data() + off.w, spec.filters, spec.kernel_size,
                             d_post_relu, d_block_in, grad.data() + off.w,
                             grad.data() + off.b);
        d_current = std::move(d_block_in);
    }

    return {loss, std::move(grad)};
}

std::string arch_to_json(const Architecture& arch) {
    nlohmann::json doc;
    doc["input_steps"] = arch.input_steps;
    doc["input_channels"] = arch.input_channels;
    doc["conv_blocks"] = nlohmann::json::array();
    for (const auto& block : arch.conv_blocks) {
        doc["conv_blocks"].push_back({{"filters", block.filters},
                                      {"kernel_size", block.kernel_size},
                                      {"dropout_rate", block.dropout_rate}});
    }
    doc["tcn"] = {{"channels", arch.tcn.channels},
                  {"kernel_size", arch.tcn.kernel_size},
                  {"dilations", arch.tcn.dilations}};
    doc["class_count"] = arch.class_count;
    return doc.dump();
}

Architecture arch_from_json(const std::string& text) {
    Architecture arch;
    try {
        const auto doc = nlohmann::json::parse(text);
        arch.input_steps = doc.at("input_steps").get<int>();
        arch.input_channels = doc.at("input_channels").get<int>();
        arch.conv_blocks.clear();
        for (const auto& block : doc.at("conv_blocks")) {
            arch.conv_blocks.push_back({block.at("filters").get<int>(),
                                        block.at("kernel_size").get<int>(),
                                        block.at("dropout_rate").get<double>()});
        }
        arch.tcn.channels = doc.at("tcn").at("channels").get<int>();
        arch.tcn.kernel_size = doc.at("tcn").at("kernel_size").get<int>();
        arch.tcn.dilations = doc.at("tcn").at("dilations").get<std::vector<int>>();
        arch.class_count = doc.at("class_count").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("architecture descriptor: ") + e.what());
    }
    arch.validate();
    return arch;
}

void save_checkpoint(const ParamVector& params, const Architecture& arch,
                     const std::filesystem::path& path) {
    if (params.size() != param_count(arch)) {
        throw std::invalid_argument("save_checkpoint: parameter count mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_checkpoint: cannot open " + path.string());
    }
    out.write(kCheckpointMagic, 4);
    write_u32le(out, kCheckpointVersion);
    const std::string descriptor = arch_to_json(arch);
    write_u32le(out, static_cast<std::uint32_t>(descriptor.size()));
    out.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
    write_u64le(out, params.size());
    for (double v : params) {
        write_f64le(out, v);
    }
    if (!out) {
        throw FormatError("save_checkpoint: write failed for " + path.string());
    }
}

std::pair<Architecture, ParamVector> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("load_checkpoint: cannot open " + path.string());
    }
    const std::string ctx = "load_checkpoint " + path.string();
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError(ctx + ": bad magic");
    }
    const std::uint32_t version = read_u32le(in, ctx);
    if (version != kCheckpointVersion) {
        throw FormatError(ctx + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t json_len = read_u32le(in, ctx);
    std::string descriptor(json_len, '\0');
    if (!in.read(descriptor.data(), json_len)) {
        throw FormatError(ctx + ": truncated descriptor");
    }
    const Architecture arch = arch_from_json(descriptor);
    const std::uint64_t count = read_u64le(in, ctx);
    if (count != param_count(arch)) {
        throw FormatError(ctx + ": parameter count does not match architecture");
    }
    ParamVector params(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        params[i] = read_f64le(in, ctx);
    }
    return {arch, std::move(params)};
}

} // namespace uqpen
