#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uqpen/errors.hpp"
#include "uqpen/model.hpp"
#include "uqpen/prob.hpp"
#include "uqpen/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace uqpen;

namespace {

Architecture tiny_arch() {
    Architecture arch;
    arch.input_steps = 8;
    arch.input_channels = 2;
    arch.conv_blocks = {{3, 3, 0.2}};
    arch.tcn = {4, 2, {1, 2}};
    arch.class_count = 3;
    return arch;
}

Matrix random_input(const Architecture& arch, std::uint64_t seed) {
    Matrix x(static_cast<std::size_t>(arch.input_steps),
             static_cast<std::size_t>(arch.input_channels));
    RngStream rng(seed);
    for (auto& v : x.data()) {
        v = rng.next_normal();
    }
    return x;
}

double loss_of_logits(const std::vector<double>& logits, int target) {
    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - max_logit);
    return max_logit + std::log(sum) - logits[static_cast<std::size_t>(target)];
}

} // namespace

TEST_CASE("init_params is deterministic per seed and differs across seeds") {
    const auto arch = tiny_arch();
    RngStream r1(5), r2(5), r3(6);
    const auto a = init_params(arch, r1);
    const auto b = init_params(arch, r2);
    const auto c = init_params(arch, r3);
    CHECK(a == b);
    CHECK(a != c);
    // Biases start at zero.
    for (const auto& entry : param_layout(arch)) {
        if (entry.name.ends_with(".bias")) {
            for (std::size_t i = 0; i < entry.count; ++i) {
                CHECK(a[entry.offset + i] == 0.0);
            }
        }
    }
}

TEST_CASE("desk-scale parameter count matches the analytic layout sum") {
    const auto arch = Architecture::desk_scale(10);
    // conv0: 64*4*13+64, conv1: 64*4*64+64,
    // tcn0: 48*4*64+48 + 48*4*48+48 + proj 48*64+48,
    // tcn1: 48*4*48+48 + 48*4*48+48, dense: 10*48+10.
    const std::size_t expected = (64 * 4 * 13 + 64) + (64 * 4 * 64 + 64) +
                                 (48 * 4 * 64 + 48) + (48 * 4 * 48 + 48) + (48 * 64 + 48) +
                                 2 * (48 * 4 * 48 + 48) + (10 * 48 + 10);
    CHECK(param_count(arch) == expected);
    const auto layout = param_layout(arch);
    std::size_t total = 0;
    for (const auto& entry : layout) {
        CHECK(entry.offset == total);
        total += entry.count;
    }
    CHECK(total == expected);
}

TEST_CASE("paper-scale preset matches its analytic layout sum") {
    const auto arch = Architecture::paper_scale(26);
    const std::size_t expected = (200 * 4 * 13 + 200) + (200 * 4 * 200 + 200) +
                                 (120 * 4 * 200 + 120) + (120 * 4 * 120 + 120) +
                                 (120 * 200 + 120) + 2 * (120 * 4 * 120 + 120) +
                                 (26 * 120 + 26);
    CHECK(param_count(arch) == expected);
    // One forward pass at full width stays finite and correctly shaped.
    ParamVector zeros(param_count(arch), 0.0);
    Matrix x(64, 13, 0.25);
    const auto out = forward(arch, zeros, x, RunMode::Eval);
    CHECK(out.logits.size() == 26);
}

TEST_CASE("all-zero parameters give equal logits") {
    const auto arch = tiny_arch();
    ParamVector zeros(param_count(arch), 0.0);
    const auto out = forward(arch, zeros, random_input(arch, 3), RunMode::Eval);
    for (double v : out.logits) {
        CHECK(v == 0.0);
    }
    const auto p = softmax(out.logits);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("eval forward is deterministic") {
    const auto arch = tiny_arch();
    RngStream rng(1);
    const auto params = init_params(arch, rng);
    const auto x = random_input(arch, 9);
    const auto a = forward(arch, params, x, RunMode::Eval);
    const auto b = forward(arch, params, x, RunMode::Eval);
    CHECK(a.logits == b.logits);
}

TEST_CASE("tcn activations are causal") {
    // Pointwise conv front end (kernel 1) keeps perturbations localized:
    // changing input rows >= r only reaches TCN inputs at times >= r/2.
    Architecture arch;
    arch.input_steps = 32;
    arch.input_channels = 2;
    arch.conv_blocks = {{3, 1, 0.0}};
    arch.tcn = {4, 3, {1, 2}};
    arch.class_count = 2;
    RngStream rng(12);
    const auto params = init_params(arch, rng);

    auto x1 = random_input(arch, 40);
    auto x2 = x1;
    const std::size_t r = 24;
    for (std::size_t t = r; t < 32; ++t) {
        for (std::size_t c = 0; c < 2; ++c) {
            x2(t, c) += 1.0 + static_cast<double>(t + c);
        }
    }
    const auto out1 = forward(arch, params, x1, RunMode::Eval);
    const auto out2 = forward(arch, params, x2, RunMode::Eval);
    const std::size_t safe = r / 2; // TCN input time steps below this agree
    for (std::size_t bi = 0; bi < out1.cache.tcn.size(); ++bi) {
        const auto& a = out1.cache.tcn[bi].out;
        const auto& b = out2.cache.tcn[bi].out;
        bool any_late_diff = false;
        for (std::size_t t = 0; t < a.rows(); ++t) {
            for (std::size_t c = 0; c < a.cols(); ++c) {
                if (t < safe) {
                    CHECK(a(t, c) == b(t, c));
                } else if (a(t, c) != b(t, c)) {
                    any_late_diff = true;
                }
            }
        }
        CHECK(any_late_diff);
    }
}

TEST_CASE("layer output lengths follow the documented formulas") {
    Architecture arch;
    arch.input_steps = 10; // odd pooled length on the way down
    arch.input_channels = 2;
    arch.conv_blocks = {{3, 3, 0.0}};
    arch.tcn = {4, 2, {1}};
    arch.class_count = 2;
    ParamVector zeros(param_count(arch), 0.0);
    Matrix x(10, 2, 0.5);
    const auto out = forward(arch, zeros, x, RunMode::Eval);
    CHECK(out.cache.conv[0].pre_relu.rows() == 10); // same padding
    CHECK(out.cache.conv[0].pooled.rows() == 5);    // floor(T/2)
    CHECK(out.cache.tcn[0].out.rows() == 5);        // causal convs preserve T
}

TEST_CASE("uniform logits give loss ln K") {
    const auto arch = tiny_arch();
    ParamVector zeros(param_count(arch), 0.0);
    const auto out = forward(arch, zeros, random_input(arch, 3), RunMode::Eval);
    const auto [loss, grad] = backward(arch, zeros, out, 1);
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(grad.size() == zeros.size());
}

TEST_CASE("analytic gradient matches central finite differences (eval mode)") {
    const auto arch = tiny_arch();
    RngStream rng(7);
    auto params = init_params(arch, rng);
    const auto x = random_input(arch, 11);
    const int target = 2;

    const auto out = forward(arch, params, x, RunMode::Eval);
    const auto [loss, grad] = backward(arch, params, out, target);
    CHECK(std::isfinite(loss));

    const double eps = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double lp = loss_of_logits(forward(arch, params, x, RunMode::Eval).logits, target);
        params[i] = saved - eps;
        const double lm = loss_of_logits(forward(arch, params, x, RunMode::Eval).logits, target);
        params[i] = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel = std::abs(grad[i] - fd) / std::max(std::abs(grad[i]) + std::abs(fd), 1e-3);
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("gradient check holds across stacked conv blocks") {
    Architecture arch;
    arch.input_steps = 12;
    arch.input_channels = 2;
    arch.conv_blocks = {{3, 4, 0.0}, {3, 4, 0.0}}; // exercises the block-to-block handoff
    arch.tcn = {3, 2, {1}};
    arch.class_count = 2;
    RngStream rng(61);
    auto params = init_params(arch, rng);
    const auto x = random_input(arch, 62);
    const int target = 1;

    const auto out = forward(arch, params, x, RunMode::Eval);
    const auto [loss, grad] = backward(arch, params, out, target);
    CHECK(std::isfinite(loss));

    const double eps = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double lp = loss_of_logits(forward(arch, params, x, RunMode::Eval).logits, target);
        params[i] = saved - eps;
        const double lm = loss_of_logits(forward(arch, params, x, RunMode::Eval).logits, target);
        params[i] = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel = std::abs(grad[i] - fd) / std::max(std::abs(grad[i]) + std::abs(fd), 1e-3);
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("analytic gradient matches finite differences through dropout") {
    const auto arch = tiny_arch();
    RngStream rng(19);
    auto params = init_params(arch, rng);
    const auto x = random_input(arch, 23);
    const int target = 0;
    const std::uint64_t mask_seed = 77; // same masks for every evaluation

    RngStream fwd_rng(mask_seed);
    const auto out = forward(arch, params, x, RunMode::Train, &fwd_rng);
    const auto [loss, grad] = backward(arch, params, out, target);
    CHECK(std::isfinite(loss));

    const double eps = 1e-5;
    for (std::size_t i = 0; i < params.size(); i += 7) { // sampled coordinates
        const double saved = params[i];
        params[i] = saved + eps;
        RngStream rp(mask_seed);
        const double lp =
            loss_of_logits(forward(arch, params, x, RunMode::Train, &rp).logits, target);
        params[i] = saved - eps;
        RngStream rm(mask_seed);
        const double lm =
            loss_of_logits(forward(arch, params, x, RunMode::Train, &rm).logits, target);
        params[i] = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel = std::abs(grad[i] - fd) / std::max(std::abs(grad[i]) + std::abs(fd), 1e-3);
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("a squashed filter has exactly zero gradients") {
    const auto arch = tiny_arch();
    RngStream rng(31);
    auto params = init_params(arch, rng);
    const auto layout = param_layout(arch);
    // Drive conv filter 0 permanently negative: its ReLU output is zero for
    // any input, so the bias and every downstream weight reading channel 0
    // are dead paths.
    std::size_t conv_b_off = 0;
    std::size_t tcn_w1_off = 0;
    std::vector<int> tcn_w1_shape;
    for (const auto& entry : layout) {
        if (entry.name == "conv0.bias") conv_b_off = entry.offset;
        if (entry.name == "tcn0.conv1.weight") {
            tcn_w1_off = entry.offset;
            tcn_w1_shape = entry.shape;
        }
    }
    params[conv_b_off + 0] = -1000.0;

    const auto x = random_input(arch, 5);
    const auto out = forward(arch, params, x, RunMode::Eval);
    const auto [loss, grad] = backward(arch, params, out, 1);
    CHECK(std::isfinite(loss));
    CHECK(grad[conv_b_off + 0] == 0.0);
    // tcn0.conv1.weight shape (out, kernel, in): entries with in-channel 0.
    const int w_out = tcn_w1_shape[0], w_k = tcn_w1_shape[1], w_in = tcn_w1_shape[2];
    for (int co = 0; co < w_out; ++co) {
        for (int j = 0; j < w_k; ++j) {
            const std::size_t idx =
                tcn_w1_off + (static_cast<std::size_t>(co) * w_k + j) * w_in + 0;
            CHECK(grad[idx] == 0.0);
        }
    }
}

TEST_CASE("backward rejects out-of-range targets") {
    const auto arch = tiny_arch();
    ParamVector zeros(param_count(arch), 0.0);
    const auto out = forward(arch, zeros, random_input(arch, 3), RunMode::Eval);
    CHECK_THROWS_AS(backward(arch, zeros, out, 3), std::invalid_argument);
}

TEST_CASE("forward rejects shape mismatches") {
    const auto arch = tiny_arch();
    ParamVector zeros(param_count(arch), 0.0);
    Matrix bad(4, 2);
    CHECK_THROWS_AS(forward(arch, zeros, bad, RunMode::Eval), std::invalid_argument);
}

TEST_CASE("checkpoints round trip bit-exactly and reject corruption") {
    const auto arch = tiny_arch();
    RngStream rng(41);
    const auto params = init_params(arch, rng);
    const auto path = std::filesystem::temp_directory_path() / "uqpen_ckpt.uqhw";
    save_checkpoint(params, arch, path);

    const auto [arch2, params2] = load_checkpoint(path);
    CHECK(params2 == params);
    CHECK(arch2.class_count == arch.class_count);
    CHECK(arch2.conv_blocks.size() == arch.conv_blocks.size());
    CHECK(arch2.tcn.dilations == arch.tcn.dilations);

    SUBCASE("corrupt magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    SUBCASE("truncated file") {
        const auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size - 9);
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    SUBCASE("parameter count mismatch with the encoded architecture") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        // Count field sits after magic, version, and the JSON descriptor.
        f.seekg(8);
        unsigned char lenb[4];
        f.read(reinterpret_cast<char*>(lenb), 4);
        const std::uint32_t json_len = static_cast<std::uint32_t>(lenb[0]) |
                                       (static_cast<std::uint32_t>(lenb[1]) << 8) |
                                       (static_cast<std::uint32_t>(lenb[2]) << 16) |
                                       (static_cast<std::uint32_t>(lenb[3]) << 24);
        f.seekp(12 + json_len);
        f.put(static_cast<char>(0x01));
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    std::filesystem::remove(path);
}
