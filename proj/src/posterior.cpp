#include "uqpen/posterior.hpp"

#include "uqpen/errors.hpp"
#include "uqpen/ioutil.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uqpen {

namespace {
constexpr char kPosteriorMagic[4] = {'U', 'Q', 'S', 'P'};
constexpr std::uint32_t kPosteriorVersion = 1;
} // namespace

SwagPosterior build_posterior(const SwagStats& stats, double scale) {
    if (stats.n_snapshots < 2 || stats.deviation_columns.size() < 2) {
        throw InvalidStateError("build_posterior: need at least 2 snapshots");
    }
    SwagPosterior posterior;
    posterior.mean = stats.first_moment;
    posterior.diag_var.resize(stats.first_moment.size());
    for (std::size_t i = 0; i < posterior.mean.size(); ++i) {
        const double raw = stats.second_moment[i] - posterior.mean[i] * posterior.mean[i];
        posterior.diag_var[i] = raw > 0.0 ? raw : 0.0;
    }
    posterior.deviation.assign(stats.deviation_columns.begin(), stats.deviation_columns.end());
    posterior.scale = scale;
    return posterior;
}

ParamVector sample_weights(const SwagPosterior& posterior, RngStream& rng) {
    const std::size_t p = posterior.mean.size();
    if (p == 0 || posterior.diag_var.size() != p || posterior.deviation.size() < 2) {
        throw std::invalid_argument("sample_weights: malformed posterior");
    }
    if (posterior.scale == 0.0) {
        return posterior.mean;
    }
    const std::size_t rank = posterior.deviation.size();
    std::vector<double> z1(p);
    for (double& z : z1) {
        z = rng.next_normal();
    }
    std::vector<double> z2(rank);
    for (double& z : z2) {
        z = rng.next_normal();
    }

    const double diag_scale = 1.0 / std::sqrt(2.0);
    const double dev_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(rank - 1));
    ParamVector sample(p);
    for (std::size_t i = 0; i < p; ++i) {
        sample[i] = diag_scale * std::sqrt(posterior.diag_var[i]) * z1[i];
    }
    for (std::size_t j = 0; j < rank; ++j) {
        const double zj = dev_scale * z2[j];
        const ParamVector& column = posterior.deviation[j];
        for (std::size_t i = 0; i < p; ++i) {
            sample[i] += zj * column[i];
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        sample[i] = posterior.mean[i] + posterior.scale * sample[i];
    }
    return sample;
}

ProbVector SoftmaxDraws::row(std::size_t s) const {
    std::vector<double> values(draws.cols());
    for (std::size_t k = 0; k < draws.cols(); ++k) {
        values[k] = draws(s, k);
    }
    return ProbVector(std::move(values));
}

SoftmaxDraws SoftmaxDraws::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("SoftmaxDraws: need at least one draw");
    }
    SoftmaxDraws draws;
    draws.draws = Matrix(rows.size(), rows[0].size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        if (rows[s].size() != rows[0].size()) {
            throw std::invalid_argument("SoftmaxDraws: ragged rows");
        }
        (void)ProbVector(rows[s]); // validates
        for (std::size_t k = 0; k < rows[s].size(); ++k) {
            draws.draws(s, k) = rows[s][k];
        }
    }
    return draws;
}

SoftmaxDraws predictive_draws_swag(const Architecture& arch, const SwagPosterior& posterior,
                                   const Matrix& x, int s_draws, RngStream& rng) {
    if (s_draws < 1) {
        throw std::invalid_argument("predictive_draws_swag: need at least one draw");
    }
    SoftmaxDraws result;
    result.draws = Matrix(static_cast<std::size_t>(s_draws),
                          static_cast<std::size_t>(arch.class_count));
    for (int s = 0; s < s_draws; ++s) {
        const ParamVector weights = sample_weights(posterior, rng);
        const auto output = forward(arch, weights, x, RunMode::Eval);
        const ProbVector probs = softmax(output.logits);
        for (int k = 0; k < arch.class_count; ++k) {
            result.draws(static_cast<std::size_t>(s), static_cast<std::size_t>(k)) =
                probs[static_cast<std::size_t>(k)];
        }
    }
    return result;
}

SoftmaxDraws predictive_draws_ensemble(const Architecture& arch,
                                       const std::vector<ParamVector>& members,
                                       const Matrix& x) {
    if (members.empty()) {
        throw std::invalid_argument("predictive_draws_ensemble: need at least one member");
    }
    const std::size_t p = param_count(arch);
    for (const auto& member : members) {
        if (member.size() != p) {
            throw std::invalid_argument(
                "predictive_draws_ensemble: member size does not match architecture");
        }
    }
    SoftmaxDraws result;
    result.draws = Matrix(members.size(), static_cast<std::size_t>(arch.class_count));
    for (std::size_t m = 0; m < members.size(); ++m) {
        const auto output = forward(arch, members[m], x, RunMode::Eval);
        const ProbVector probs = softmax(output.logits);
        for (int k = 0; k < arch.class_count; ++k) {
            result.draws(m, static_cast<std::size_t>(k)) = probs[static_cast<std::size_t>(k)];
        }
    }
    return result;
}

void save_posterior(const SwagPosterior& posterior, const Architecture& arch,
                    const std::filesystem::path& path) {
    if (posterior.mean.size() != param_count(arch)) {
        throw std::invalid_argument("save_posterior: parameter count mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("save_posterior: cannot open " + path.string());
    }
    out.write(kPosteriorMagic, 4);
    write_u32le(out, kPosteriorVersion);
    const std::string descriptor = arch_to_json(arch);
    write_u32le(out, static_cast<std::uint32_t>(descriptor.size()));
    out.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
    write_f64le(out, posterior.scale);

    const auto write_section = [&out](const ParamVector& values) {
        write_u64le(out, values.size());
        for (double v : values) {
            write_f64le(out, v);
        }
    };
    write_section(posterior.mean);
    write_section(posterior.diag_var);
    write_u64le(out, posterior.deviation.size());
    for (const auto& column : posterior.deviation) {
        write_section(column);
    }
    if (!out) {
        throw FormatError("save_posterior: write failed for " + path.string());
    }
}

std::pair<Architecture, SwagPosterior> load_posterior(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("load_posterior: cannot open " + path.string());
    }
    const std::string ctx = "load_posterior " + path.string();
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kPosteriorMagic, 4) != 0) {
        throw FormatError(ctx + ": bad magic");
    }
    const std::uint32_t version = read_u32le(in, ctx);
    if (version != kPosteriorVersion) {
        throw FormatError(ctx + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t json_len = read_u32le(in, ctx);
    std::string descriptor(json_len, '\0');
    if (!in.read(descriptor.data(), json_len)) {
        throw FormatError(ctx + ": truncated descriptor");
    }
    const Architecture arch = arch_from_json(descriptor);
    const std::size_t p = param_count(arch);

    SwagPosterior posterior;
    posterior.scale = read_f64le(in, ctx);

    const auto read_section = [&](std::size_t expected) {
        const std::uint64_t count = read_u64le(in, ctx);
        if (count != expected) {
            throw FormatError(ctx + ": section length does not match architecture");
        }
        ParamVector values(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            values[i] = read_f64le(in, ctx);
        }
        return values;
    };
    posterior.mean = read_section(p);
    posterior.diag_var = read_section(p);
    const std::uint64_t rank = read_u64le(in, ctx);
    if (rank < 2) {
        throw FormatError(ctx + ": deviation rank below 2");
    }
    posterior.deviation.reserve(rank);
    for (std::uint64_t j = 0; j < rank; ++j) {
        posterior.deviation.push_back(read_section(p));
    }
    return {arch, std::move(posterior)};
}

} // namespace uqpen
