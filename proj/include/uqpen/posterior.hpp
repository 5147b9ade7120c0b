#pragma once

#include "uqpen/model.hpp"
#include "uqpen/prob.hpp"
#include "uqpen/rng.hpp"
#include "uqpen/tensor.hpp"
#include "uqpen/training.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace uqpen {

/**
 * Gaussian weight posterior from SWA statistics: mean, clamped diagonal
 * variance, and a low-rank deviation matrix (stored as K_dev columns of
 * length P). `scale` is the sampling scale gamma.
 */
struct SwagPosterior {
    ParamVector mean;
    ParamVector diag_var;
    std::vector<ParamVector> deviation;
    double scale = 1.0;
};

// mean = first moment, diag_var = max(second moment - mean^2, 0), deviation
// columns copied in snapshot order. Throws InvalidStateError below rank 2.
SwagPosterior build_posterior(const SwagStats& stats, double scale = 1.0);

/**
 * Draw theta = mean + gamma * ( sqrt(diag_var/2) ⊙ z1
 *                             + deviation · z2 / sqrt(2 (K_dev - 1)) ),
 * consuming P normals for z1 and then K_dev normals for z2. gamma = 0
 * returns the mean bitwise without consuming the stream.
 */
ParamVector sample_weights(const SwagPosterior& posterior, RngStream& rng);

// S rows of per-draw class probabilities for one input; every row is a
// valid ProbVector.
struct SoftmaxDraws {
    Matrix draws; // S x K

    std::size_t draw_count() const { return draws.rows(); }
    std::size_t class_count() const { return draws.cols(); }
    ProbVector row(std::size_t s) const;

    static SoftmaxDraws from_rows(const std::vector<std::vector<double>>& rows);
};

SoftmaxDraws predictive_draws_swag(const Architecture& arch, const SwagPosterior& posterior,
                                   const Matrix& x, int s_draws, RngStream& rng);

SoftmaxDraws predictive_draws_ensemble(const Architecture& arch,
                                       const std::vector<ParamVector>& members, const Matrix& x);

// Posterior container: magic "UQSP", version u32 LE, u32 LE JSON length,
// architecture JSON, f64 scale, then three length-prefixed f64 sections
// (mean, diag_var, deviation columns flattened column-major as K_dev
// consecutive P-vectors, prefixed by u64 K_dev).
void save_posterior(const SwagPosterior& posterior, const Architecture& arch,
                    const std::filesystem::path& path);
std::pair<Architecture, SwagPosterior> load_posterior(const std::filesystem::path& path);

} // namespace uqpen
