#include "uqpen/resample.hpp"

#include <cmath>
#include <stdexcept>

namespace uqpen {

Matrix resample_linear(const Matrix& series, std::size_t target_steps) {
    if (target_steps == 0) {
        throw std::invalid_argument("resample_linear: target_steps must be positive");
    }
    if (series.rows() == 0 || series.cols() == 0) {
        throw std::invalid_argument("resample_linear: empty input series");
    }
    const std::size_t t_in = series.rows();
    const std::size_t channels = series.cols();
    Matrix out(target_steps, channels);

    if (t_in == 1) {
        for (std::size_t i = 0; i < target_steps; ++i) {
            for (std::size_t c = 0; c < channels; ++c) {
                out(i, c) = series(0, c);
            }
        }
        return out;
    }

    for (std::size_t i = 0; i < target_steps; ++i) {
        const double pos = target_steps == 1
                               ? 0.0
                               : static_cast<double>(i) * static_cast<double>(t_in - 1) /
                                     static_cast<double>(target_steps - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= t_in - 1) {
            lo = t_in - 2;
        }
        const double frac = pos - static_cast<double>(lo);
        for (std::size_t c = 0; c < channels; ++c) {
            if (frac == 0.0) {
                out(i, c) = series(lo, c);
            } else {
                out(i, c) = series(lo, c) + frac * (series(lo + 1, c) - series(lo, c));
            }
        }
    }
    if (target_steps >= 2) {
        // Pin the last row to the exact input endpoint.
        for (std::size_t c = 0; c < channels; ++c) {
            out(target_steps - 1, c) = series(t_in - 1, c);
        }
    }
    return out;
}

} // namespace uqpen
