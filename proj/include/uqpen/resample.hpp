#pragma once

#include "uqpen/tensor.hpp"

#include <cstddef>

namespace uqpen {

/**
 * Channel-wise linear interpolation of a T_in x L series onto target_steps
 * rows, sampling at t_i = i*(T_in-1)/(target_steps-1). Endpoints are
 * preserved exactly; a single input row is repeated; target_steps = 1 takes
 * the first row. target_steps = 0 throws std::invalid_argument.
 */
Matrix resample_linear(const Matrix& series, std::size_t target_steps);

} // namespace uqpen
