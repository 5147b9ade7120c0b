#pragma once

#include <cstddef>
#include <vector>

namespace uqpen {

/**
 * Discrete probability distribution over K >= 2 classes.
 * Construction validates: entries in [0, 1], sum within 1e-9 of 1.
 */
class ProbVector {
public:
    explicit ProbVector(std::vector<double> values);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }

    std::vector<double>::const_iterator begin() const { return values_.begin(); }
    std::vector<double>::const_iterator end() const { return values_.end(); }

private:
    std::vector<double> values_;
};

// Numerically stable (max-subtracted) softmax. Throws std::invalid_argument
// on non-finite logits or K < 2.
ProbVector softmax(const std::vector<double>& logits);

// Shannon entropy in bits, convention 0*log2(0) = 0. log2 is computed as
// ln/ln 2 so results match across platforms using the same libm inputs.
double entropy_bits(const ProbVector& p);

// Index of the largest entry; ties broken by lowest index.
std::size_t argmax(const std::vector<double>& values);

} // namespace uqpen
