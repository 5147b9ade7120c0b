#include "uqpen/prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uqpen {

namespace {
const double kLn2 = std::log(2.0);
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
        throw std::invalid_argument("ProbVector: needs at least 2 classes");
    }
    double sum = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("ProbVector: entry outside [0, 1]");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("ProbVector: entries do not sum to 1");
    }
}

ProbVector softmax(const std::vector<double>& logits) {
    if (logits.size() < 2) {
        throw std::invalid_argument("softmax: needs at least 2 logits");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("softmax: non-finite logit");
        }
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_logit);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return ProbVector(std::move(out));
}

double entropy_bits(const ProbVector& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * (std::log(v) / kLn2);
        }
    }
    return h;
}

std::size_t argmax(const std::vector<double>& values) {
    return static_cast<std::size_t>(
        std::max_element(values.begin(), values.end()) - values.begin());
}

} // namespace uqpen
