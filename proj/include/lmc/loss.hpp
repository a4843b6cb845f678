#pragma once

#include <cmath>

namespace lmc {

/// Branch-stable logistic sigmoid.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

/// Binary cross-entropy on a logit, log-sum-exp form:
/// max(z,0) - z*y + log(1 + exp(-|z|)).
inline double loss_bce(double logit, double label) {
    return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

/// d loss_bce / d logit.
inline double bce_grad(double logit, double label) {
    return sigmoid(logit) - label;
}

/// d^2 loss_bce / d logit^2 = sigma(z)(1 - sigma(z)).
inline double bce_curvature(double logit) {
    double s = sigmoid(logit);
    return s * (1.0 - s);
}

}  // namespace lmc
