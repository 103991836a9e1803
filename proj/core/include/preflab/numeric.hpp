// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

namespace preflab::num {

// Logistic function, evaluated without overflow on either tail.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(sigmoid(x)) = min(x, 0) - log1p(exp(-|x|)).
inline double log_sigmoid(double x) {
    return std::fmin(x, 0.0) - std::log1p(std::exp(-std::fabs(x)));
}

// log(1 + exp(x)) without overflow; equals -log_sigmoid(-x).
inline double softplus(double x) {
    return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// log(1 - exp(x)) for x < 0. Sequence-level probabilities are astronomically
// small, so below exp(-37) the result is 0 at double precision and is pinned
// there exactly.
inline double log1m_exp(double x) {
    if (x < -37.0) {
        return 0.0;
    }
    return std::log1p(-std::exp(x));
}

// d/dx log(1 - exp(x)) = -exp(x) / (1 - exp(x)) = -1 / expm1(-x), for x < 0.
inline double log1m_exp_grad(double x) {
    return -1.0 / std::expm1(-x);
}

}  // namespace preflab::num
