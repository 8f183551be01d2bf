#pragma once

#include <cmath>

#include "mcad/nn/tape.hpp"
#include "mcad/rng.hpp"

namespace mcad::nn {

template <typename T>
void init_uniform(Parameter<T>& p, Rng& rng, double bound) {
    for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = T(rng.uniform(-bound, bound));
}

/// Kaiming-style uniform for a weight whose last dim is fan-in.
template <typename T>
void init_linear(Parameter<T>& p, Rng& rng) {
    int fan_in = p.value.shape[p.value.shape.rank() - 1];
    init_uniform(p, rng, 1.0 / std::sqrt(double(fan_in)));
}

/// Conv weight (K, Cin, Cout): fan-in = K * Cin.
template <typename T>
void init_conv(Parameter<T>& p, Rng& rng) {
    double fan_in = double(p.value.shape[0]) * p.value.shape[1];
    init_uniform(p, rng, 1.0 / std::sqrt(fan_in));
}

/// Depthwise conv weight (C, K): fan-in = K.
template <typename T>
void init_conv_dw(Parameter<T>& p, Rng& rng) {
    init_uniform(p, rng, 1.0 / std::sqrt(double(p.value.shape[1])));
}

template <typename T>
void init_zero(Parameter<T>& p) {
    p.value.zero();
}

template <typename T>
void init_const(Parameter<T>& p, T v) {
    for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = v;
}

/// S4D-style A initialization: A[d][n] = -(n+1), stored as log(n+1).
template <typename T>
void init_log_a(Parameter<T>& p) {
    int n = p.value.shape[1];
    for (int64_t i = 0; i < p.value.size(); ++i)
        p.value[i] = T(std::log(double(i % n) + 1.0));
}

/// Timescale bias so softplus(b_dt) lands log-uniformly in [dt_min, dt_max].
template <typename T>
void init_dt_bias(Parameter<T>& p, Rng& rng, double dt_min = 1e-3, double dt_max = 1e-1) {
    for (int64_t i = 0; i < p.value.size(); ++i) {
        double dt = std::exp(rng.uniform(std::log(dt_min), std::log(dt_max)));
        // inverse softplus
        p.value[i] = T(dt > 20 ? dt : std::log(std::expm1(dt)));
    }
}

}  // namespace mcad::nn
