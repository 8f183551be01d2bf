#pragma once

#include <cmath>
#include <vector>

#include "mcad/nn/tape.hpp"

namespace mcad::nn {

/// Global-norm gradient clipping; returns the pre-clip norm.
template <typename T>
double clip_global_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
    double total = 0;
    for (auto* p : params)
        for (int64_t i = 0; i < p->grad.size(); ++i) total += double(p->grad[i]) * p->grad[i];
    double norm = std::sqrt(total);
    if (norm > max_norm && norm > 0) {
        T s = T(max_norm / norm);
        for (auto* p : params)
            for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
    return norm;
}

inline double warmup_lr(double base, int step, int warmup_steps) {
    if (warmup_steps <= 0 || step >= warmup_steps) return base;
    return base * double(step + 1) / double(warmup_steps);
}

template <typename T>
class Adam {
public:
    Adam(std::vector<Parameter<T>*> params, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t k = 0; k < params_.size(); ++k) {
            Parameter<T>& p = *params_[k];
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            for (int64_t i = 0; i < p.value.size(); ++i) {
                double g = double(p.grad[i]);
                double mi = beta1_ * double(m[i]) + (1 - beta1_) * g;
                double vi = beta2_ * double(v[i]) + (1 - beta2_) * g * g;
                m[i] = T(mi);
                v[i] = T(vi);
                p.value[i] -= T(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    const std::vector<Parameter<T>*>& params() const { return params_; }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
};

}  // namespace mcad::nn
