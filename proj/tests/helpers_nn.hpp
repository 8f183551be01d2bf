#pragma once

// Finite-difference gradient checking against tape backward.

#include <functional>
#include <vector>

#include "mcad/nn/ops.hpp"

namespace mcad::testing {

using mcad::nn::Parameter;
using mcad::nn::Tape;

struct GradCheckResult {
    double max_rel_err = 0;
    int checked = 0;
};

/// make_loss builds the graph on a fresh tape and returns the scalar node id.
/// Every parameter entry (strided for tensors above `dense_limit`) is checked
/// with central differences at step h, in float64.
inline GradCheckResult gradcheck(std::vector<Parameter<double>*> params,
                                 const std::function<int(Tape<double>&)>& make_loss,
                                 double h = 1e-4, int dense_limit = 4096, int stride_cap = 7) {
    for (auto* p : params) p->zero_grad();
    Tape<double> tape;
    int loss_node = make_loss(tape);
    tape.backward(loss_node);
    std::vector<std::vector<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad.v);

    auto eval = [&]() {
        Tape<double> t;
        int l = make_loss(t);
        return t.val(l)[0];
    };

    GradCheckResult res;
    for (size_t k = 0; k < params.size(); ++k) {
        Parameter<double>& p = *params[k];
        int64_t n = p.value.size();
        int64_t stride = n > dense_limit ? stride_cap : 1;
        for (int64_t i = 0; i < n; i += stride) {
            double keep = p.value[i];
            p.value[i] = keep + h;
            double lp = eval();
            p.value[i] = keep - h;
            double lm = eval();
            p.value[i] = keep;
            double num = (lp - lm) / (2 * h);
            double ana = analytic[k][size_t(i)];
            double denom = std::max({1e-6, std::abs(num), std::abs(ana)});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(num - ana) / denom);
            ++res.checked;
        }
    }
    return res;
}

inline void fill_random(Parameter<double>& p, mcad::Rng& rng, double scale = 0.5) {
    for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(-scale, scale);
}

template <typename T>
mcad::nn::Tensor<T> random_tensor(mcad::nn::Shape s, mcad::Rng& rng, double scale = 1.0) {
    mcad::nn::Tensor<T> t(s);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(-scale, scale));
    return t;
}

}  // namespace mcad::testing
