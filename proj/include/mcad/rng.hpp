#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace mcad {

// Seeded RNG with hand-rolled transforms. std::mt19937_64 output is pinned by
// the standard, but the std distributions are not; every draw here goes through
// explicit arithmetic so equal seeds give equal streams on any platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) { return int(eng_() % uint64_t(n)); }

    /// Standard normal via Box-Muller (pair cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Index drawn from unnormalized weights.
    int weighted(const std::vector<double>& w) {
        double total = 0;
        for (double x : w) total += x;
        double r = uniform() * total;
        for (size_t i = 0; i < w.size(); ++i) {
            r -= w[i];
            if (r < 0) return int(i);
        }
        return int(w.size()) - 1;
    }

    /// Fisher-Yates shuffle of [0, n).
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(i + 1)]);
        return p;
    }

    /// k distinct indices from [0, n), in selection order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = 0; i < k; ++i) std::swap(p[i], p[i + uniform_int(n - i)]);
        p.resize(k);
        return p;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mcad
