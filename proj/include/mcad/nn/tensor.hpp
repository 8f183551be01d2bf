#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mcad/errors.hpp"

namespace mcad::nn {

/// Dense shape, rank <= 4.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        for (int d : dims) dims_[size_t(rank_++)] = d;
    }

    int rank() const { return rank_; }
    int operator[](int i) const { return dims_[size_t(i)]; }
    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank_; ++i) n *= dims_[size_t(i)];
        return rank_ == 0 ? 0 : n;
    }
    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (dims_[size_t(i)] != o.dims_[size_t(i)]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "(";
        for (int i = 0; i < rank_; ++i) s += (i ? "," : "") + std::to_string(dims_[size_t(i)]);
        return s + ")";
    }

private:
    std::array<int, 4> dims_{1, 1, 1, 1};
    int rank_ = 0;
};

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), v(size_t(s.numel()), T(0)) {}
    Tensor(Shape s, T fill) : shape(s), v(size_t(s.numel()), fill) {}

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    int64_t size() const { return int64_t(v.size()); }
    bool empty() const { return v.empty(); }

    T& operator[](int64_t i) { return v[size_t(i)]; }
    const T& operator[](int64_t i) const { return v[size_t(i)]; }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
        return out;
    }
};

inline void check_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeMismatch(what);
}

}  // namespace mcad::nn
