#pragma once

// Differentiable op library over Tape<T>. Each op appends one node; backward
// closures accumulate directly into parent gradient buffers. Heavy kernels
// dispatch to BLAS GEMM or OpenMP loops; lighter glue stays scalar.

#include <cmath>
#include <cstring>
#include <memory>

#include "mcad/nn/blas.hpp"
#include "mcad/nn/tape.hpp"
#include "mcad/rng.hpp"

namespace mcad::nn {

/// exp for the float training path: range-reduced 6th-order polynomial,
/// relative error ~2e-7, inlines and vectorizes. Double keeps libm exp so
/// float64 gradient checks stay at full precision.
inline float fast_exp(float x) {
    x = std::min(87.0f, std::max(-87.0f, x));
    float z = x * 1.44269504088896341f;  // x / ln 2
    float n = std::floor(z + 0.5f);
    float r = x - n * 0.693359375f;      // ln 2 split high
    r -= n * -2.12194440e-4f;            // ln 2 split low
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    int32_t bits;
    std::memcpy(&bits, &p, 4);
    bits += int32_t(n) << 23;
    float out;
    std::memcpy(&out, &bits, 4);
    return out;
}

inline float scalar_exp(float x) { return fast_exp(x); }
inline double scalar_exp(double x) { return std::exp(x); }

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + scalar_exp(-x));
}

template <typename T>
inline T softplus_val(T x) {
    return x > T(20) ? x : std::log1p(scalar_exp(x));
}

// --- elementwise -------------------------------------------------------------

template <typename T>
int add(Tape<T>& tp, int a, int b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    check_shape(A.shape == B.shape, "add " + A.shape.str() + " vs " + B.shape.str());
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [a, b, id](Tape<T>& t) {
        const auto& g = t.grad(id);
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

/// ca*a + cb*b, elementwise.
template <typename T>
int linear_combo(Tape<T>& tp, int a, T ca, int b, T cb) {
    const auto &A = tp.val(a), &B = tp.val(b);
    check_shape(A.shape == B.shape, "linear_combo");
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = ca * A[i] + cb * B[i];
    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [a, b, ca, cb, id](Tape<T>& t) {
        const auto& g = t.grad(id);
        if (t.needs_grad(a)) {
            auto& ga = t.grad(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += ca * g[i];
        }
        if (t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += cb * g[i];
        }
    });
}

template <typename T>
int scale(Tape<T>& tp, int a, T c) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = c * A[i];
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, c, id](Tape<T>& t) {
        const auto& g = t.grad(id);
        if (!t.needs_grad(a)) return;
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

template <typename T>
int add_const(Tape<T>& tp, int a, T c) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] + c;
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a),
                   [a, id](Tape<T>& t) { t.accumulate(a, t.grad(id)); });
}

template <typename T>
int mul(Tape<T>& tp, int a, int b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    check_shape(A.shape == B.shape, "mul");
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [a, b, id](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &A2 = t.val(a), &B2 = t.val(b);
        if (t.needs_grad(a)) {
            auto& ga = t.grad(a);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B2[i];
        }
        if (t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A2[i];
        }
    });
}

template <typename T>
int silu(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * sigmoid(A[i]);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        const auto& A2 = t.val(a);
        auto& ga = t.grad(a);
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < g.size(); ++i) {
            T s = sigmoid(A2[i]);
            ga[i] += g[i] * s * (T(1) + A2[i] * (T(1) - s));
        }
    });
}

template <typename T>
int leaky_relu(Tape<T>& tp, int a, T alpha) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] > 0 ? A[i] : alpha * A[i];
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, alpha, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        const auto& A2 = t.val(a);
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (A2[i] > 0 ? T(1) : alpha);
    });
}

template <typename T>
int softplus(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = softplus_val(A[i]);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        const auto& A2 = t.val(a);
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid(A2[i]);
    });
}

template <typename T>
int sqrt_el(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = std::sqrt(std::max(A[i], T(0)));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        const auto& Y = t.val(id);
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * T(0.5) / std::max(Y[i], T(1e-12));
    });
}

// --- reductions ----------------------------------------------------------------

template <typename T>
int mean_all(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    T s = 0;
    for (int64_t i = 0; i < A.size(); ++i) s += A[i];
    Tensor<T> out(Shape{1});
    out[0] = s / T(A.size());
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        T g = t.grad(id)[0] / T(t.val(a).size());
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

/// Sum of squares over all trailing dims: x (B, ...) -> (B).
template <typename T>
int sumsq_per_row(Tape<T>& tp, int a) {
    const auto& A = tp.val(a);
    int b = A.shape[0];
    int64_t rest = A.size() / b;
    Tensor<T> out(Shape{b});
    for (int i = 0; i < b; ++i) {
        T s = 0;
        const T* p = A.data() + int64_t(i) * rest;
        for (int64_t j = 0; j < rest; ++j) s += p[j] * p[j];
        out[i] = s;
    }
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id, b, rest](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        const auto& A2 = t.val(a);
        auto& ga = t.grad(a);
        for (int i = 0; i < b; ++i) {
            const T* p = A2.data() + int64_t(i) * rest;
            T* q = ga.data() + int64_t(i) * rest;
            for (int64_t j = 0; j < rest; ++j) q[j] += T(2) * p[j] * g[i];
        }
    });
}

// --- linear / matmul --------------------------------------------------------------

/// y = x W^T + b. x (..., Din), W (Dout, Din), b (Dout) optional (-1).
template <typename T>
int linear(Tape<T>& tp, int x, int w, int b = -1) {
    const auto &X = tp.val(x), &W = tp.val(w);
    int din = X.shape[X.shape.rank() - 1];
    check_shape(W.shape.rank() == 2 && W.shape[1] == din,
                "linear: W " + W.shape.str() + " vs x " + X.shape.str());
    int dout = W.shape[0];
    int64_t rows = X.size() / din;

    Shape os = X.shape;
    Shape out_shape;
    if (os.rank() == 1) out_shape = Shape{dout};
    else if (os.rank() == 2) out_shape = Shape{os[0], dout};
    else if (os.rank() == 3) out_shape = Shape{os[0], os[1], dout};
    else out_shape = Shape{os[0], os[1], os[2], dout};

    Tensor<T> out(out_shape);
    gemm(false, true, int(rows), dout, din, T(1), X.data(), din, W.data(), din, T(0), out.data(),
         dout);
    if (b >= 0) {
        const auto& B = tp.val(b);
        check_shape(B.size() == dout, "linear bias");
        for (int64_t r = 0; r < rows; ++r) {
            T* p = out.data() + r * dout;
            for (int j = 0; j < dout; ++j) p[j] += B[j];
        }
    }
    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || (b >= 0 && tp.needs_grad(b));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [x, w, b, id, rows, din, dout](Tape<T>& t) {
        const auto& g = t.grad(id);
        if (t.needs_grad(x))
            gemm(false, false, int(rows), din, dout, T(1), g.data(), dout, t.val(w).data(), din,
                 T(1), t.grad(x).data(), din);
        if (t.needs_grad(w))
            gemm(true, false, dout, din, int(rows), T(1), g.data(), dout, t.val(x).data(), din,
                 T(1), t.grad(w).data(), din);
        if (b >= 0 && t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t r = 0; r < rows; ++r) {
                const T* p = g.data() + r * dout;
                for (int j = 0; j < dout; ++j) gb[j] += p[j];
            }
        }
    });
}

/// Batched matmul: a (G, M, K), b (G, K2, N2); trans flags give effective
/// (M x K)(K x N).
template <typename T>
int bmm(Tape<T>& tp, int a, int b, bool trans_a, bool trans_b) {
    const auto &A = tp.val(a), &B = tp.val(b);
    check_shape(A.shape.rank() == 3 && B.shape.rank() == 3 && A.shape[0] == B.shape[0], "bmm rank");
    int G = A.shape[0];
    int m = trans_a ? A.shape[2] : A.shape[1];
    int k = trans_a ? A.shape[1] : A.shape[2];
    int kb = trans_b ? B.shape[2] : B.shape[1];
    int n = trans_b ? B.shape[1] : B.shape[2];
    check_shape(k == kb, "bmm inner dim");
    int lda = A.shape[2], ldb = B.shape[2];

    Tensor<T> out(Shape{G, m, n});
    for (int gi = 0; gi < G; ++gi)
        gemm(trans_a, trans_b, m, n, k, T(1), A.data() + int64_t(gi) * A.shape[1] * lda, lda,
             B.data() + int64_t(gi) * B.shape[1] * ldb, ldb, T(0),
             out.data() + int64_t(gi) * m * n, n);

    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &A2 = t.val(a), &B2 = t.val(b);
        for (int gi = 0; gi < G; ++gi) {
            const T* gp = g.data() + int64_t(gi) * m * n;
            const T* ap = A2.data() + int64_t(gi) * A2.shape[1] * lda;
            const T* bp = B2.data() + int64_t(gi) * B2.shape[1] * ldb;
            if (t.needs_grad(a)) {
                T* gap = t.grad(a).data() + int64_t(gi) * A2.shape[1] * lda;
                // dA = dC B^T (or transposed variants)
                if (!trans_a) gemm(false, !trans_b, m, k, n, T(1), gp, n, bp, ldb, T(1), gap, lda);
                else gemm(trans_b, true, k, m, n, T(1), bp, ldb, gp, n, T(1), gap, lda);
            }
            if (t.needs_grad(b)) {
                T* gbp = t.grad(b).data() + int64_t(gi) * B2.shape[1] * ldb;
                if (!trans_b) gemm(!trans_a, false, k, n, m, T(1), ap, lda, gp, n, T(1), gbp, ldb);
                else gemm(true, trans_a, n, k, m, T(1), gp, n, ap, lda, T(1), gbp, ldb);
            }
        }
    });
}

// --- shape plumbing -------------------------------------------------------------

template <typename T>
int reshape(Tape<T>& tp, int a, Shape s) {
    const auto& A = tp.val(a);
    check_shape(s.numel() == A.size(), "reshape " + A.shape.str() + " -> " + s.str());
    Tensor<T> out(s);
    out.v = A.v;
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(a), [a, id](Tape<T>& t) {
        if (!t.needs_grad(a)) return;
        const auto& g = t.grad(id);
        auto& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

/// (A, B, C, D) -> (A, C, B, D)
template <typename T>
int permute_0213(Tape<T>& tp, int x) {
    const auto& X = tp.val(x);
    check_shape(X.shape.rank() == 4, "permute_0213");
    int A = X.shape[0], B = X.shape[1], C = X.shape[2], D = X.shape[3];
    Tensor<T> out(Shape{A, C, B, D});
    for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                std::memcpy(out.data() + (((int64_t(a) * C + c) * B + b) * D),
                            X.data() + (((int64_t(a) * B + b) * C + c) * D), sizeof(T) * size_t(D));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(x), [x, id, A, B, C, D](Tape<T>& t) {
        if (!t.needs_grad(x)) return;
        const auto& g = t.grad(id);
        auto& gx = t.grad(x);
        for (int a = 0; a < A; ++a)
            for (int c = 0; c < C; ++c)
                for (int b = 0; b < B; ++b) {
                    const T* src = g.data() + (((int64_t(a) * C + c) * B + b) * D);
                    T* dst = gx.data() + (((int64_t(a) * B + b) * C + c) * D);
                    for (int d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

/// y = x[..., off : off+size]
template <typename T>
int slice_lastdim(Tape<T>& tp, int x, int off, int size) {
    const auto& X = tp.val(x);
    int last = X.shape[X.shape.rank() - 1];
    check_shape(off >= 0 && off + size <= last, "slice_lastdim");
    int64_t rows = X.size() / last;
    Shape os = X.shape;
    Shape out_shape = os.rank() == 2 ? Shape{os[0], size}
                      : os.rank() == 3 ? Shape{os[0], os[1], size}
                                       : Shape{os[0], os[1], os[2], size};
    Tensor<T> out(out_shape);
    for (int64_t r = 0; r < rows; ++r)
        std::memcpy(out.data() + r * size, X.data() + r * last + off, sizeof(T) * size_t(size));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(x), [x, id, off, size, last, rows](Tape<T>& t) {
        if (!t.needs_grad(x)) return;
        const auto& g = t.grad(id);
        auto& gx = t.grad(x);
        for (int64_t r = 0; r < rows; ++r) {
            const T* src = g.data() + r * size;
            T* dst = gx.data() + r * last + off;
            for (int j = 0; j < size; ++j) dst[j] += src[j];
        }
    });
}

/// Repeats a vector (len) as rows: -> (B, len).
template <typename T>
int tile_rows(Tape<T>& tp, int w, int b) {
    const auto& W = tp.val(w);
    int len = int(W.size());
    Tensor<T> out(Shape{b, len});
    for (int r = 0; r < b; ++r) std::memcpy(out.data() + int64_t(r) * len, W.data(), sizeof(T) * size_t(len));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(w), [w, id, b, len](Tape<T>& t) {
        if (!t.needs_grad(w)) return;
        const auto& g = t.grad(id);
        auto& gw = t.grad(w);
        for (int r = 0; r < b; ++r) {
            const T* src = g.data() + int64_t(r) * len;
            for (int j = 0; j < len; ++j) gw[j] += src[j];
        }
    });
}

/// Nearest-neighbor x2 upsampling along the sequence axis: (B,L,C) -> (B,2L,C).
template <typename T>
int upsample2(Tape<T>& tp, int x) {
    const auto& X = tp.val(x);
    check_shape(X.shape.rank() == 3, "upsample2");
    int B = X.shape[0], L = X.shape[1], C = X.shape[2];
    Tensor<T> out(Shape{B, 2 * L, C});
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < L; ++t) {
            const T* src = X.data() + (int64_t(b) * L + t) * C;
            std::memcpy(out.data() + (int64_t(b) * 2 * L + 2 * t) * C, src, sizeof(T) * size_t(C));
            std::memcpy(out.data() + (int64_t(b) * 2 * L + 2 * t + 1) * C, src, sizeof(T) * size_t(C));
        }
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(x), [x, id, B, L, C](Tape<T>& t) {
        if (!t.needs_grad(x)) return;
        const auto& g = t.grad(id);
        auto& gx = t.grad(x);
        for (int b = 0; b < B; ++b)
            for (int tt = 0; tt < L; ++tt) {
                T* dst = gx.data() + (int64_t(b) * L + tt) * C;
                const T* s0 = g.data() + (int64_t(b) * 2 * L + 2 * tt) * C;
                const T* s1 = g.data() + (int64_t(b) * 2 * L + 2 * tt + 1) * C;
                for (int c = 0; c < C; ++c) dst[c] += s0[c] + s1[c];
            }
    });
}

// --- convolutions -----------------------------------------------------------------

/// 1-D convolution, channels-last. x (B, L, Cin), W (K, Cin, Cout), b (Cout)
/// optional. Lout = (L + 2*pad - K)/stride + 1.
template <typename T>
int conv1d(Tape<T>& tp, int x, int w, int b, int stride, int pad) {
    const auto &X = tp.val(x), &W = tp.val(w);
    check_shape(X.shape.rank() == 3 && W.shape.rank() == 3, "conv1d rank");
    int B = X.shape[0], L = X.shape[1], Cin = X.shape[2];
    int K = W.shape[0], Cout = W.shape[2];
    check_shape(W.shape[1] == Cin, "conv1d channels");
    int Lout = (L + 2 * pad - K) / stride + 1;
    check_shape(Lout >= 1, "conv1d output length");

    int64_t rows = int64_t(B) * Lout;
    Tensor<T> out(Shape{B, Lout, Cout});
    Tensor<T> xk(Shape{int(rows), Cin});
    for (int k = 0; k < K; ++k) {
        // gather rows t_in = t_out*stride - pad + k
        xk.zero();
#pragma omp parallel for schedule(static)
        for (int bb = 0; bb < B; ++bb)
            for (int to = 0; to < Lout; ++to) {
                int ti = to * stride - pad + k;
                if (ti < 0 || ti >= L) continue;
                std::memcpy(xk.data() + (int64_t(bb) * Lout + to) * Cin,
                            X.data() + (int64_t(bb) * L + ti) * Cin, sizeof(T) * size_t(Cin));
            }
        gemm(false, false, int(rows), Cout, Cin, T(1), xk.data(), Cin,
             W.data() + int64_t(k) * Cin * Cout, Cout, k == 0 ? T(0) : T(1), out.data(), Cout);
    }
    if (b >= 0) {
        const auto& Bb = tp.val(b);
        for (int64_t r = 0; r < rows; ++r) {
            T* p = out.data() + r * Cout;
            for (int j = 0; j < Cout; ++j) p[j] += Bb[j];
        }
    }

    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || (b >= 0 && tp.needs_grad(b));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &X2 = t.val(x), &W2 = t.val(w);
        Tensor<T> xk2(Shape{int(rows), Cin});
        Tensor<T> dxk(Shape{int(rows), Cin});
        for (int k = 0; k < K; ++k) {
            if (t.needs_grad(w)) {
                xk2.zero();
                for (int bb = 0; bb < B; ++bb)
                    for (int to = 0; to < Lout; ++to) {
                        int ti = to * stride - pad + k;
                        if (ti < 0 || ti >= L) continue;
                        std::memcpy(xk2.data() + (int64_t(bb) * Lout + to) * Cin,
                                    X2.data() + (int64_t(bb) * L + ti) * Cin,
                                    sizeof(T) * size_t(Cin));
                    }
                gemm(true, false, Cin, Cout, int(rows), T(1), xk2.data(), Cin, g.data(), Cout,
                     T(1), t.grad(w).data() + int64_t(k) * Cin * Cout, Cout);
            }
            if (t.needs_grad(x)) {
                gemm(false, true, int(rows), Cin, Cout, T(1), g.data(), Cout,
                     W2.data() + int64_t(k) * Cin * Cout, Cout, T(0), dxk.data(), Cin);
                auto& gx = t.grad(x);
                for (int bb = 0; bb < B; ++bb)
                    for (int to = 0; to < Lout; ++to) {
                        int ti = to * stride - pad + k;
                        if (ti < 0 || ti >= L) continue;
                        const T* src = dxk.data() + (int64_t(bb) * Lout + to) * Cin;
                        T* dst = gx.data() + (int64_t(bb) * L + ti) * Cin;
                        for (int c = 0; c < Cin; ++c) dst[c] += src[c];
                    }
            }
        }
        if (b >= 0 && t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t r = 0; r < rows; ++r) {
                const T* p = g.data() + r * Cout;
                for (int j = 0; j < Cout; ++j) gb[j] += p[j];
            }
        }
    });
}

/// Transposed 1-D convolution (adjoint of conv1d). x (B, L, Cin),
/// W (K, Cin, Cout). Lout = (L-1)*stride - 2*pad + K.
template <typename T>
int conv1d_transpose(Tape<T>& tp, int x, int w, int b, int stride, int pad) {
    const auto &X = tp.val(x), &W = tp.val(w);
    check_shape(X.shape.rank() == 3 && W.shape.rank() == 3, "conv1d_transpose rank");
    int B = X.shape[0], L = X.shape[1], Cin = X.shape[2];
    int K = W.shape[0], Cout = W.shape[2];
    check_shape(W.shape[1] == Cin, "conv1d_transpose channels");
    int Lout = (L - 1) * stride - 2 * pad + K;
    check_shape(Lout >= 1, "conv1d_transpose output length");

    int64_t rows = int64_t(B) * L;
    Tensor<T> out(Shape{B, Lout, Cout});
    Tensor<T> yk(Shape{int(rows), Cout});
    for (int k = 0; k < K; ++k) {
        gemm(false, false, int(rows), Cout, Cin, T(1), X.data(), Cin,
             W.data() + int64_t(k) * Cin * Cout, Cout, T(0), yk.data(), Cout);
        for (int bb = 0; bb < B; ++bb)
            for (int ti = 0; ti < L; ++ti) {
                int to = ti * stride - pad + k;
                if (to < 0 || to >= Lout) continue;
                const T* src = yk.data() + (int64_t(bb) * L + ti) * Cout;
                T* dst = out.data() + (int64_t(bb) * Lout + to) * Cout;
                for (int c = 0; c < Cout; ++c) dst[c] += src[c];
            }
    }
    if (b >= 0) {
        const auto& Bb = tp.val(b);
        for (int64_t r = 0; r < int64_t(B) * Lout; ++r) {
            T* p = out.data() + r * Cout;
            for (int j = 0; j < Cout; ++j) p[j] += Bb[j];
        }
    }

    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || (b >= 0 && tp.needs_grad(b));
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &X2 = t.val(x), &W2 = t.val(w);
        Tensor<T> gk(Shape{int(rows), Cout});
        for (int k = 0; k < K; ++k) {
            gk.zero();
            for (int bb = 0; bb < B; ++bb)
                for (int ti = 0; ti < L; ++ti) {
                    int to = ti * stride - pad + k;
                    if (to < 0 || to >= Lout) continue;
                    std::memcpy(gk.data() + (int64_t(bb) * L + ti) * Cout,
                                g.data() + (int64_t(bb) * Lout + to) * Cout,
                                sizeof(T) * size_t(Cout));
                }
            if (t.needs_grad(x))
                gemm(false, true, int(rows), Cin, Cout, T(1), gk.data(), Cout,
                     W2.data() + int64_t(k) * Cin * Cout, Cout, T(1), t.grad(x).data(), Cin);
            if (t.needs_grad(w))
                gemm(true, false, Cin, Cout, int(rows), T(1), X2.data(), Cin, gk.data(), Cout,
                     T(1), t.grad(w).data() + int64_t(k) * Cin * Cout, Cout);
        }
        if (b >= 0 && t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t r = 0; r < int64_t(B) * Lout; ++r) {
                const T* p = g.data() + r * Cout;
                for (int j = 0; j < Cout; ++j) gb[j] += p[j];
            }
        }
    });
}

/// Adjoint of conv1d with respect to its input, as a differentiable op:
/// maps g (B, Lout, Cout) back to (B, l_in, Cin) through W (K, Cin, Cout).
/// Satisfies <conv1d(x,W), g> == <x, conv1d_adjoint(g,W,l_in)>. Used to build
/// critic input-gradient graphs for the gradient penalty.
template <typename T>
int conv1d_adjoint(Tape<T>& tp, int g, int w, int stride, int pad, int l_in) {
    const auto &G = tp.val(g), &W = tp.val(w);
    check_shape(G.shape.rank() == 3 && W.shape.rank() == 3, "conv1d_adjoint rank");
    int B = G.shape[0], Lout = G.shape[1], Cout = G.shape[2];
    int K = W.shape[0], Cin = W.shape[1];
    check_shape(W.shape[2] == Cout, "conv1d_adjoint channels");
    check_shape((l_in + 2 * pad - K) / stride + 1 == Lout, "conv1d_adjoint geometry");

    int64_t rows = int64_t(B) * Lout;
    Tensor<T> out(Shape{B, l_in, Cin});
    Tensor<T> dxk(Shape{int(rows), Cin});
    for (int k = 0; k < K; ++k) {
        gemm(false, true, int(rows), Cin, Cout, T(1), G.data(), Cout,
             W.data() + int64_t(k) * Cin * Cout, Cout, T(0), dxk.data(), Cin);
        for (int bb = 0; bb < B; ++bb)
            for (int to = 0; to < Lout; ++to) {
                int ti = to * stride - pad + k;
                if (ti < 0 || ti >= l_in) continue;
                const T* src = dxk.data() + (int64_t(bb) * Lout + to) * Cin;
                T* dst = out.data() + (int64_t(bb) * l_in + ti) * Cin;
                for (int c = 0; c < Cin; ++c) dst[c] += src[c];
            }
    }

    bool ng = tp.needs_grad(g) || tp.needs_grad(w);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& gz = t.grad(id);  // (B, l_in, Cin)
        const auto &G2 = t.val(g), &W2 = t.val(w);
        Tensor<T> zk(Shape{int(rows), Cin});
        for (int k = 0; k < K; ++k) {
            zk.zero();
            for (int bb = 0; bb < B; ++bb)
                for (int to = 0; to < Lout; ++to) {
                    int ti = to * stride - pad + k;
                    if (ti < 0 || ti >= l_in) continue;
                    std::memcpy(zk.data() + (int64_t(bb) * Lout + to) * Cin,
                                gz.data() + (int64_t(bb) * l_in + ti) * Cin,
                                sizeof(T) * size_t(Cin));
                }
            if (t.needs_grad(g))
                gemm(false, false, int(rows), Cout, Cin, T(1), zk.data(), Cin,
                     W2.data() + int64_t(k) * Cin * Cout, Cout, T(1), t.grad(g).data(), Cout);
            if (t.needs_grad(w))
                gemm(true, false, Cin, Cout, int(rows), T(1), zk.data(), Cin, G2.data(), Cout,
                     T(1), t.grad(w).data() + int64_t(k) * Cin * Cout, Cout);
        }
    });
}

/// Depthwise causal convolution: y[b,t,c] = sum_k W[c,k] x[b, t-K+1+k, c] + b[c].
/// Left zero padding; position t sees only positions <= t.
template <typename T>
int causal_depthwise_conv(Tape<T>& tp, int x, int w, int b) {
    const auto &X = tp.val(x), &W = tp.val(w);
    int B = X.shape[0], L = X.shape[1], C = X.shape[2];
    int K = W.shape[1];
    check_shape(W.shape.rank() == 2 && W.shape[0] == C, "causal conv W");
    Tensor<T> out(Shape{B, L, C});
    const auto& Bb = tp.val(b);
#pragma omp parallel for schedule(static)
    for (int bb = 0; bb < B; ++bb)
        for (int t = 0; t < L; ++t) {
            T* y = out.data() + (int64_t(bb) * L + t) * C;
            for (int c = 0; c < C; ++c) y[c] = Bb[c];
            for (int k = 0; k < K; ++k) {
                int ti = t - K + 1 + k;
                if (ti < 0) continue;
                const T* xr = X.data() + (int64_t(bb) * L + ti) * C;
                for (int c = 0; c < C; ++c) y[c] += W[int64_t(c) * K + k] * xr[c];
            }
        }
    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(b);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &X2 = t.val(x), &W2 = t.val(w);
        if (t.needs_grad(x)) {
            auto& gx = t.grad(x);
#pragma omp parallel for schedule(static)
            for (int bb = 0; bb < B; ++bb)
                for (int tt = 0; tt < L; ++tt) {
                    const T* gr = g.data() + (int64_t(bb) * L + tt) * C;
                    for (int k = 0; k < K; ++k) {
                        int ti = tt - K + 1 + k;
                        if (ti < 0) continue;
                        T* dst = gx.data() + (int64_t(bb) * L + ti) * C;
                        for (int c = 0; c < C; ++c) dst[c] += W2[int64_t(c) * K + k] * gr[c];
                    }
                }
        }
        if (t.needs_grad(w)) {
            auto& gw = t.grad(w);
            for (int bb = 0; bb < B; ++bb)
                for (int tt = 0; tt < L; ++tt) {
                    const T* gr = g.data() + (int64_t(bb) * L + tt) * C;
                    for (int k = 0; k < K; ++k) {
                        int ti = tt - K + 1 + k;
                        if (ti < 0) continue;
                        const T* xr = X2.data() + (int64_t(bb) * L + ti) * C;
                        for (int c = 0; c < C; ++c) gw[int64_t(c) * K + k] += xr[c] * gr[c];
                    }
                }
        }
        if (t.needs_grad(b)) {
            auto& gb = t.grad(b);
            for (int64_t r = 0; r < int64_t(B) * L; ++r) {
                const T* p = g.data() + r * C;
                for (int c = 0; c < C; ++c) gb[c] += p[c];
            }
        }
    });
}

// --- normalization --------------------------------------------------------------

/// RMS norm over the last dim with a learnable gain g (C).
template <typename T>
int rmsnorm(Tape<T>& tp, int x, int g) {
    const auto &X = tp.val(x), &G = tp.val(g);
    int C = X.shape[X.shape.rank() - 1];
    check_shape(G.size() == C, "rmsnorm gain");
    int64_t rows = X.size() / C;
    Tensor<T> out(X.shape);
    auto rstd = std::make_shared<std::vector<T>>(size_t(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = X.data() + r * C;
        T s = 0;
        for (int c = 0; c < C; ++c) s += p[c] * p[c];
        T rs = T(1) / std::sqrt(s / T(C) + T(1e-6));
        (*rstd)[size_t(r)] = rs;
        T* y = out.data() + r * C;
        for (int c = 0; c < C; ++c) y[c] = p[c] * rs * G[c];
    }
    bool ng = tp.needs_grad(x) || tp.needs_grad(g);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [x, g, id, rows, C, rstd](Tape<T>& t) {
        const auto& gr = t.grad(id);
        const auto &X2 = t.val(x), &G2 = t.val(g);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xp = X2.data() + r * C;
            const T* gp = gr.data() + r * C;
            T rs = (*rstd)[size_t(r)];
            if (t.needs_grad(x)) {
                T dot = 0;
                for (int c = 0; c < C; ++c) dot += gp[c] * G2[c] * xp[c];
                T* dst = t.grad(x).data() + r * C;
                T k = rs * rs * rs * dot / T(C);
                for (int c = 0; c < C; ++c) dst[c] += gp[c] * G2[c] * rs - xp[c] * k;
            }
            if (t.needs_grad(g)) {
                T* dg = t.grad(g).data();
                for (int c = 0; c < C; ++c) dg[c] += gp[c] * xp[c] * rs;
            }
        }
    });
}

/// Running statistics for one BatchNorm layer.
template <typename T>
struct BnState {
    Tensor<T> running_mean, running_var;
    T momentum = T(0.1);
    explicit BnState(int c = 0)
        : running_mean(Shape{c}), running_var(Shape{c}, T(1)) {}
};

/// BatchNorm over (B, L) per channel. x (B, L, C); gamma/beta (C).
/// Training mode uses batch statistics and updates `state`; eval mode reads
/// the running statistics, so identical inputs give identical outputs
/// regardless of batch composition.
template <typename T>
int batchnorm1d(Tape<T>& tp, int x, int gamma, int beta, BnState<T>& state, bool training) {
    const auto& X = tp.val(x);
    check_shape(X.shape.rank() == 3, "batchnorm1d input");
    int B = X.shape[0], L = X.shape[1], C = X.shape[2];
    int64_t rows = int64_t(B) * L;
    const auto &G = tp.val(gamma), &Bt = tp.val(beta);
    check_shape(G.size() == C && Bt.size() == C, "batchnorm1d params");
    constexpr T eps = T(1e-5);

    auto mean = std::make_shared<std::vector<T>>(size_t(C), T(0));
    auto rstd = std::make_shared<std::vector<T>>(size_t(C), T(0));
    if (training) {
        for (int64_t r = 0; r < rows; ++r) {
            const T* p = X.data() + r * C;
            for (int c = 0; c < C; ++c) (*mean)[size_t(c)] += p[c];
        }
        for (int c = 0; c < C; ++c) (*mean)[size_t(c)] /= T(rows);
        std::vector<T> var(size_t(C), T(0));
        for (int64_t r = 0; r < rows; ++r) {
            const T* p = X.data() + r * C;
            for (int c = 0; c < C; ++c) {
                T d = p[c] - (*mean)[size_t(c)];
                var[size_t(c)] += d * d;
            }
        }
        for (int c = 0; c < C; ++c) {
            var[size_t(c)] /= T(rows);
            (*rstd)[size_t(c)] = T(1) / std::sqrt(var[size_t(c)] + eps);
            state.running_mean[c] =
                (T(1) - state.momentum) * state.running_mean[c] + state.momentum * (*mean)[size_t(c)];
            state.running_var[c] =
                (T(1) - state.momentum) * state.running_var[c] + state.momentum * var[size_t(c)];
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)[size_t(c)] = state.running_mean[c];
            (*rstd)[size_t(c)] = T(1) / std::sqrt(state.running_var[c] + eps);
        }
    }

    Tensor<T> out(X.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = X.data() + r * C;
        T* y = out.data() + r * C;
        for (int c = 0; c < C; ++c)
            y[c] = (p[c] - (*mean)[size_t(c)]) * (*rstd)[size_t(c)] * G[c] + Bt[c];
    }

    bool ng = tp.needs_grad(x) || tp.needs_grad(gamma) || tp.needs_grad(beta);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto& X2 = t.val(x);
        const auto& G2 = t.val(gamma);
        std::vector<T> sum_dy(size_t(C), T(0)), sum_dy_xhat(size_t(C), T(0));
        for (int64_t r = 0; r < rows; ++r) {
            const T* gp = g.data() + r * C;
            const T* xp = X2.data() + r * C;
            for (int c = 0; c < C; ++c) {
                sum_dy[size_t(c)] += gp[c];
                sum_dy_xhat[size_t(c)] += gp[c] * (xp[c] - (*mean)[size_t(c)]) * (*rstd)[size_t(c)];
            }
        }
        if (t.needs_grad(beta)) {
            auto& gb = t.grad(beta);
            for (int c = 0; c < C; ++c) gb[c] += sum_dy[size_t(c)];
        }
        if (t.needs_grad(gamma)) {
            auto& gg = t.grad(gamma);
            for (int c = 0; c < C; ++c) gg[c] += sum_dy_xhat[size_t(c)];
        }
        if (t.needs_grad(x)) {
            auto& gx = t.grad(x);
            if (training) {
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gp = g.data() + r * C;
                    const T* xp = X2.data() + r * C;
                    T* dst = gx.data() + r * C;
                    for (int c = 0; c < C; ++c) {
                        T xhat = (xp[c] - (*mean)[size_t(c)]) * (*rstd)[size_t(c)];
                        dst[c] += G2[c] * (*rstd)[size_t(c)] *
                                  (gp[c] - sum_dy[size_t(c)] / T(rows) -
                                   xhat * sum_dy_xhat[size_t(c)] / T(rows));
                    }
                }
            } else {
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gp = g.data() + r * C;
                    T* dst = gx.data() + r * C;
                    for (int c = 0; c < C; ++c) dst[c] += gp[c] * G2[c] * (*rstd)[size_t(c)];
                }
            }
        }
    });
}

/// Inverted dropout; identity in eval mode.
template <typename T>
int dropout(Tape<T>& tp, int x, double rate, Rng& rng, bool training) {
    if (!training || rate <= 0) return x;
    const auto& X = tp.val(x);
    auto mask = std::make_shared<std::vector<T>>(size_t(X.size()));
    T keep = T(1) / T(1.0 - rate);
    Tensor<T> out(X.shape);
    for (int64_t i = 0; i < X.size(); ++i) {
        T m = rng.uniform() < rate ? T(0) : keep;
        (*mask)[size_t(i)] = m;
        out[i] = X[i] * m;
    }
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(x), [x, id, mask](Tape<T>& t) {
        if (!t.needs_grad(x)) return;
        const auto& g = t.grad(id);
        auto& gx = t.grad(x);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[size_t(i)];
    });
}

// --- softmax / losses ----------------------------------------------------------

/// Softmax over the last dim.
template <typename T>
int softmax_lastdim(Tape<T>& tp, int x) {
    const auto& X = tp.val(x);
    int K = X.shape[X.shape.rank() - 1];
    int64_t rows = X.size() / K;
    Tensor<T> out(X.shape);
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = X.data() + r * K;
        T* y = out.data() + r * K;
        T m = p[0];
        for (int k = 1; k < K; ++k) m = std::max(m, p[k]);
        T z = 0;
        for (int k = 0; k < K; ++k) {
            y[k] = scalar_exp(p[k] - m);
            z += y[k];
        }
        for (int k = 0; k < K; ++k) y[k] /= z;
    }
    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(x), [x, id, rows, K](Tape<T>& t) {
        if (!t.needs_grad(x)) return;
        const auto& g = t.grad(id);
        const auto& Y = t.val(id);
        auto& gx = t.grad(x);
        for (int64_t r = 0; r < rows; ++r) {
            const T* gp = g.data() + r * K;
            const T* yp = Y.data() + r * K;
            T dot = 0;
            for (int k = 0; k < K; ++k) dot += gp[k] * yp[k];
            T* dst = gx.data() + r * K;
            for (int k = 0; k < K; ++k) dst[k] += yp[k] * (gp[k] - dot);
        }
    });
}

/// Mean cross-entropy over rows. logits (..., K), targets flat row-major.
template <typename T>
int softmax_cross_entropy(Tape<T>& tp, int logits, std::shared_ptr<std::vector<int32_t>> targets) {
    const auto& X = tp.val(logits);
    int K = X.shape[X.shape.rank() - 1];
    int64_t rows = X.size() / K;
    check_shape(int64_t(targets->size()) == rows, "cross entropy targets");

    auto probs = std::make_shared<std::vector<T>>(size_t(X.size()));
    std::vector<T> row_loss(static_cast<size_t>(rows), T(0));
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = X.data() + r * K;
        T* q = probs->data() + r * K;
        T m = p[0];
        for (int k = 1; k < K; ++k) m = std::max(m, p[k]);
        T z = 0;
        for (int k = 0; k < K; ++k) {
            q[k] = scalar_exp(p[k] - m);
            z += q[k];
        }
        for (int k = 0; k < K; ++k) q[k] /= z;
        int tgt = (*targets)[size_t(r)];
        row_loss[size_t(r)] = std::log(z) + m - p[tgt];
    }
    T total = 0;
    for (int64_t r = 0; r < rows; ++r) total += row_loss[size_t(r)];
    Tensor<T> out(Shape{1});
    out[0] = total / T(rows);

    int id = int(tp.node_count());
    return tp.emit(std::move(out), tp.needs_grad(logits),
                   [logits, id, rows, K, probs, targets](Tape<T>& t) {
                       if (!t.needs_grad(logits)) return;
                       T g = t.grad(id)[0] / T(rows);
                       auto& gx = t.grad(logits);
#pragma omp parallel for schedule(static)
                       for (int64_t r = 0; r < rows; ++r) {
                           const T* q = probs->data() + r * K;
                           T* dst = gx.data() + r * K;
                           int tgt = (*targets)[size_t(r)];
                           for (int k = 0; k < K; ++k) dst[k] += g * q[k];
                           dst[tgt] -= g;
                       }
                   });
}

// --- fusion embedding ------------------------------------------------------------

/// Fusion embedding: per position, command-type row + parameter embedding +
/// positional encoding. Wc (k, dE) row per command id; Wpa (dE, 16*dE);
/// Wpb (257, dE) row per bin. Computed through the factored form
/// M_j = Wpb * Wpa_j^T so the one-hot chain costs 16 small GEMMs instead of a
/// dense 16*dE matvec per position; the result is algebraically identical.
template <typename T>
int fusion_embed(Tape<T>& tp, int wc, int wpa, int wpb,
                 std::shared_ptr<std::vector<int32_t>> cmds,
                 std::shared_ptr<std::vector<int32_t>> bins,
                 std::shared_ptr<Tensor<T>> pos, int B, int L, int n_slots) {
    const auto &Wc = tp.val(wc), &Wpa = tp.val(wpa), &Wpb = tp.val(wpb);
    int dE = Wc.shape[1];
    int vocab = Wpb.shape[0];
    check_shape(Wpa.shape[0] == dE && Wpa.shape[1] == n_slots * dE, "fusion_embed Wpa");
    check_shape(Wpb.shape[1] == dE, "fusion_embed Wpb");
    check_shape(int64_t(cmds->size()) == int64_t(B) * L, "fusion_embed cmds");
    check_shape(int64_t(bins->size()) == int64_t(B) * L * n_slots, "fusion_embed bins");
    check_shape(pos->shape[0] >= L && pos->shape[1] == dE, "fusion_embed pos");

    // M[j] (vocab, dE): bin embeddings after the j-th block of Wpa.
    Tensor<T> M(Shape{n_slots, vocab, dE});
    for (int j = 0; j < n_slots; ++j)
        gemm(false, true, vocab, dE, dE, T(1), Wpb.data(), dE, Wpa.data() + int64_t(j) * dE,
             n_slots * dE, T(0), M.data() + int64_t(j) * vocab * dE, dE);

    Tensor<T> out(Shape{B, L, dE});
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < int64_t(B) * L; ++p) {
        int t = int(p % L);
        T* y = out.data() + p * dE;
        const T* cw = Wc.data() + int64_t((*cmds)[size_t(p)]) * dE;
        const T* pw = pos->data() + int64_t(t) * dE;
        for (int c = 0; c < dE; ++c) y[c] = cw[c] + pw[c];
        for (int j = 0; j < n_slots; ++j) {
            const T* mw = M.data() + (int64_t(j) * vocab + (*bins)[size_t(p * n_slots + j)]) * dE;
            for (int c = 0; c < dE; ++c) y[c] += mw[c];
        }
    }

    bool ng = tp.needs_grad(wc) || tp.needs_grad(wpa) || tp.needs_grad(wpb);
    int id = int(tp.node_count());
    return tp.emit(std::move(out), ng, [=](Tape<T>& t) {
        const auto& g = t.grad(id);
        const auto &Wpa2 = t.val(wpa), &Wpb2 = t.val(wpb);
        if (t.needs_grad(wc)) {
            auto& gw = t.grad(wc);
            for (int64_t p = 0; p < int64_t(B) * L; ++p) {
                T* dst = gw.data() + int64_t((*cmds)[size_t(p)]) * dE;
                const T* src = g.data() + p * dE;
                for (int c = 0; c < dE; ++c) dst[c] += src[c];
            }
        }
        if (t.needs_grad(wpa) || t.needs_grad(wpb)) {
            Tensor<T> dM(Shape{n_slots, vocab, dE});
#pragma omp parallel for schedule(static)
            for (int j = 0; j < n_slots; ++j) {
                T* dmj = dM.data() + int64_t(j) * vocab * dE;
                for (int64_t p = 0; p < int64_t(B) * L; ++p) {
                    T* dst = dmj + int64_t((*bins)[size_t(p * n_slots + j)]) * dE;
                    const T* src = g.data() + p * dE;
                    for (int c = 0; c < dE; ++c) dst[c] += src[c];
                }
            }
            for (int j = 0; j < n_slots; ++j) {
                const T* dmj = dM.data() + int64_t(j) * vocab * dE;
                // dWpa_j = dM_j^T Wpb, written into the strided block.
                if (t.needs_grad(wpa))
                    gemm(true, false, dE, dE, vocab, T(1), dmj, dE, Wpb2.data(), dE, T(1),
                         t.grad(wpa).data() + int64_t(j) * dE, n_slots * dE);
                // dWpb += dM_j Wpa_j
                if (t.needs_grad(wpb)) {
                    // Wpa_j as (dE_out, dE_in) block; dWpb = dM_j * Wpa_j needs
                    // (vocab, dE_out) x (dE_out, dE_in): Wpa_j rows are strided.
                    gemm(false, false, vocab, dE, dE, T(1), dmj, dE,
                         Wpa2.data() + int64_t(j) * dE, n_slots * dE, T(1), t.grad(wpb).data(),
                         dE);
                }
            }
        }
    });
}

/// Reference (unfactored) fusion embedding for oracle tests: builds the
/// flattened 16*dE vector per position and applies Wpa densely.
template <typename T>
Tensor<T> fusion_embed_reference(const Tensor<T>& wc, const Tensor<T>& wpa, const Tensor<T>& wpb,
                                 const std::vector<int32_t>& cmds, const std::vector<int32_t>& bins,
                                 const Tensor<T>& pos, int B, int L, int n_slots) {
    int dE = wc.shape[1];
    Tensor<T> out(Shape{B, L, dE});
    std::vector<T> flat(size_t(n_slots) * dE);
    for (int64_t p = 0; p < int64_t(B) * L; ++p) {
        for (int j = 0; j < n_slots; ++j) {
            const T* row = wpb.data() + int64_t(bins[size_t(p * n_slots + j)]) * dE;
            for (int c = 0; c < dE; ++c) flat[size_t(j * dE + c)] = row[c];
        }
        T* y = out.data() + p * dE;
        const T* cw = wc.data() + int64_t(cmds[size_t(p)]) * dE;
        const T* pw = pos.data() + int64_t(p % L) * dE;
        for (int o = 0; o < dE; ++o) {
            T s = 0;
            const T* arow = wpa.data() + int64_t(o) * n_slots * dE;
            for (int i = 0; i < n_slots * dE; ++i) s += arow[i] * flat[size_t(i)];
            y[o] = cw[o] + s + pw[o];
        }
    }
    return out;
}

/// Fixed sinusoidal positional table (L, dE).
template <typename T>
Tensor<T> sinusoidal_positions(int L, int dE) {
    Tensor<T> pos(Shape{L, dE});
    for (int t = 0; t < L; ++t)
        for (int i = 0; i < dE; ++i) {
            double freq = std::pow(10000.0, -2.0 * double(i / 2) / double(dE));
            double v = i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
            pos.data()[int64_t(t) * dE + i] = T(v);
        }
    return pos;
}

}  // namespace mcad::nn
