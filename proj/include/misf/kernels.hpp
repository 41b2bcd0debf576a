#pragma once

// Fast kernels behind the tape ops. Parallel loops own disjoint output
// elements with serial inner reductions, so results are bitwise independent
// of the worker count. misf::ref holds the naive serial counterparts.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "misf/kernel_types.hpp"
#include "misf/tensor.hpp"

namespace misf {

inline std::atomic<int> g_threads{1};

inline void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
inline int threads() { return g_threads.load(); }

namespace kern {

// ---- GEMM -------------------------------------------------------------
// C[M,N] (+)= A[M,K] * B[K,N], row-major contiguous. 4x16 register tiles,
// scalar edge loops. Each C element is finished by exactly one thread.

template <typename T>
void gemm_nn(T* C, const T* A, const T* B, int64_t M, int64_t K, int64_t N, bool accumulate) {
    constexpr int64_t MR = 4, NR = 16;

    if (M <= 32) {
        // small-M path: stream B exactly once, k-outer axpy per row. Each
        // element still sums in ascending k, so results do not depend on the
        // thread count (threads own disjoint column ranges).
        const int64_t nt = threads();
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int64_t tc = 0; tc < nt; ++tc) {
            const int64_t n0 = N * tc / nt, n1 = N * (tc + 1) / nt;
            constexpr int64_t NB = 256;  // C block of M*NB stays in L1
            for (int64_t nb = n0; nb < n1; nb += NB) {
                const int64_t ne = std::min(n1, nb + NB);
                if (!accumulate)
                    for (int64_t m = 0; m < M; ++m) std::fill(C + m * N + nb, C + m * N + ne, T(0));
                for (int64_t k = 0; k < K; ++k) {
                    const T* bp = B + k * N;
                    for (int64_t m = 0; m < M; ++m) {
                        const T av = A[m * K + k];
                        T* cp = C + m * N;
                        for (int64_t n = nb; n < ne; ++n) cp[n] += av * bp[n];
                    }
                }
            }
        }
        return;
    }

    const int64_t m_main = M - M % MR;
    const int64_t n_main = N - N % NR;

#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t m = 0; m < m_main; m += MR) {
        for (int64_t n = 0; n < n_main; n += NR) {
            T acc[MR][NR] = {};
            const T* a0 = A + (m + 0) * K;
            const T* a1 = A + (m + 1) * K;
            const T* a2 = A + (m + 2) * K;
            const T* a3 = A + (m + 3) * K;
            for (int64_t k = 0; k < K; ++k) {
                const T* bp = B + k * N + n;
                const T av0 = a0[k], av1 = a1[k], av2 = a2[k], av3 = a3[k];
                for (int64_t j = 0; j < NR; ++j) {
                    const T bv = bp[j];
                    acc[0][j] += av0 * bv;
                    acc[1][j] += av1 * bv;
                    acc[2][j] += av2 * bv;
                    acc[3][j] += av3 * bv;
                }
            }
            for (int64_t r = 0; r < MR; ++r) {
                T* cp = C + (m + r) * N + n;
                if (accumulate)
                    for (int64_t j = 0; j < NR; ++j) cp[j] += acc[r][j];
                else
                    for (int64_t j = 0; j < NR; ++j) cp[j] = acc[r][j];
            }
        }
        // right edge: k-outer axpy over the trailing columns
        for (int64_t r = 0; r < MR; ++r) {
            const T* ap = A + (m + r) * K;
            T* cp = C + (m + r) * N;
            if (!accumulate)
                for (int64_t n = n_main; n < N; ++n) cp[n] = T(0);
            for (int64_t k = 0; k < K; ++k) {
                const T av = ap[k];
                const T* bp = B + k * N;
                for (int64_t n = n_main; n < N; ++n) cp[n] += av * bp[n];
            }
        }
    }
    // bottom edge: full rows, k-outer axpy streaming B contiguously
    for (int64_t m = m_main; m < M; ++m) {
        const T* ap = A + m * K;
        T* cp = C + m * N;
        if (!accumulate) std::fill(cp, cp + N, T(0));
        for (int64_t k = 0; k < K; ++k) {
            const T av = ap[k];
            const T* bp = B + k * N;
            for (int64_t n = 0; n < N; ++n) cp[n] += av * bp[n];
        }
    }
}

template <typename T>
void transpose(T* dst, const T* src, int64_t rows, int64_t cols) {
    // dst is [cols, rows]; 32x32 blocks keep both sides cache-resident
    constexpr int64_t BS = 32;
    for (int64_t i0 = 0; i0 < rows; i0 += BS)
        for (int64_t j0 = 0; j0 < cols; j0 += BS) {
            const int64_t i1 = std::min(rows, i0 + BS), j1 = std::min(cols, j0 + BS);
            for (int64_t i = i0; i < i1; ++i)
                for (int64_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
        }
}

// ---- im2col / col2im ---------------------------------------------------
// One sample. col is [C*k*k, oh*ow]; out-of-image taps are zero.

template <typename T>
void im2col(T* col, const T* img, int64_t C, int64_t H, int64_t W,
            int k, int stride, Pad pad, int64_t oh, int64_t ow) {
    for (int64_t c = 0; c < C; ++c)
        for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
                T* dst = col + ((c * k + kh) * k + kw) * (oh * ow);
                const T* src = img + c * H * W;
                for (int64_t i = 0; i < oh; ++i) {
                    int64_t ih = i * stride - pad.top + kh;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst + i * ow, dst + (i + 1) * ow, T(0));
                        continue;
                    }
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t iw = j * stride - pad.left + kw;
                        dst[i * ow + j] = (iw < 0 || iw >= W) ? T(0) : src[ih * W + iw];
                    }
                }
            }
}

template <typename T>
void col2im(const T* col, T* img, int64_t C, int64_t H, int64_t W,
            int k, int stride, Pad pad, int64_t oh, int64_t ow) {
    // img must be pre-initialized; accumulates
    for (int64_t c = 0; c < C; ++c)
        for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
                const T* src = col + ((c * k + kh) * k + kw) * (oh * ow);
                T* dst = img + c * H * W;
                for (int64_t i = 0; i < oh; ++i) {
                    int64_t ih = i * stride - pad.top + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t iw = j * stride - pad.left + kw;
                        if (iw < 0 || iw >= W) continue;
                        dst[ih * W + iw] += src[i * ow + j];
                    }
                }
            }
}

// ---- conv2d ------------------------------------------------------------
// weight [Cout, Cin, k, k]

// Stride-1 convolutions skip im2col: every tap is a shifted row axpy, so the
// working set stays in cache and the inner loops vectorize.
template <typename T>
Tensor<T> conv2d_forward_direct(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                Pad pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t oh = conv_out_dim(xs.h, k, 1, pad.top, pad.bottom);
    const int64_t ow = conv_out_dim(xs.w, k, 1, pad.left, pad.right);
    Tensor<T> y({xs.b, ws.b, oh, ow});
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bco = 0; bco < xs.b * ws.b; ++bco) {
        const int64_t b = bco / ws.b, co = bco % ws.b;
        T* yp = y.data() + bco * oh * ow;
        std::fill(yp, yp + oh * ow, bias.empty() ? T(0) : bias[co]);
        for (int64_t ci = 0; ci < xs.c; ++ci) {
            const T* xp = x.data() + (b * xs.c + ci) * xs.h * xs.w;
            const T* wp = w.data() + (co * ws.c + ci) * k * k;
            for (int kh = 0; kh < k; ++kh)
                for (int kw = 0; kw < k; ++kw) {
                    const T wv = wp[kh * k + kw];
                    const int64_t dy = kh - pad.top, dx = kw - pad.left;
                    const int64_t i0 = std::max<int64_t>(0, -dy);
                    const int64_t i1 = std::min<int64_t>(oh, xs.h - dy);
                    const int64_t j0 = std::max<int64_t>(0, -dx);
                    const int64_t j1 = std::min<int64_t>(ow, xs.w - dx);
                    for (int64_t i = i0; i < i1; ++i) {
                        const T* xr = xp + (i + dy) * xs.w + dx;
                        T* yr = yp + i * ow;
                        for (int64_t j = j0; j < j1; ++j) yr[j] += wv * xr[j];
                    }
                }
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward_data_direct(const Tensor<T>& gout, const Tensor<T>& w,
                                      Shape in_shape, Pad pad) {
    const Shape gs = gout.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    Tensor<T> gx(in_shape, T(0));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bci = 0; bci < gs.b * in_shape.c; ++bci) {
        const int64_t b = bci / in_shape.c, ci = bci % in_shape.c;
        T* gxp = gx.data() + bci * in_shape.h * in_shape.w;
        for (int64_t co = 0; co < ws.b; ++co) {
            const T* gp = gout.data() + (b * gs.c + co) * gs.h * gs.w;
            const T* wp = w.data() + (co * ws.c + ci) * k * k;
            for (int kh = 0; kh < k; ++kh)
                for (int kw = 0; kw < k; ++kw) {
                    const T wv = wp[kh * k + kw];
                    const int64_t dy = kh - pad.top, dx = kw - pad.left;
                    const int64_t i0 = std::max<int64_t>(0, -dy);
                    const int64_t i1 = std::min<int64_t>(gs.h, in_shape.h - dy);
                    const int64_t j0 = std::max<int64_t>(0, -dx);
                    const int64_t j1 = std::min<int64_t>(gs.w, in_shape.w - dx);
                    for (int64_t i = i0; i < i1; ++i) {
                        const T* gr = gp + i * gs.w;
                        T* gxr = gxp + (i + dy) * in_shape.w + dx;
                        for (int64_t j = j0; j < j1; ++j) gxr[j] += wv * gr[j];
                    }
                }
        }
    }
    return gx;
}

template <typename T>
void conv2d_backward_weight_direct(const Tensor<T>& x, const Tensor<T>& gout,
                                   Pad pad, Tensor<T>& gw, Tensor<T>& gbias) {
    const Shape xs = x.shape(), gs = gout.shape();
    const int k = static_cast<int>(gw.shape().h);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t co = 0; co < gs.c; ++co) {
        for (int64_t b = 0; b < xs.b; ++b) {
            const T* gp = gout.data() + (b * gs.c + co) * gs.h * gs.w;
            for (int64_t ci = 0; ci < xs.c; ++ci) {
                const T* xp = x.data() + (b * xs.c + ci) * xs.h * xs.w;
                T* wp = gw.data() + (co * xs.c + ci) * k * k;
                for (int kh = 0; kh < k; ++kh)
                    for (int kw = 0; kw < k; ++kw) {
                        const int64_t dy = kh - pad.top, dx = kw - pad.left;
                        const int64_t i0 = std::max<int64_t>(0, -dy);
                        const int64_t i1 = std::min<int64_t>(gs.h, xs.h - dy);
                        const int64_t j0 = std::max<int64_t>(0, -dx);
                        const int64_t j1 = std::min<int64_t>(gs.w, xs.w - dx);
                        T acc = 0;
                        for (int64_t i = i0; i < i1; ++i) {
                            const T* gr = gp + i * gs.w;
                            const T* xr = xp + (i + dy) * xs.w + dx;
                            T row = 0;
#pragma omp simd reduction(+ : row)
                            for (int64_t j = j0; j < j1; ++j) row += gr[j] * xr[j];
                            acc += row;
                        }
                        wp[kh * k + kw] += acc;
                    }
            }
            if (!gbias.empty()) {
                T acc = 0;
                const int64_t n = gs.h * gs.w;
#pragma omp simd reduction(+ : acc)
                for (int64_t i = 0; i < n; ++i) acc += gp[i];
                gbias[co] += acc;
            }
        }
    }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                         int stride, Pad pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t oh = conv_out_dim(xs.h, k, stride, pad.top, pad.bottom);
    const int64_t ow = conv_out_dim(xs.w, k, stride, pad.left, pad.right);
    if (stride == 1 && k > 1 && oh * ow >= 1024) return conv2d_forward_direct(x, w, bias, pad);
    const int64_t K = xs.c * k * k, N = oh * ow;
    Tensor<T> y({xs.b, ws.b, oh, ow});

    const bool direct = (k == 1 && stride == 1 && pad == Pad{});
    std::vector<T> col;
    if (!direct) col.resize(static_cast<size_t>(K * N));

    for (int64_t b = 0; b < xs.b; ++b) {
        const T* src = x.data() + b * xs.c * xs.h * xs.w;
        const T* B;
        if (direct) {
            B = src;
        } else {
            im2col(col.data(), src, xs.c, xs.h, xs.w, k, stride, pad, oh, ow);
            B = col.data();
        }
        gemm_nn(y.data() + b * ws.b * N, w.data(), B, ws.b, K, N, false);
    }
    if (!bias.empty()) {
        T* yd = y.data();
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int64_t bc = 0; bc < xs.b * ws.b; ++bc) {
            T bv = bias[bc % ws.b];
            for (int64_t i = 0; i < N; ++i) yd[bc * N + i] += bv;
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& gout, const Tensor<T>& w,
                               Shape in_shape, int stride, Pad pad) {
    const Shape gs = gout.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    if (stride == 1 && k > 1 && gs.h * gs.w >= 1024)
        return conv2d_backward_data_direct(gout, w, in_shape, pad);
    const int64_t K = in_shape.c * k * k, N = gs.h * gs.w;
    Tensor<T> gx(in_shape, T(0));

    std::vector<T> wT(static_cast<size_t>(K * ws.b));
    transpose(wT.data(), w.data(), ws.b, K);  // [CiKK, Cout]
    std::vector<T> dcol(static_cast<size_t>(K * N));

    for (int64_t b = 0; b < gs.b; ++b) {
        gemm_nn(dcol.data(), wT.data(), gout.data() + b * ws.b * N, K, ws.b, N, false);
        col2im(dcol.data(), gx.data() + b * in_shape.c * in_shape.h * in_shape.w,
               in_shape.c, in_shape.h, in_shape.w, k, stride, pad, gs.h, gs.w);
    }
    return gx;
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gout,
                            int stride, Pad pad, Tensor<T>& gw, Tensor<T>& gbias) {
    const Shape xs = x.shape(), gs = gout.shape();
    const int k = static_cast<int>((gw.shape()).h);
    if (stride == 1 && k > 1 && gs.h * gs.w >= 1024) {
        conv2d_backward_weight_direct(x, gout, pad, gw, gbias);
        return;
    }
    const int64_t K = xs.c * k * k, N = gs.h * gs.w;

    std::vector<T> col(static_cast<size_t>(K * N));
    std::vector<T> colT(static_cast<size_t>(K * N));
    for (int64_t b = 0; b < xs.b; ++b) {
        im2col(col.data(), x.data() + b * xs.c * xs.h * xs.w, xs.c, xs.h, xs.w,
               k, stride, pad, gs.h, gs.w);
        transpose(colT.data(), col.data(), K, N);  // [N, K]
        gemm_nn(gw.data(), gout.data() + b * gs.c * N, colT.data(), gs.c, N, K, true);
    }
    if (!gbias.empty()) {
        for (int64_t b = 0; b < gs.b; ++b)
            for (int64_t c = 0; c < gs.c; ++c) {
                T acc = 0;
                const T* gp = gout.data() + (b * gs.c + c) * N;
                for (int64_t i = 0; i < N; ++i) acc += gp[i];
                gbias[c] += acc;
            }
    }
}

// ---- conv_transpose2d ----------------------------------------------------
// weight [Cin, Cout, k, k]. Forward is the adjoint of conv2d's forward.

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                   int stride, Pad pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t oh = convt_out_dim(xs.h, k, stride, pad.top, pad.bottom);
    const int64_t ow = convt_out_dim(xs.w, k, stride, pad.left, pad.right);
    const int64_t CoKK = ws.c * k * k, N = xs.h * xs.w;
    Tensor<T> y({xs.b, ws.c, oh, ow}, T(0));

    // view weight as [Ci, Co*k*k] and transpose to [Co*k*k, Ci]
    std::vector<T> wT(static_cast<size_t>(CoKK * xs.c));
    transpose(wT.data(), w.data(), xs.c, CoKK);
    std::vector<T> col(static_cast<size_t>(CoKK * N));

    for (int64_t b = 0; b < xs.b; ++b) {
        gemm_nn(col.data(), wT.data(), x.data() + b * xs.c * N, CoKK, xs.c, N, false);
        col2im(col.data(), y.data() + b * ws.c * oh * ow, ws.c, oh, ow, k, stride, pad, xs.h, xs.w);
    }
    if (!bias.empty()) {
        T* yd = y.data();
        const int64_t ohw = oh * ow;
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int64_t bc = 0; bc < xs.b * ws.c; ++bc) {
            T bv = bias[bc % ws.c];
            for (int64_t i = 0; i < ohw; ++i) yd[bc * ohw + i] += bv;
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv_transpose2d_backward_data(const Tensor<T>& gout, const Tensor<T>& w,
                                         Shape in_shape, int stride, Pad pad) {
    const Shape gs = gout.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t CoKK = ws.c * k * k, N = in_shape.h * in_shape.w;
    Tensor<T> gx(in_shape);

    std::vector<T> col(static_cast<size_t>(CoKK * N));
    for (int64_t b = 0; b < gs.b; ++b) {
        im2col(col.data(), gout.data() + b * gs.c * gs.h * gs.w, gs.c, gs.h, gs.w,
               k, stride, pad, in_shape.h, in_shape.w);
        gemm_nn(gx.data() + b * in_shape.c * N, w.data(), col.data(), in_shape.c, CoKK, N, false);
    }
    return gx;
}

template <typename T>
void conv_transpose2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gout,
                                      int stride, Pad pad, Tensor<T>& gw, Tensor<T>& gbias) {
    const Shape xs = x.shape(), gs = gout.shape();
    const int k = static_cast<int>(gw.shape().h);
    const int64_t CoKK = gs.c * k * k, N = xs.h * xs.w;

    std::vector<T> col(static_cast<size_t>(CoKK * N));
    std::vector<T> colT(static_cast<size_t>(CoKK * N));
    for (int64_t b = 0; b < xs.b; ++b) {
        im2col(col.data(), gout.data() + b * gs.c * gs.h * gs.w, gs.c, gs.h, gs.w,
               k, stride, pad, xs.h, xs.w);
        transpose(colT.data(), col.data(), CoKK, N);
        gemm_nn(gw.data(), x.data() + b * xs.c * N, colT.data(), xs.c, N, CoKK, true);
    }
    if (!gbias.empty()) {
        const int64_t ohw = gs.h * gs.w;
        for (int64_t b = 0; b < gs.b; ++b)
            for (int64_t c = 0; c < gs.c; ++c) {
                T acc = 0;
                const T* gp = gout.data() + (b * gs.c + c) * ohw;
                for (int64_t i = 0; i < ohw; ++i) acc += gp[i];
                gbias[c] += acc;
            }
    }
}

// ---- avg_pool2d (k = 2, stride = 2) ---------------------------------------

template <typename T>
Tensor<T> avg_pool2d_forward(const Tensor<T>& x) {
    const Shape s = x.shape();
    const int64_t oh = s.h / 2, ow = s.w / 2;
    Tensor<T> y({s.b, s.c, oh, ow});
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const T* src = x.data() + bc * s.h * s.w;
        T* dst = y.data() + bc * oh * ow;
        for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j)
                dst[i * ow + j] = (src[2 * i * s.w + 2 * j] + src[2 * i * s.w + 2 * j + 1] +
                                   src[(2 * i + 1) * s.w + 2 * j] + src[(2 * i + 1) * s.w + 2 * j + 1]) / T(4);
    }
    return y;
}

template <typename T>
Tensor<T> avg_pool2d_backward(const Tensor<T>& gout, Shape in_shape) {
    const Shape gs = gout.shape();
    Tensor<T> gx(in_shape);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < gs.b * gs.c; ++bc) {
        const T* src = gout.data() + bc * gs.h * gs.w;
        T* dst = gx.data() + bc * in_shape.h * in_shape.w;
        for (int64_t i = 0; i < gs.h; ++i)
            for (int64_t j = 0; j < gs.w; ++j) {
                T g = src[i * gs.w + j] / T(4);
                dst[2 * i * in_shape.w + 2 * j] = g;
                dst[2 * i * in_shape.w + 2 * j + 1] = g;
                dst[(2 * i + 1) * in_shape.w + 2 * j] = g;
                dst[(2 * i + 1) * in_shape.w + 2 * j + 1] = g;
            }
    }
    return gx;
}

// ---- per-location neighborhood filtering -----------------------------------
// kernels [B, G*N*N, H, W]; G in {1, C}.

template <typename T>
Tensor<T> pixel_filter_forward(const Tensor<T>& x, const Tensor<T>& k,
                               int n, int groups, Boundary boundary) {
    const Shape s = x.shape();
    const int r = n / 2;
    const int64_t hw = s.h * s.w;
    Tensor<T> y(s, T(0));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const int64_t b = bc / s.c, c = bc % s.c;
        const int64_t g = groups == 1 ? 0 : c;
        const T* xp = x.data() + bc * hw;
        const T* kb = k.data() + (b * k.shape().c + g * n * n) * hw;
        T* yp = y.data() + bc * hw;
        // tap-outer: each tap is a vectorizable shifted multiply-add
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const T* kp = kb + ((dy + r) * n + dx + r) * hw;
                for (int64_t i = 0; i < s.h; ++i) {
                    int64_t qi = i + dy;
                    if (boundary == Boundary::Replicate)
                        qi = std::clamp<int64_t>(qi, 0, s.h - 1);
                    else if (qi < 0 || qi >= s.h)
                        continue;
                    const T* xr = xp + qi * s.w;
                    T* yr = yp + i * s.w;
                    const T* kr = kp + i * s.w;
                    const int64_t j0 = std::clamp<int64_t>(-dx, 0, s.w);
                    const int64_t j1 = std::clamp<int64_t>(s.w - dx, 0, s.w);
                    if (boundary == Boundary::Replicate) {
                        for (int64_t j = 0; j < j0; ++j) yr[j] += kr[j] * xr[0];
                        for (int64_t j = std::max(j0, j1); j < s.w; ++j)
                            yr[j] += kr[j] * xr[s.w - 1];
                    }
                    for (int64_t j = j0; j < j1; ++j) yr[j] += kr[j] * xr[j + dx];
                }
            }
    }
    return y;
}

// gradient w.r.t. x: scatter, one (b,c) slice per thread
template <typename T>
Tensor<T> pixel_filter_backward_data(const Tensor<T>& gout, const Tensor<T>& k,
                                     int n, int groups, Boundary boundary) {
    const Shape s = gout.shape();
    const int r = n / 2;
    const int64_t hw = s.h * s.w;
    Tensor<T> gx(s, T(0));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const int64_t b = bc / s.c, c = bc % s.c;
        const int64_t g = groups == 1 ? 0 : c;
        const T* gp = gout.data() + bc * hw;
        const T* kp = k.data() + (b * k.shape().c + g * n * n) * hw;
        T* gxp = gx.data() + bc * hw;
        for (int64_t i = 0; i < s.h; ++i)
            for (int64_t j = 0; j < s.w; ++j) {
                T gv = gp[i * s.w + j];
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        int64_t qi = i + dy, qj = j + dx;
                        if (boundary == Boundary::Replicate) {
                            qi = std::clamp<int64_t>(qi, 0, s.h - 1);
                            qj = std::clamp<int64_t>(qj, 0, s.w - 1);
                        } else if (qi < 0 || qi >= s.h || qj < 0 || qj >= s.w) {
                            continue;
                        }
                        gxp[qi * s.w + qj] += kp[((dy + r) * n + dx + r) * hw + i * s.w + j] * gv;
                    }
            }
    }
    return gx;
}

// gradient w.r.t. the kernel field: gather over the channels of each group
template <typename T>
Tensor<T> pixel_filter_backward_kernels(const Tensor<T>& x, const Tensor<T>& gout,
                                        Shape k_shape, int n, int groups, Boundary boundary) {
    const Shape s = x.shape();
    const int r = n / 2;
    const int64_t hw = s.h * s.w;
    const int64_t cpg = s.c / (groups == 1 ? 1 : groups);  // channels per group
    Tensor<T> gk(k_shape, T(0));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bg = 0; bg < s.b * (groups == 1 ? 1 : groups); ++bg) {
        const int64_t ngroups = groups == 1 ? 1 : groups;
        const int64_t b = bg / ngroups, g = bg % ngroups;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                T* gkp = gk.data() + (b * k_shape.c + g * n * n + (dy + r) * n + dx + r) * hw;
                for (int64_t cc = 0; cc < cpg; ++cc) {
                    const int64_t c = g * cpg + cc;
                    const T* xp = x.data() + (b * s.c + c) * hw;
                    const T* gp = gout.data() + (b * s.c + c) * hw;
                    for (int64_t i = 0; i < s.h; ++i)
                        for (int64_t j = 0; j < s.w; ++j) {
                            int64_t qi = i + dy, qj = j + dx;
                            T xv;
                            if (boundary == Boundary::Replicate) {
                                qi = std::clamp<int64_t>(qi, 0, s.h - 1);
                                qj = std::clamp<int64_t>(qj, 0, s.w - 1);
                                xv = xp[qi * s.w + qj];
                            } else {
                                xv = (qi < 0 || qi >= s.h || qj < 0 || qj >= s.w) ? T(0)
                                                                                  : xp[qi * s.w + qj];
                            }
                            gkp[i * s.w + j] += xv * gp[i * s.w + j];
                        }
                }
            }
    }
    return gk;
}

// ---- instance normalization ------------------------------------------------

template <typename T>
struct InstanceNormStats {
    std::vector<T> mean, invstd;  // one entry per (b, c)
};

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                                T eps, InstanceNormStats<T>& stats) {
    const Shape s = x.shape();
    const int64_t hw = s.h * s.w;
    Tensor<T> y(s);
    stats.mean.assign(static_cast<size_t>(s.b * s.c), T(0));
    stats.invstd.assign(static_cast<size_t>(s.b * s.c), T(0));
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const int64_t c = bc % s.c;
        const T* xp = x.data() + bc * hw;
        T* yp = y.data() + bc * hw;
        T mean = 0;
        for (int64_t i = 0; i < hw; ++i) mean += xp[i];
        mean /= static_cast<T>(hw);
        T var = 0;
        for (int64_t i = 0; i < hw; ++i) var += (xp[i] - mean) * (xp[i] - mean);
        var /= static_cast<T>(hw);
        T invstd = T(1) / std::sqrt(var + eps);
        stats.mean[static_cast<size_t>(bc)] = mean;
        stats.invstd[static_cast<size_t>(bc)] = invstd;
        const T g = gamma[c], b2 = beta[c];
        for (int64_t i = 0; i < hw; ++i) yp[i] = (xp[i] - mean) * invstd * g + b2;
    }
    return y;
}

template <typename T>
void instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gout,
                            const Tensor<T>& gamma, const InstanceNormStats<T>& stats,
                            Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta) {
    const Shape s = x.shape();
    const int64_t hw = s.h * s.w;
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const int64_t c = bc % s.c;
        const T* xp = x.data() + bc * hw;
        const T* gp = gout.data() + bc * hw;
        T* gxp = gx.data() + bc * hw;
        const T mean = stats.mean[static_cast<size_t>(bc)];
        const T invstd = stats.invstd[static_cast<size_t>(bc)];
        T gsum = 0, gxhat = 0;
        for (int64_t i = 0; i < hw; ++i) {
            gsum += gp[i];
            gxhat += gp[i] * (xp[i] - mean) * invstd;
        }
        const T inv_n = T(1) / static_cast<T>(hw);
        const T gscale = gamma[c] * invstd;
        for (int64_t i = 0; i < hw; ++i) {
            T xhat = (xp[i] - mean) * invstd;
            gxp[i] = gscale * (gp[i] - gsum * inv_n - xhat * gxhat * inv_n);
        }
    }
    // parameter grads accumulate serially in a fixed order
    for (int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const int64_t c = bc % s.c;
        const T* xp = x.data() + bc * hw;
        const T* gp = gout.data() + bc * hw;
        const T mean = stats.mean[static_cast<size_t>(bc)];
        const T invstd = stats.invstd[static_cast<size_t>(bc)];
        T dg = 0, db = 0;
        for (int64_t i = 0; i < hw; ++i) {
            dg += gp[i] * (xp[i] - mean) * invstd;
            db += gp[i];
        }
        ggamma[c] += dg;
        gbeta[c] += db;
    }
}

// ---- tap softmax -------------------------------------------------------

template <typename T>
Tensor<T> tap_softmax_forward(const Tensor<T>& raw, int n2) {
    const Shape s = raw.shape();
    const int64_t groups = s.c / n2;
    const int64_t hw = s.h * s.w;
    Tensor<T> y(s);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bg = 0; bg < s.b * groups; ++bg) {
        const int64_t b = bg / groups, g = bg % groups;
        const T* rp = raw.data() + (b * s.c + g * n2) * hw;
        T* yp = y.data() + (b * s.c + g * n2) * hw;
        for (int64_t i = 0; i < hw; ++i) {
            T m = rp[i];
            for (int t = 1; t < n2; ++t) m = std::max(m, rp[t * hw + i]);
            T sum = 0;
            for (int t = 0; t < n2; ++t) {
                T e = std::exp(rp[t * hw + i] - m);
                yp[t * hw + i] = e;
                sum += e;
            }
            T inv = T(1) / sum;
            for (int t = 0; t < n2; ++t) yp[t * hw + i] *= inv;
        }
    }
    return y;
}

template <typename T>
Tensor<T> tap_softmax_backward(const Tensor<T>& y, const Tensor<T>& gout, int n2) {
    const Shape s = y.shape();
    const int64_t groups = s.c / n2;
    const int64_t hw = s.h * s.w;
    Tensor<T> gx(s);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t bg = 0; bg < s.b * groups; ++bg) {
        const int64_t b = bg / groups, g = bg % groups;
        const T* yp = y.data() + (b * s.c + g * n2) * hw;
        const T* gp = gout.data() + (b * s.c + g * n2) * hw;
        T* gxp = gx.data() + (b * s.c + g * n2) * hw;
        for (int64_t i = 0; i < hw; ++i) {
            T dot = 0;
            for (int t = 0; t < n2; ++t) dot += gp[t * hw + i] * yp[t * hw + i];
            for (int t = 0; t < n2; ++t) gxp[t * hw + i] = yp[t * hw + i] * (gp[t * hw + i] - dot);
        }
    }
    return gx;
}

}  // namespace kern
}  // namespace misf
