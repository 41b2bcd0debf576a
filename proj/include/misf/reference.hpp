#pragma once

// Naive serial reference kernels. These spell out the operator definitions
// with plain nested loops and are kept as the oracle for the fast OpenMP
// implementations (tests compare both paths; bench_kernels times them).

#include "misf/kernel_types.hpp"
#include "misf/tensor.hpp"

namespace misf::ref {

// weight [Cout, Cin, k, k]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride, Pad pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t oh = conv_out_dim(xs.h, k, stride, pad.top, pad.bottom);
    const int64_t ow = conv_out_dim(xs.w, k, stride, pad.left, pad.right);
    Tensor<T> y({xs.b, ws.b, oh, ow});
    for (int64_t b = 0; b < xs.b; ++b)
        for (int64_t co = 0; co < ws.b; ++co)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    T acc = bias.empty() ? T(0) : bias[co];
                    for (int64_t ci = 0; ci < xs.c; ++ci)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                int64_t ih = i * stride - pad.top + kh;
                                int64_t iw = j * stride - pad.left + kw;
                                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                                acc += x.at(b, ci, ih, iw) * w.at(co, ci, kh, kw);
                            }
                    y.at(b, co, i, j) = acc;
                }
    return y;
}

// gradient of conv2d w.r.t. its input (scatter form of the definition)
template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& gout, const Tensor<T>& w,
                               Shape in_shape, int stride, Pad pad) {
    const Shape gs = gout.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    Tensor<T> gx(in_shape, T(0));
    for (int64_t b = 0; b < gs.b; ++b)
        for (int64_t co = 0; co < ws.b; ++co)
            for (int64_t i = 0; i < gs.h; ++i)
                for (int64_t j = 0; j < gs.w; ++j) {
                    T g = gout.at(b, co, i, j);
                    for (int64_t ci = 0; ci < in_shape.c; ++ci)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                int64_t ih = i * stride - pad.top + kh;
                                int64_t iw = j * stride - pad.left + kw;
                                if (ih < 0 || ih >= in_shape.h || iw < 0 || iw >= in_shape.w) continue;
                                gx.at(b, ci, ih, iw) += g * w.at(co, ci, kh, kw);
                            }
                }
    return gx;
}

// weight [Cin, Cout, k, k]; scatter form of the transposed-convolution definition
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           int stride, Pad pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const int k = static_cast<int>(ws.h);
    const int64_t oh = convt_out_dim(xs.h, k, stride, pad.top, pad.bottom);
    const int64_t ow = convt_out_dim(xs.w, k, stride, pad.left, pad.right);
    Tensor<T> y({xs.b, ws.c, oh, ow});
    if (!bias.empty())
        for (int64_t b = 0; b < xs.b; ++b)
            for (int64_t co = 0; co < ws.c; ++co)
                for (int64_t i = 0; i < oh; ++i)
                    for (int64_t j = 0; j < ow; ++j) y.at(b, co, i, j) = bias[co];
    for (int64_t b = 0; b < xs.b; ++b)
        for (int64_t ci = 0; ci < xs.c; ++ci)
            for (int64_t i = 0; i < xs.h; ++i)
                for (int64_t j = 0; j < xs.w; ++j) {
                    T v = x.at(b, ci, i, j);
                    for (int64_t co = 0; co < ws.c; ++co)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                int64_t ohh = i * stride - pad.top + kh;
                                int64_t oww = j * stride - pad.left + kw;
                                if (ohh < 0 || ohh >= oh || oww < 0 || oww >= ow) continue;
                                y.at(b, co, ohh, oww) += v * w.at(ci, co, kh, kw);
                            }
                }
    return y;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x) {
    const Shape s = x.shape();
    Tensor<T> y({s.b, s.c, s.h / 2, s.w / 2});
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t i = 0; i < s.h / 2; ++i)
                for (int64_t j = 0; j < s.w / 2; ++j)
                    y.at(b, c, i, j) =
                        (x.at(b, c, 2 * i, 2 * j) + x.at(b, c, 2 * i, 2 * j + 1) +
                         x.at(b, c, 2 * i + 1, 2 * j) + x.at(b, c, 2 * i + 1, 2 * j + 1)) / T(4);
    return y;
}

// Per-location neighborhood filtering, the definition written out directly:
// out[b,c,p] = sum over the N*N neighborhood q of k_p[q-p] * x[b,c,q].
// kernels [B, G*N*N, H, W], group g = c for G == C, g = 0 for G == 1.
template <typename T>
Tensor<T> pixel_filter(const Tensor<T>& x, const Tensor<T>& kernels,
                       int n, int groups, Boundary boundary) {
    const Shape s = x.shape();
    const int r = n / 2;
    Tensor<T> y(s);
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c) {
            int64_t g = groups == 1 ? 0 : c;
            for (int64_t i = 0; i < s.h; ++i)
                for (int64_t j = 0; j < s.w; ++j) {
                    T acc = 0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            int64_t qi = i + dy, qj = j + dx;
                            T xv;
                            if (boundary == Boundary::Replicate) {
                                qi = qi < 0 ? 0 : (qi >= s.h ? s.h - 1 : qi);
                                qj = qj < 0 ? 0 : (qj >= s.w ? s.w - 1 : qj);
                                xv = x.at(b, c, qi, qj);
                            } else {
                                xv = (qi < 0 || qi >= s.h || qj < 0 || qj >= s.w) ? T(0)
                                                                                  : x.at(b, c, qi, qj);
                            }
                            int64_t tap = (dy + r) * n + (dx + r);
                            acc += kernels.at(b, g * n * n + tap, i, j) * xv;
                        }
                    y.at(b, c, i, j) = acc;
                }
        }
    return y;
}

// Softmax across the N*N tap axis, independently per (b, g, h, w).
template <typename T>
Tensor<T> tap_softmax(const Tensor<T>& raw, int n2) {
    const Shape s = raw.shape();
    const int64_t groups = s.c / n2;
    Tensor<T> y(s);
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t i = 0; i < s.h; ++i)
                for (int64_t j = 0; j < s.w; ++j) {
                    T m = raw.at(b, g * n2, i, j);
                    for (int t = 1; t < n2; ++t) m = std::max(m, raw.at(b, g * n2 + t, i, j));
                    T sum = 0;
                    for (int t = 0; t < n2; ++t) sum += std::exp(raw.at(b, g * n2 + t, i, j) - m);
                    for (int t = 0; t < n2; ++t)
                        y.at(b, g * n2 + t, i, j) = std::exp(raw.at(b, g * n2 + t, i, j) - m) / sum;
                }
    return y;
}

}  // namespace misf::ref
