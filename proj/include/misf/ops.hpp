#pragma once

// Differentiable tensor ops recorded on the tape. Forward math lives in
// misf::kern; each op wires the matching backward closure.

#include <cmath>

#include "misf/kernels.hpp"
#include "misf/tape.hpp"

namespace misf::ops {

// weight [Cout, Cin, k, k]
template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, int stride, Pad pad) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    check(wv.shape().h == wv.shape().w, "conv2d: non-square kernel");
    check(xv.shape().c == wv.shape().c,
          "conv2d: input channels " + xv.shape().str() + " vs weight " + wv.shape().str());
    check(t.value(b).size() == wv.shape().b, "conv2d: bias size mismatch");
    Tensor<T> y = kern::conv2d_forward(xv, wv, t.value(b), stride, pad);
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x, w, b},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      if (tt.wants_grad(x))
                          tt.accumulate(x, kern::conv2d_backward_data(g, tt.value(w),
                                                                      tt.value(x).shape(), stride, pad));
                      if (tt.wants_grad(w) || tt.wants_grad(b)) {
                          Tensor<T> gw(tt.value(w).shape(), T(0));
                          Tensor<T> gb(tt.value(b).shape(), T(0));
                          kern::conv2d_backward_weight(tt.value(x), g, stride, pad, gw, gb);
                          tt.accumulate(w, gw);
                          tt.accumulate(b, gb);
                      }
                  },
                  "conv2d");
}

// weight [Cin, Cout, k, k]
template <typename T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, int stride, Pad pad) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    check(wv.shape().h == wv.shape().w, "conv_transpose2d: non-square kernel");
    check(xv.shape().c == wv.shape().b,
          "conv_transpose2d: input channels " + xv.shape().str() + " vs weight " + wv.shape().str());
    check(t.value(b).size() == wv.shape().c, "conv_transpose2d: bias size mismatch");
    Tensor<T> y = kern::conv_transpose2d_forward(xv, wv, t.value(b), stride, pad);
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x, w, b},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      if (tt.wants_grad(x))
                          tt.accumulate(x, kern::conv_transpose2d_backward_data(
                                               g, tt.value(w), tt.value(x).shape(), stride, pad));
                      if (tt.wants_grad(w) || tt.wants_grad(b)) {
                          Tensor<T> gw(tt.value(w).shape(), T(0));
                          Tensor<T> gb(tt.value(b).shape(), T(0));
                          kern::conv_transpose2d_backward_weight(tt.value(x), g, stride, pad, gw, gb);
                          tt.accumulate(w, gw);
                          tt.accumulate(b, gb);
                      }
                  },
                  "conv_transpose2d");
}

template <typename T>
Var avg_pool2d(Tape<T>& t, Var x) {
    const Shape s = t.value(x).shape();
    check(s.h % 2 == 0 && s.w % 2 == 0, "avg_pool2d: spatial dims must be even, got " + s.str());
    Var self{static_cast<int>(t.size())};
    return t.make(kern::avg_pool2d_forward(t.value(x)), {x},
                  [=](Tape<T>& tt) {
                      tt.accumulate(x, kern::avg_pool2d_backward(tt.grad(self), tt.value(x).shape()));
                  },
                  "avg_pool2d");
}

enum class Act { Relu, LeakyRelu, Tanh, Sigmoid, Softplus };

template <typename T>
Var activation(Tape<T>& t, Var x, Act kind, T slope = T(0.2)) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> y(xv.shape());
    const int64_t n = xv.size();
    switch (kind) {
        case Act::Relu:
            for (int64_t i = 0; i < n; ++i) y[i] = xv[i] > 0 ? xv[i] : T(0);
            break;
        case Act::LeakyRelu:
            for (int64_t i = 0; i < n; ++i) y[i] = xv[i] > 0 ? xv[i] : slope * xv[i];
            break;
        case Act::Tanh:
            for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(xv[i]);
            break;
        case Act::Sigmoid:
            for (int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
            break;
        case Act::Softplus:
            // log(1 + e^x), overflow-safe
            for (int64_t i = 0; i < n; ++i)
                y[i] = std::max(xv[i], T(0)) + std::log1p(std::exp(-std::abs(xv[i])));
            break;
    }
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      const Tensor<T>& xin = tt.value(x);
                      const Tensor<T>& yout = tt.value(self);
                      Tensor<T> gx(xin.shape());
                      for (int64_t i = 0; i < xin.size(); ++i) {
                          T d = T(0);
                          switch (kind) {
                              case Act::Relu: d = xin[i] > 0 ? T(1) : T(0); break;
                              case Act::LeakyRelu: d = xin[i] > 0 ? T(1) : slope; break;
                              case Act::Tanh: d = T(1) - yout[i] * yout[i]; break;
                              case Act::Sigmoid: d = yout[i] * (T(1) - yout[i]); break;
                              case Act::Softplus: d = T(1) / (T(1) + std::exp(-xin[i])); break;
                          }
                          gx[i] = g[i] * d;
                      }
                      tt.accumulate(x, gx);
                  },
                  "activation");
}

template <typename T>
Var concat_channels(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    const Shape as = av.shape(), bs = bv.shape();
    check(as.b == bs.b && as.h == bs.h && as.w == bs.w,
          "concat_channels: spatial mismatch " + as.str() + " vs " + bs.str());
    Tensor<T> y({as.b, as.c + bs.c, as.h, as.w});
    const int64_t hw = as.h * as.w;
    for (int64_t n = 0; n < as.b; ++n) {
        std::copy(av.data() + n * as.c * hw, av.data() + (n + 1) * as.c * hw,
                  y.data() + n * (as.c + bs.c) * hw);
        std::copy(bv.data() + n * bs.c * hw, bv.data() + (n + 1) * bs.c * hw,
                  y.data() + (n * (as.c + bs.c) + as.c) * hw);
    }
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {a, b},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      const int64_t hw2 = as.h * as.w;
                      if (tt.wants_grad(a)) {
                          Tensor<T> ga(as);
                          for (int64_t n = 0; n < as.b; ++n)
                              std::copy(g.data() + n * (as.c + bs.c) * hw2,
                                        g.data() + (n * (as.c + bs.c) + as.c) * hw2,
                                        ga.data() + n * as.c * hw2);
                          tt.accumulate(a, ga);
                      }
                      if (tt.wants_grad(b)) {
                          Tensor<T> gb(bs);
                          for (int64_t n = 0; n < bs.b; ++n)
                              std::copy(g.data() + (n * (as.c + bs.c) + as.c) * hw2,
                                        g.data() + (n + 1) * (as.c + bs.c) * hw2,
                                        gb.data() + n * bs.c * hw2);
                          tt.accumulate(b, gb);
                      }
                  },
                  "concat_channels");
}

template <typename T>
Var instance_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    kern::InstanceNormStats<T> stats;
    Tensor<T> y = kern::instance_norm_forward(t.value(x), t.value(gamma), t.value(beta), eps, stats);
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x, gamma, beta},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      Tensor<T> gx(tt.value(x).shape(), T(0));
                      Tensor<T> gg(tt.value(gamma).shape(), T(0));
                      Tensor<T> gb(tt.value(beta).shape(), T(0));
                      kern::instance_norm_backward(tt.value(x), g, tt.value(gamma), stats, gx, gg, gb);
                      tt.accumulate(x, gx);
                      tt.accumulate(gamma, gg);
                      tt.accumulate(beta, gb);
                  },
                  "instance_norm");
}

// softmax across the N*N tap axis per (b, group, h, w)
template <typename T>
Var tap_softmax(Tape<T>& t, Var raw, int n2) {
    const Shape s = t.value(raw).shape();
    check(s.c % n2 == 0, "tap_softmax: channel count " + std::to_string(s.c) +
                             " not divisible by N^2 = " + std::to_string(n2));
    Var self{static_cast<int>(t.size())};
    return t.make(kern::tap_softmax_forward(t.value(raw), n2), {raw},
                  [=](Tape<T>& tt) {
                      tt.accumulate(raw, kern::tap_softmax_backward(tt.value(self), tt.grad(self), n2));
                  },
                  "tap_softmax");
}

// per-location neighborhood filtering; kernels [B, G*N*N, H, W]
template <typename T>
Var pixel_filter(Tape<T>& t, Var x, Var k, const FilterConfig& cfg) {
    const Shape xs = t.value(x).shape(), ks = t.value(k).shape();
    check(cfg.n >= 1 && cfg.n % 2 == 1, "pixel_filter: N must be odd and >= 1");
    check(cfg.groups == 1 || cfg.groups == xs.c,
          "pixel_filter: groups must be 1 or C, got " + std::to_string(cfg.groups));
    check(ks.b == xs.b && ks.h == xs.h && ks.w == xs.w,
          "pixel_filter: kernel field spatial mismatch " + ks.str() + " vs " + xs.str());
    check(ks.c == int64_t(cfg.groups) * cfg.n * cfg.n,
          "pixel_filter: kernel field channels " + std::to_string(ks.c) + " != G*N^2");
    const int n = cfg.n, groups = cfg.groups;
    const Boundary boundary = cfg.boundary;
    Var self{static_cast<int>(t.size())};
    return t.make(kern::pixel_filter_forward(t.value(x), t.value(k), n, groups, boundary), {x, k},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      if (tt.wants_grad(x))
                          tt.accumulate(x, kern::pixel_filter_backward_data(g, tt.value(k), n,
                                                                            groups, boundary));
                      if (tt.wants_grad(k))
                          tt.accumulate(k, kern::pixel_filter_backward_kernels(
                                               tt.value(x), g, tt.value(k).shape(), n, groups, boundary));
                  },
                  "pixel_filter");
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    check(av.shape() == bv.shape(), "add: shape mismatch");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {a, b},
                  [=](Tape<T>& tt) {
                      tt.accumulate(a, tt.grad(self));
                      tt.accumulate(b, tt.grad(self));
                  },
                  "add");
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    check(av.shape() == bv.shape(), "sub: shape mismatch");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] - bv[i];
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {a, b},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      tt.accumulate(a, g);
                      if (tt.wants_grad(b)) {
                          Tensor<T> gb(g.shape());
                          for (int64_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
                          tt.accumulate(b, gb);
                      }
                  },
                  "sub");
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    check(av.shape() == bv.shape(), "mul: shape mismatch");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {a, b},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      if (tt.wants_grad(a)) {
                          Tensor<T> ga(g.shape());
                          const Tensor<T>& bb = tt.value(b);
                          for (int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bb[i];
                          tt.accumulate(a, ga);
                      }
                      if (tt.wants_grad(b)) {
                          Tensor<T> gb(g.shape());
                          const Tensor<T>& aa = tt.value(a);
                          for (int64_t i = 0; i < g.size(); ++i) gb[i] = g[i] * aa[i];
                          tt.accumulate(b, gb);
                      }
                  },
                  "mul");
}

// y = alpha * x + beta
template <typename T>
Var affine(Tape<T>& t, Var x, T alpha, T beta) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) y[i] = alpha * xv[i] + beta;
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      Tensor<T> gx(g.shape());
                      for (int64_t i = 0; i < g.size(); ++i) gx[i] = alpha * g[i];
                      tt.accumulate(x, gx);
                  },
                  "affine");
}

template <typename T>
Var clamp01(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) y[i] = std::clamp(xv[i], T(0), T(1));
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      const Tensor<T>& xin = tt.value(x);
                      Tensor<T> gx(g.shape());
                      for (int64_t i = 0; i < g.size(); ++i)
                          gx[i] = (xin[i] >= T(0) && xin[i] <= T(1)) ? g[i] : T(0);
                      tt.accumulate(x, gx);
                  },
                  "clamp01");
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Var sum(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    T acc = 0;
    for (int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    Var self{static_cast<int>(t.size())};
    return t.make(Tensor<T>({1, 1, 1, 1}, acc), {x},
                  [=](Tape<T>& tt) {
                      T g = tt.grad(self)[0];
                      tt.accumulate(x, Tensor<T>(tt.value(x).shape(), g));
                  },
                  "sum");
}

template <typename T>
Var mean(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    T acc = 0;
    for (int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const T inv_n = T(1) / static_cast<T>(xv.size());
    Var self{static_cast<int>(t.size())};
    return t.make(Tensor<T>({1, 1, 1, 1}, acc * inv_n), {x},
                  [=](Tape<T>& tt) {
                      T g = tt.grad(self)[0] * inv_n;
                      tt.accumulate(x, Tensor<T>(tt.value(x).shape(), g));
                  },
                  "mean");
}

// mean(|x|); the subgradient at 0 is 0
template <typename T>
Var mean_abs(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    T acc = 0;
    for (int64_t i = 0; i < xv.size(); ++i) acc += std::abs(xv[i]);
    const T inv_n = T(1) / static_cast<T>(xv.size());
    Var self{static_cast<int>(t.size())};
    return t.make(Tensor<T>({1, 1, 1, 1}, acc * inv_n), {x},
                  [=](Tape<T>& tt) {
                      T g = tt.grad(self)[0] * inv_n;
                      const Tensor<T>& xin = tt.value(x);
                      Tensor<T> gx(xin.shape());
                      for (int64_t i = 0; i < xin.size(); ++i)
                          gx[i] = xin[i] > 0 ? g : (xin[i] < 0 ? -g : T(0));
                      tt.accumulate(x, gx);
                  },
                  "mean_abs");
}

// mean of |x| over locations where mask = 1; mask is [B,1,H,W], broadcast
// over x's channels
template <typename T>
Var masked_mean_abs(Tape<T>& t, Var x, Var mask) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& mv = t.value(mask);
    const Shape xs = xv.shape(), ms = mv.shape();
    check(ms.b == xs.b && ms.c == 1 && ms.h == xs.h && ms.w == xs.w,
          "masked_mean_abs: mask must be [B,1,H,W] matching x");
    const int64_t hw = xs.h * xs.w;
    T acc = 0, wsum = 0;
    for (int64_t i = 0; i < mv.size(); ++i) wsum += mv[i];
    wsum *= static_cast<T>(xs.c);
    for (int64_t b = 0; b < xs.b; ++b)
        for (int64_t c = 0; c < xs.c; ++c)
            for (int64_t i = 0; i < hw; ++i)
                acc += std::abs(xv[(b * xs.c + c) * hw + i]) * mv[b * hw + i];
    const T denom = wsum > 0 ? wsum : T(1);
    Var self{static_cast<int>(t.size())};
    return t.make(Tensor<T>({1, 1, 1, 1}, acc / denom), {x, mask},
                  [=](Tape<T>& tt) {
                      T g = tt.grad(self)[0] / denom;
                      const Tensor<T>& xin = tt.value(x);
                      const Tensor<T>& m = tt.value(mask);
                      Tensor<T> gx(xin.shape());
                      for (int64_t b = 0; b < xs.b; ++b)
                          for (int64_t c = 0; c < xs.c; ++c)
                              for (int64_t i = 0; i < hw; ++i) {
                                  int64_t idx = (b * xs.c + c) * hw + i;
                                  T s = xin[idx] > 0 ? T(1) : (xin[idx] < 0 ? T(-1) : T(0));
                                  gx[idx] = g * s * m[b * hw + i];
                              }
                      tt.accumulate(x, gx);
                  },
                  "masked_mean_abs");
}

// Gram matrix per sample: out[b,i,j] = sum_hw F[b,i,hw] F[b,j,hw] / (C*H*W).
// Output shape [B, C, C, 1].
template <typename T>
Var gram(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    const Shape s = xv.shape();
    const int64_t hw = s.h * s.w;
    const T norm = T(1) / static_cast<T>(s.c * hw);
    Tensor<T> y({s.b, s.c, s.c, 1});
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t i = 0; i < s.c; ++i)
            for (int64_t j = i; j < s.c; ++j) {
                const T* fi = xv.data() + (b * s.c + i) * hw;
                const T* fj = xv.data() + (b * s.c + j) * hw;
                T acc = 0;
                for (int64_t p = 0; p < hw; ++p) acc += fi[p] * fj[p];
                acc *= norm;
                y.at(b, i, j, 0) = acc;
                y.at(b, j, i, 0) = acc;
            }
    Var self{static_cast<int>(t.size())};
    return t.make(std::move(y), {x},
                  [=](Tape<T>& tt) {
                      const Tensor<T>& g = tt.grad(self);
                      const Tensor<T>& f = tt.value(x);
                      Tensor<T> gx(f.shape(), T(0));
                      for (int64_t b = 0; b < s.b; ++b)
                          for (int64_t i = 0; i < s.c; ++i) {
                              T* gi = gx.data() + (b * s.c + i) * hw;
                              for (int64_t j = 0; j < s.c; ++j) {
                                  const T w = (g.at(b, i, j, 0) + g.at(b, j, i, 0)) * norm;
                                  if (w == T(0)) continue;
                                  const T* fj = f.data() + (b * s.c + j) * hw;
                                  for (int64_t p = 0; p < hw; ++p) gi[p] += w * fj[p];
                              }
                          }
                      tt.accumulate(x, gx);
                  },
                  "gram");
}

template <typename T>
Var detach(Tape<T>& t, Var x) {
    return t.constant(t.value(x), "detach");
}

// mask compositing: holes (mask = 1) from x, known pixels from the input image
template <typename T>
Var composite(Tape<T>& t, Var x, const Tensor<T>& input, const Tensor<T>& mask) {
    const Shape xs = t.value(x).shape();
    check(input.shape() == xs, "composite: input shape mismatch");
    check(mask.shape().b == xs.b && mask.shape().c == 1 && mask.shape().h == xs.h &&
              mask.shape().w == xs.w,
          "composite: mask must be [B,1,H,W]");
    Tensor<T> m3({xs.b, xs.c, xs.h, xs.w});
    Tensor<T> bg(xs);
    const int64_t hw = xs.h * xs.w;
    for (int64_t b = 0; b < xs.b; ++b)
        for (int64_t c = 0; c < xs.c; ++c)
            for (int64_t i = 0; i < hw; ++i) {
                T mv = mask[b * hw + i];
                m3[(b * xs.c + c) * hw + i] = mv;
                bg[(b * xs.c + c) * hw + i] = (T(1) - mv) * input[(b * xs.c + c) * hw + i];
            }
    Var masked = mul(t, x, t.constant(std::move(m3), "mask"));
    return add(t, masked, t.constant(std::move(bg), "background"));
}

}  // namespace misf::ops
