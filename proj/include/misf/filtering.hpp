#pragma once

// Plain (non-tape) kernel-field utilities: normalization, delta fields, and
// direct filter application. The differentiable counterparts are the tape ops
// ops::tap_softmax and ops::pixel_filter.

#include "misf/kernels.hpp"

namespace misf {

// Per-location filtering kernels packed as a [B, G*N*N, H, W] tensor.
template <typename T>
struct KernelField {
    Tensor<T> data;
    FilterConfig config;
};

template <typename T>
KernelField<T> normalize_kernels(const Tensor<T>& raw, const FilterConfig& cfg) {
    const int n2 = cfg.n * cfg.n;
    check(raw.shape().c % n2 == 0,
          "normalize_kernels: channel count " + std::to_string(raw.shape().c) +
              " not divisible by N^2 = " + std::to_string(n2));
    check(raw.shape().c == int64_t(cfg.groups) * n2,
          "normalize_kernels: channel count does not equal G*N^2");
    if (!cfg.softmax) return {raw, cfg};
    return {kern::tap_softmax_forward(raw, n2), cfg};
}

template <typename T>
Tensor<T> apply_filter(const Tensor<T>& x, const KernelField<T>& k) {
    return kern::pixel_filter_forward(x, k.data, k.config.n, k.config.groups, k.config.boundary);
}

// Kernel field whose every kernel has weight 1 on the center tap; filtering
// with it is the identity map.
template <typename T>
Tensor<T> delta_kernel_field(int64_t b, const FilterConfig& cfg, int64_t h, int64_t w) {
    const int n2 = cfg.n * cfg.n;
    Tensor<T> k({b, int64_t(cfg.groups) * n2, h, w}, T(0));
    const int center = (cfg.n / 2) * cfg.n + cfg.n / 2;
    const int64_t hw = h * w;
    for (int64_t bb = 0; bb < b; ++bb)
        for (int64_t g = 0; g < cfg.groups; ++g) {
            T* p = k.data() + (bb * k.shape().c + g * n2 + center) * hw;
            std::fill(p, p + hw, T(1));
        }
    return k;
}

}  // namespace misf
