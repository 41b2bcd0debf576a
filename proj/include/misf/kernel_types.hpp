#pragma once

#include <cstdint>

namespace misf {

struct Pad {
    int top = 0, left = 0, bottom = 0, right = 0;

    static Pad same(int p) { return {p, p, p, p}; }
    bool operator==(const Pad&) const = default;
};

inline int64_t conv_out_dim(int64_t in, int k, int stride, int pad_lo, int pad_hi) {
    return (in + pad_lo + pad_hi - k) / stride + 1;
}

inline int64_t convt_out_dim(int64_t in, int k, int stride, int pad_lo, int pad_hi) {
    return (in - 1) * stride - pad_lo - pad_hi + k;
}

enum class Boundary { ZeroPad, Replicate };

// Per-location filtering configuration. The N*N neighborhood kernel is shared
// across all channels of a group; groups must be 1 or C.
struct FilterConfig {
    int n = 3;                              // odd kernel side
    int groups = 1;                         // 1 (shared) or C (per-channel)
    bool softmax = true;                    // normalize taps to a convex combination
    Boundary boundary = Boundary::ZeroPad;
};

}  // namespace misf
