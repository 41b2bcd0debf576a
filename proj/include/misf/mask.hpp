#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "misf/errors.hpp"
#include "misf/tensor.hpp"

namespace misf {

// Hole-ratio bucket: fraction of pixels that are missing.
enum class Bucket { B0_20, B20_40, B40_60 };

struct BucketRange {
    double lo, hi;
};

inline BucketRange bucket_range(Bucket b) {
    switch (b) {
        case Bucket::B0_20: return {0.0, 0.2};
        case Bucket::B20_40: return {0.2, 0.4};
        case Bucket::B40_60: return {0.4, 0.6};
    }
    return {0, 0};
}

inline std::string bucket_name(Bucket b) {
    switch (b) {
        case Bucket::B0_20: return "0-20";
        case Bucket::B20_40: return "20-40";
        case Bucket::B40_60: return "40-60";
    }
    return "?";
}

Bucket parse_bucket(const std::string& s);

// Free-form irregular mask: random-walk strokes of varying width plus disk
// fill-in until the hole ratio enters the bucket. Deterministic per seed.
struct MaskSpec {
    Bucket bucket = Bucket::B20_40;
    uint64_t seed = 0;
    int strokes = 4;           // strokes attempted before disk fill-in
    int width_min = 0;         // 0 = derive from image size
    int width_max = 0;
    int length_min = 0;
    int length_max = 0;
};

// Returns H*W bytes, 1 = hole. Throws ContractError (with the achieved
// ratio) if the bucket is unreachable within the iteration cap.
std::vector<uint8_t> generate_mask(const MaskSpec& spec, int h, int w);

inline double mask_ratio(const std::vector<uint8_t>& m) {
    int64_t holes = 0;
    for (uint8_t v : m) holes += v;
    return static_cast<double>(holes) / static_cast<double>(m.size());
}

template <typename T>
Tensor<T> mask_to_tensor(const std::vector<uint8_t>& m, int h, int w) {
    Tensor<T> t({1, 1, h, w});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(m[static_cast<size_t>(i)]);
    return t;
}

}  // namespace misf
