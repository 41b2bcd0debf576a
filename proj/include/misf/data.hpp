#pragma once

// Fixture image generator, corruption, and deterministic batching.

#include <numeric>

#include "misf/image_io.hpp"
#include "misf/manifest.hpp"
#include "misf/mask.hpp"

namespace misf {

// Procedural test images: a color gradient base with signed Gaussian blobs
// layered on top, all parameters drawn from the seed. The blobs give the
// images smooth multi-scale structure roughly resembling natural content.
template <typename T>
Tensor<T> fixture_image(uint64_t seed, int h, int w) {
    Rng rng(seed ^ 0xa5a5a5a5a5a5a5a5ull);
    Tensor<T> img({1, 3, h, w});
    // gradient base: per-channel start/end colors, random direction
    double ang = rng.uniform(0, 2 * M_PI);
    double dx = std::cos(ang), dy = std::sin(ang);
    for (int c = 0; c < 3; ++c) {
        double a = rng.uniform(0.15, 0.85), b = rng.uniform(0.15, 0.85);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double u = (dx * j / (w - 1.0) + dy * i / (h - 1.0) + 1.0) / 2.0;
                img.at(0, c, i, j) = static_cast<T>(a + (b - a) * u);
            }
    }
    int blobs = 4 + static_cast<int>(rng.uniform_int(6));
    for (int bidx = 0; bidx < blobs; ++bidx) {
        double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
        double sig = rng.uniform(std::min(h, w) / 16.0, std::min(h, w) / 4.0);
        double amp[3];
        for (int c = 0; c < 3; ++c) amp[c] = rng.uniform(-0.7, 0.7);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double d2 = (j - cx) * (j - cx) + (i - cy) * (i - cy);
                double g = std::exp(-d2 / (2 * sig * sig));
                for (int c = 0; c < 3; ++c) {
                    double v = static_cast<double>(img.at(0, c, i, j)) + amp[c] * g;
                    img.at(0, c, i, j) = static_cast<T>(v > 1 ? 1 : (v < 0 ? 0 : v));
                }
            }
    }
    return img;
}

// I = (1 - mask) * I* + mask * 1.0, holes painted white
template <typename T>
Tensor<T> corrupt(const Tensor<T>& clean, const Tensor<T>& mask) {
    const Shape s = clean.shape(), ms = mask.shape();
    check(ms.b == s.b && ms.c == 1 && ms.h == s.h && ms.w == s.w,
          "corrupt: mask shape " + ms.str() + " does not match image " + s.str());
    Tensor<T> out = clean;
    const int64_t hw = s.h * s.w;
    for (int64_t b = 0; b < s.b; ++b)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t p = 0; p < hw; ++p) {
                T m = mask[b * hw + p];
                int64_t i = (b * s.c + c) * hw + p;
                out[i] = (T(1) - m) * clean[i] + m;
            }
    return out;
}

template <typename T>
struct ImageSample {
    Tensor<T> clean;      // [1,3,H,W]
    Tensor<T> mask;       // [1,1,H,W], 1 = hole
    Tensor<T> corrupted;  // derived
};

template <typename T>
struct Batch {
    Tensor<T> clean, mask, corrupted;  // stacked along the batch axis
};

template <typename T>
class Dataset {
  public:
    // self-contained fixture split; masks are fixed per sample index
    static Dataset fixture(int count, int hw, uint64_t seed, Bucket bucket) {
        Dataset d;
        d.resolution_ = hw;
        d.seed_ = seed;
        d.bucket_ = bucket;
        for (int i = 0; i < count; ++i) d.keys_.push_back(seed * 1000003ull + static_cast<uint64_t>(i));
        return d;
    }

    static Dataset from_manifest(const DatasetManifest& m, bool train_split) {
        Dataset d;
        d.resolution_ = m.resolution;
        d.seed_ = m.seed;
        d.bucket_ = m.bucket;
        d.manifest_ = m;
        d.use_paths_ = true;
        d.train_split_ = train_split;
        const auto& list = train_split ? m.train : m.test;
        for (size_t i = 0; i < list.size(); ++i) d.keys_.push_back(static_cast<uint64_t>(i));
        return d;
    }

    int64_t size() const { return static_cast<int64_t>(keys_.size()); }
    int resolution() const { return resolution_; }

    ImageSample<T> sample(int64_t i) const {
        check(i >= 0 && i < size(), "dataset: index out of range");
        ImageSample<T> s;
        if (use_paths_) {
            const auto& list = train_split_ ? manifest_.train : manifest_.test;
            s.clean = load_image<T>(manifest_.resolve(list[static_cast<size_t>(i)]));
            const Shape is = s.clean.shape();
            check(is.h == resolution_ && is.w == resolution_,
                  "dataset: image size " + is.str() + " does not match manifest resolution " +
                      std::to_string(resolution_));
        } else {
            s.clean = fixture_image<T>(keys_[static_cast<size_t>(i)], resolution_, resolution_);
        }
        MaskSpec ms;
        ms.bucket = bucket_;
        ms.seed = seed_ * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(i) + 1;
        auto m = generate_mask(ms, resolution_, resolution_);
        s.mask = mask_to_tensor<T>(m, resolution_, resolution_);
        s.corrupted = corrupt(s.clean, s.mask);
        return s;
    }

  private:
    std::vector<uint64_t> keys_;
    int resolution_ = 64;
    uint64_t seed_ = 0;
    Bucket bucket_ = Bucket::B20_40;
    DatasetManifest manifest_;
    bool use_paths_ = false;
    bool train_split_ = true;
};

// Deterministic shuffle: Fisher-Yates keyed by (seed, epoch) only.
inline std::vector<int64_t> batch_order(int64_t n, uint64_t seed, int64_t epoch) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed * 0x100000001b3ull + static_cast<uint64_t>(epoch) + 0x9e37ull);
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
    return idx;
}

template <typename T>
Batch<T> collate(const Dataset<T>& d, const std::vector<int64_t>& indices) {
    check(!indices.empty(), "collate: empty batch");
    const int64_t n = static_cast<int64_t>(indices.size());
    const int r = d.resolution();
    Batch<T> b{Tensor<T>({n, 3, r, r}), Tensor<T>({n, 1, r, r}), Tensor<T>({n, 3, r, r})};
    for (int64_t k = 0; k < n; ++k) {
        ImageSample<T> s = d.sample(indices[static_cast<size_t>(k)]);
        std::copy(s.clean.data(), s.clean.data() + s.clean.size(),
                  b.clean.data() + k * s.clean.size());
        std::copy(s.mask.data(), s.mask.data() + s.mask.size(),
                  b.mask.data() + k * s.mask.size());
        std::copy(s.corrupted.data(), s.corrupted.data() + s.corrupted.size(),
                  b.corrupted.data() + k * s.corrupted.size());
    }
    return b;
}

// Batches for one epoch: partial tail dropped in training, kept in eval.
template <typename T>
std::vector<std::vector<int64_t>> batch_indices(const Dataset<T>& d, int64_t batch_size,
                                                uint64_t seed, int64_t epoch, bool training) {
    check(d.size() > 0, "batch_iter: empty split");
    check(batch_size > 0, "batch_iter: batch size must be positive");
    std::vector<int64_t> order =
        training ? batch_order(d.size(), seed, epoch) : [&] {
            std::vector<int64_t> v(static_cast<size_t>(d.size()));
            std::iota(v.begin(), v.end(), 0);
            return v;
        }();
    std::vector<std::vector<int64_t>> out;
    for (int64_t i = 0; i + batch_size <= d.size() || (!training && i < d.size());
         i += batch_size) {
        int64_t end = std::min(i + batch_size, d.size());
        out.emplace_back(order.begin() + i, order.begin() + end);
    }
    return out;
}

}  // namespace misf
