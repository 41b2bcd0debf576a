#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "misf/errors.hpp"

namespace misf {

// Dense 4-D array [batch, channel, height, width], row-major in that order.
struct Shape {
    int64_t b = 0, c = 0, h = 0, w = 0;

    int64_t numel() const { return b * c * h * w; }
    bool operator==(const Shape& o) const = default;

    std::string str() const {
        return "[" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(static_cast<size_t>(s.numel()), fill) {
        check(s.b >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, "tensor: negative dim " + s.str());
    }
    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        check(static_cast<int64_t>(data_.size()) == s.numel(),
              "tensor: element count does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    int64_t index(int64_t b, int64_t c, int64_t h, int64_t w) const {
        return ((b * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(int64_t b, int64_t c, int64_t h, int64_t w) { return data_[index(b, c, h, w)]; }
    const T& at(int64_t b, int64_t c, int64_t h, int64_t w) const { return data_[index(b, c, h, w)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min() const {
        check(!data_.empty(), "min of empty tensor");
        T m = data_[0];
        for (T v : data_) m = v < m ? v : m;
        return m;
    }
    T max() const {
        check(!data_.empty(), "max of empty tensor");
        T m = data_[0];
        for (T v : data_) m = v > m ? v : m;
        return m;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

  private:
    Shape shape_{};
    std::vector<T> data_;
};

// Deterministic RNG (splitmix64) used everywhere seeds matter. Sampling is
// hand-rolled so sequences never depend on stdlib distribution internals.
class Rng {
  public:
    explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {
        // warmup decorrelates nearby seeds
        for (int i = 0; i < 4; ++i) next();
    }

    uint64_t next() {
        uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int64_t uniform_int(int64_t n) {
        check(n > 0, "uniform_int: n must be positive");
        return static_cast<int64_t>(uniform() * static_cast<double>(n));
    }

    double normal() {
        // Box-Muller, fresh pair each call (cache-free keeps state trivially serializable)
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    }

  private:
    uint64_t s_;
};

// ---- MTF1 raw tensor file format -------------------------------------------
// magic "MTF1", u8 precision code (1 = f32, 2 = f64), u32 rank, u32 dims,
// elements row-major, all little-endian.

namespace detail {
template <typename T>
constexpr uint8_t mtf1_code();
template <>
constexpr uint8_t mtf1_code<float>() { return 1; }
template <>
constexpr uint8_t mtf1_code<double>() { return 2; }
}  // namespace detail

template <typename T>
void write_mtf1(const std::string& path, const Tensor<T>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("mtf1: cannot open for writing: " + path);
    f.write("MTF1", 4);
    uint8_t code = detail::mtf1_code<T>();
    f.write(reinterpret_cast<const char*>(&code), 1);
    uint32_t rank = 4;
    f.write(reinterpret_cast<const char*>(&rank), 4);
    const Shape& s = t.shape();
    uint32_t dims[4] = {static_cast<uint32_t>(s.b), static_cast<uint32_t>(s.c),
                        static_cast<uint32_t>(s.h), static_cast<uint32_t>(s.w)};
    f.write(reinterpret_cast<const char*>(dims), 16);
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) throw IoError("mtf1: write failed: " + path);
}

template <typename T>
Tensor<T> read_mtf1(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("mtf1: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MTF1", 4) != 0) throw IoError("mtf1: bad magic in " + path);
    uint8_t code = 0;
    f.read(reinterpret_cast<char*>(&code), 1);
    uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 4);
    if (!f || rank != 4) throw IoError("mtf1: unsupported rank in " + path);
    uint32_t dims[4];
    f.read(reinterpret_cast<char*>(dims), 16);
    if (!f) throw IoError("mtf1: truncated header in " + path);
    Shape s{dims[0], dims[1], dims[2], dims[3]};

    auto read_payload = [&](auto tag) {
        using U = decltype(tag);
        Tensor<U> raw(s);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(U)));
        if (!f) throw IoError("mtf1: truncated payload in " + path);
        return raw;
    };

    if (code == 1) return read_payload(float{}).template cast<T>();
    if (code == 2) return read_payload(double{}).template cast<T>();
    throw IoError("mtf1: unknown precision code in " + path);
}

}  // namespace misf
