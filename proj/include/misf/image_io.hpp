#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "misf/errors.hpp"
#include "misf/tensor.hpp"

namespace misf {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct RawImage {
    int width = 0, height = 0;
    std::vector<uint8_t> rgb;
};

// PNG (8-bit RGB / RGBA / gray, converted to RGB) and binary PPM (P6).
// Dispatch sniffs the file signature on load and uses the extension on save.
RawImage load_image_bytes(const std::string& path);
void save_image_bytes(const std::string& path, const RawImage& img);

template <typename T>
Tensor<T> to_tensor(const RawImage& img) {
    Tensor<T> t({1, 3, img.height, img.width});
    const int64_t hw = int64_t(img.width) * img.height;
    for (int64_t p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c)
            t[c * hw + p] = static_cast<T>(img.rgb[static_cast<size_t>(p * 3 + c)]) / T(255);
    return t;
}

// rounds half away from zero to 8 bits
template <typename T>
RawImage to_raw_image(const Tensor<T>& t, int64_t batch = 0) {
    const Shape s = t.shape();
    check(s.c == 3, "to_raw_image: expected 3 channels, got " + s.str());
    RawImage img;
    img.width = static_cast<int>(s.w);
    img.height = static_cast<int>(s.h);
    img.rgb.resize(static_cast<size_t>(s.h * s.w * 3));
    const int64_t hw = s.h * s.w;
    for (int64_t p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c) {
            double v = static_cast<double>(t[(batch * 3 + c) * hw + p]) * 255.0;
            v = std::floor(v + 0.5);
            img.rgb[static_cast<size_t>(p * 3 + c)] =
                static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
        }
    return img;
}

template <typename T>
Tensor<T> load_image(const std::string& path) {
    return to_tensor<T>(load_image_bytes(path));
}

template <typename T>
void save_image(const Tensor<T>& t, const std::string& path, int64_t batch = 0) {
    save_image_bytes(path, to_raw_image(t, batch));
}

}  // namespace misf
