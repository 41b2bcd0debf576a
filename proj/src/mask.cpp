#include "misf/mask.hpp"

#include <algorithm>
#include <cmath>

namespace misf {

Bucket parse_bucket(const std::string& s) {
    if (s == "0-20") return Bucket::B0_20;
    if (s == "20-40") return Bucket::B20_40;
    if (s == "40-60") return Bucket::B40_60;
    throw ConfigError("unknown bucket '" + s + "' (want 0-20, 20-40 or 40-60)");
}

namespace {

void stamp_disk(std::vector<uint8_t>& m, int h, int w, double cx, double cy, double r,
                int64_t& holes) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy > r2) continue;
            uint8_t& cell = m[static_cast<size_t>(y) * w + x];
            if (!cell) {
                cell = 1;
                ++holes;
            }
        }
}

}  // namespace

std::vector<uint8_t> generate_mask(const MaskSpec& spec, int h, int w) {
    check(h >= 32 && w >= 32, "generate_mask: image must be at least 32x32");
    Rng rng(spec.seed * 0x100000001b3ull + 17 * static_cast<uint64_t>(spec.bucket));

    const BucketRange range = bucket_range(spec.bucket);
    // interior target keeps the achieved ratio inside bucket +- 2pp
    const double target = rng.uniform(range.lo + 0.02, range.hi - 0.02);
    const int64_t total = static_cast<int64_t>(h) * w;
    const int64_t target_holes = static_cast<int64_t>(target * static_cast<double>(total));

    const int side = std::min(h, w);
    const int wmin = spec.width_min > 0 ? spec.width_min : std::max(2, side / 32);
    const int wmax = spec.width_max > 0 ? spec.width_max : std::max(wmin + 1, side / 12);
    const int lmin = spec.length_min > 0 ? spec.length_min : side / 4;
    const int lmax = spec.length_max > 0 ? spec.length_max : side;

    std::vector<uint8_t> m(static_cast<size_t>(total), 0);
    int64_t holes = 0;
    int64_t stamps = 0;
    const int64_t cap = 1'000'000;

    // free-form strokes: random walks with per-stroke width
    for (int s = 0; s < spec.strokes && holes < target_holes; ++s) {
        double x = rng.uniform(0, w), y = rng.uniform(0, h);
        double angle = rng.uniform(0, 2 * M_PI);
        const double radius = rng.uniform(wmin, wmax) / 2.0;
        const int steps = static_cast<int>(rng.uniform(lmin, lmax));
        for (int i = 0; i < steps && holes < target_holes; ++i) {
            angle += rng.uniform(-0.5, 0.5);
            x = std::clamp(x + std::cos(angle) * radius, 0.0, w - 1.0);
            y = std::clamp(y + std::sin(angle) * radius, 0.0, h - 1.0);
            stamp_disk(m, h, w, x, y, radius, holes);
            ++stamps;
        }
    }

    // disk fill-in, radius shrinking with the remaining deficit
    while (holes < target_holes) {
        if (++stamps > cap)
            throw ContractError("generate_mask: bucket unreachable within iteration cap, achieved ratio " +
                                std::to_string(static_cast<double>(holes) / static_cast<double>(total)));
        const double remaining = static_cast<double>(target_holes - holes);
        const double r = std::clamp(0.5 * std::sqrt(remaining / M_PI), 1.0, side / 8.0);
        stamp_disk(m, h, w, rng.uniform(0, w), rng.uniform(0, h), r, holes);
    }
    return m;
}

}  // namespace misf
