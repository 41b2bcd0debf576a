#pragma once

// PSNR / SSIM / L1-percent quality metrics and the pre- vs post-filter
// feature cross-correlation analysis.

#include <limits>

#include "misf/losses.hpp"
#include "misf/mask.hpp"

namespace misf {

// 10*log10(1/MSE) for [0,1] images; identical images return +inf (report
// emission caps the sentinel at 99 dB).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(), "psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    check(a.size() > 0, "psnr: empty tensors");
    double mse = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// 100 * mean absolute error
template <typename T>
double l1_pct(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(), "l1_pct: shape mismatch");
    check(a.size() > 0, "l1_pct: empty tensors");
    double s = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return 100.0 * s / static_cast<double>(a.size());
}

namespace detail {

// luma of one batch entry, row-major h*w doubles
template <typename T>
std::vector<double> to_gray(const Tensor<T>& img, int64_t b) {
    const Shape s = img.shape();
    check(s.c == 3 || s.c == 1, "ssim: expected 1 or 3 channels, got " + s.str());
    std::vector<double> g(static_cast<size_t>(s.h * s.w));
    const int64_t hw = s.h * s.w;
    for (int64_t p = 0; p < hw; ++p) {
        if (s.c == 1)
            g[static_cast<size_t>(p)] = static_cast<double>(img[b * hw + p]);
        else
            g[static_cast<size_t>(p)] = 0.299 * static_cast<double>(img[(b * 3 + 0) * hw + p]) +
                                        0.587 * static_cast<double>(img[(b * 3 + 1) * hw + p]) +
                                        0.114 * static_cast<double>(img[(b * 3 + 2) * hw + p]);
    }
    return g;
}

inline std::vector<double> gaussian_window11() {
    std::vector<double> w(121);
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dy = i - 5, dx = j - 5;
            double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            w[static_cast<size_t>(i * 11 + j)] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

// Mean local SSIM over valid (fully interior) 11x11 windows, grayscale
// 0.299R + 0.587G + 0.114B, Gaussian weights sigma = 1.5, C1 = 0.01^2,
// C2 = 0.03^2 on the [0,1] range.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(), "ssim: shape mismatch");
    const Shape s = a.shape();
    check(s.h >= 11 && s.w >= 11, "ssim: image smaller than the 11x11 window");
    static const std::vector<double> win = detail::gaussian_window11();
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

    double total = 0;
    int64_t count = 0;
    for (int64_t bi = 0; bi < s.b; ++bi) {
        std::vector<double> x = detail::to_gray(a, bi);
        std::vector<double> y = detail::to_gray(b, bi);
        for (int64_t i = 0; i + 11 <= s.h; ++i)
            for (int64_t j = 0; j + 11 <= s.w; ++j) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int u = 0; u < 11; ++u)
                    for (int v = 0; v < 11; ++v) {
                        double wgt = win[static_cast<size_t>(u * 11 + v)];
                        double xv = x[static_cast<size_t>((i + u) * s.w + j + v)];
                        double yv = y[static_cast<size_t>((i + u) * s.w + j + v)];
                        mx += wgt * xv;
                        my += wgt * yv;
                        xx += wgt * xv * xv;
                        yy += wgt * yv * yv;
                        xy += wgt * xv * yv;
                    }
                double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += ((2 * mx * my + C1) * (2 * cxy + C2)) /
                         ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

// normalized cross-correlation of two mean-centered flattened tensors
template <typename T>
double ncc(const Tensor<T>& fa, const Tensor<T>& fb) {
    check(fa.shape() == fb.shape(), "ncc: shape mismatch");
    const int64_t n = fa.size();
    check(n > 0, "ncc: empty tensors");
    double ma = 0, mb = 0;
    for (int64_t i = 0; i < n; ++i) {
        ma += static_cast<double>(fa[i]);
        mb += static_cast<double>(fb[i]);
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < n; ++i) {
        double da = static_cast<double>(fa[i]) - ma;
        double db = static_cast<double>(fb[i]) - mb;
        num += da * db;
        na += da * da;
        nb += db * db;
    }
    if (na == 0 || nb == 0) throw NumericError("ncc: zero-variance input");
    return num / (std::sqrt(na) * std::sqrt(nb));
}

enum class FilterSite { PreFilter, PostFilter };

// Normalized cross-correlation of the flattened layer-3 feature (F3 before
// the filter, F3-hat after it) extracted from I and I*.
template <typename T>
double feature_similarity(MisfModel<T>& model, const Tensor<T>& corrupted,
                          const Tensor<T>& clean, const Tensor<T>& mask, FilterSite site) {
    check(model.uses_k3() || site == FilterSite::PreFilter,
          "feature_similarity: variant has no feature filter, post-filter site unavailable");
    auto extract = [&](const Tensor<T>& img) {
        Tape<T> t;
        auto fw = model.forward(t, img, mask, /*frozen=*/true);
        Var v = site == FilterSite::PreFilter ? fw.f3 : fw.f3hat;
        check(v.valid(), "feature_similarity: requested feature site was not computed");
        return t.value(v);
    };
    return ncc(extract(corrupted), extract(clean));
}

struct MetricRow {
    std::string id;
    std::string bucket;
    double psnr_db = 0;  // +inf capped to 99 at emission
    double ssim = 0;
    double l1_pct = 0;
    std::string variant;
};

struct MetricAggregate {
    std::string bucket;
    int64_t count = 0;
    double psnr_db = 0, ssim = 0, l1_pct = 0;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    std::vector<MetricAggregate> aggregates() const {
        std::vector<MetricAggregate> out;
        for (const auto& r : rows) {
            MetricAggregate* a = nullptr;
            for (auto& cand : out)
                if (cand.bucket == r.bucket) a = &cand;
            if (!a) {
                out.push_back({r.bucket, 0, 0, 0, 0});
                a = &out.back();
            }
            ++a->count;
            a->psnr_db += std::min(r.psnr_db, 99.0);
            a->ssim += r.ssim;
            a->l1_pct += r.l1_pct;
        }
        for (auto& a : out) {
            a.psnr_db /= static_cast<double>(a.count);
            a.ssim /= static_cast<double>(a.count);
            a.l1_pct /= static_cast<double>(a.count);
        }
        return out;
    }
};

void emit_report_csv(const MetricReport& report, const std::string& path);
void emit_report_json(const MetricReport& report, const std::string& path);
MetricReport parse_report_csv(const std::string& path);

}  // namespace misf
