// Times the naive serial reference kernels against the blocked/OpenMP fast
// path and cross-checks their outputs.

#include <chrono>
#include <cstdio>
#include <string>

#include "misf/kernels.hpp"
#include "misf/reference.hpp"

using namespace misf;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_ms(F&& f, int reps) {
    f();  // warmup
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) f();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

void report(const std::string& name, double ref_ms, double fast_ms, double diff) {
    std::printf("%-24s ref %9.3f ms   fast %9.3f ms   speedup %6.2fx   max|diff| %.3e\n",
                name.c_str(), ref_ms, fast_ms, ref_ms / fast_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
    int threads = 1;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--threads" && i + 1 < argc) threads = std::atoi(argv[++i]);
    }
    set_threads(threads);
    std::printf("threads: %d\n", threads);

    Rng rng(42);

    {  // GEMM 256x256x256
        const int64_t m = 256, k = 256, n = 256;
        Tensor<float> a({1, 1, m, k}), b({1, 1, k, n}), c({1, 1, m, n}), cref({1, 1, m, n});
        rng.fill_uniform(a, -1, 1);
        rng.fill_uniform(b, -1, 1);
        // reference: textbook triple loop
        auto ref = [&] {
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    float acc = 0;
                    for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
                    cref[i * n + j] = acc;
                }
        };
        auto fast = [&] { kern::gemm_nn(c.data(), a.data(), b.data(), m, k, n, false); };
        double rt = time_ms(ref, 3), ft = time_ms(fast, 10);
        report("gemm 256^3", rt, ft, max_abs_diff(c, cref));
    }

    {  // conv2d 7x7 on a 64x64 image
        Tensor<float> x({4, 16, 64, 64}), w({32, 16, 7, 7}), b({1, 32, 1, 1});
        rng.fill_uniform(x, -1, 1);
        rng.fill_uniform(w, -0.1, 0.1);
        rng.fill_uniform(b, -0.1, 0.1);
        Tensor<float> yref, yfast;
        double rt = time_ms([&] { yref = ref::conv2d(x, w, b, 1, Pad::same(3)); }, 2);
        double ft = time_ms([&] { yfast = kern::conv2d_forward(x, w, b, 1, Pad::same(3)); }, 5);
        report("conv2d 7x7 s1", rt, ft, max_abs_diff(yref, yfast));
    }

    {  // conv2d 4x4 stride 2
        Tensor<float> x({4, 32, 64, 64}), w({64, 32, 4, 4}), b({1, 64, 1, 1});
        rng.fill_uniform(x, -1, 1);
        rng.fill_uniform(w, -0.1, 0.1);
        rng.fill_uniform(b, -0.1, 0.1);
        Tensor<float> yref, yfast;
        double rt = time_ms([&] { yref = ref::conv2d(x, w, b, 2, Pad::same(1)); }, 2);
        double ft = time_ms([&] { yfast = kern::conv2d_forward(x, w, b, 2, Pad::same(1)); }, 5);
        report("conv2d 4x4 s2", rt, ft, max_abs_diff(yref, yfast));
    }

    {  // transposed conv 4x4 stride 2
        Tensor<float> x({4, 64, 16, 16}), w({64, 32, 4, 4}), b({1, 32, 1, 1});
        rng.fill_uniform(x, -1, 1);
        rng.fill_uniform(w, -0.1, 0.1);
        rng.fill_uniform(b, -0.1, 0.1);
        Tensor<float> yref, yfast;
        double rt = time_ms([&] { yref = ref::conv_transpose2d(x, w, b, 2, Pad::same(1)); }, 2);
        double ft =
            time_ms([&] { yfast = kern::conv_transpose2d_forward(x, w, b, 2, Pad::same(1)); }, 5);
        report("convt 4x4 s2", rt, ft, max_abs_diff(yref, yfast));
    }

    {  // pixel filter 3x3, per-channel groups
        const int n = 3;
        Tensor<float> x({2, 16, 64, 64}), k({2, 16 * n * n, 64, 64});
        rng.fill_uniform(x, -1, 1);
        rng.fill_uniform(k, 0, 1);
        Tensor<float> yref, yfast;
        double rt =
            time_ms([&] { yref = ref::pixel_filter(x, k, n, 16, Boundary::ZeroPad); }, 3);
        double ft = time_ms(
            [&] { yfast = kern::pixel_filter_forward(x, k, n, 16, Boundary::ZeroPad); }, 5);
        report("pixel_filter 3x3", rt, ft, max_abs_diff(yref, yfast));
    }

    return 0;
}
