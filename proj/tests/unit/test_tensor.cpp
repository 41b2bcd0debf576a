#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "misf/image_io.hpp"
#include "misf/tensor.hpp"

using namespace misf;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("shape and indexing") {
    Shape s{2, 3, 4, 5};
    CHECK(s.numel() == 120);
    Tensor<float> t(s);
    CHECK(t.size() == 120);
    t.at(1, 2, 3, 4) = 7.0f;
    CHECK(t[t.index(1, 2, 3, 4)] == 7.0f);
    CHECK(t.index(1, 2, 3, 4) == 119);
    CHECK_THROWS_AS(Tensor<float>(Shape{1, 1, 1, 2}, std::vector<float>{1.0f}), ContractError);
}

TEST_CASE("tensor min max finite") {
    Tensor<double> t({1, 1, 1, 3});
    t[0] = -2;
    t[1] = 5;
    t[2] = 0;
    CHECK(t.min() == -2);
    CHECK(t.max() == 5);
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng is deterministic and in range") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(Rng(7).next() != c.next());
    Rng d(1);
    for (int i = 0; i < 50; ++i) {
        int64_t v = d.uniform_int(10);
        CHECK(v >= 0);
        CHECK(v < 10);
    }
}

TEST_CASE("mtf1 round trip preserves bytes") {
    Tensor<double> t({2, 3, 4, 5});
    Rng rng(9);
    rng.fill_uniform(t, -10, 10);
    const std::string path = tmp_path("misf_t.mtf");
    write_mtf1(path, t);
    Tensor<double> r = read_mtf1<double>(path);
    REQUIRE(r.shape() == t.shape());
    for (int64_t i = 0; i < t.size(); ++i) CHECK(r[i] == t[i]);
}

TEST_CASE("mtf1 cross precision read converts") {
    Tensor<float> t({1, 2, 2, 2});
    Rng rng(10);
    rng.fill_uniform(t, -1, 1);
    const std::string path = tmp_path("misf_t32.mtf");
    write_mtf1(path, t);
    Tensor<double> r = read_mtf1<double>(path);
    for (int64_t i = 0; i < t.size(); ++i) CHECK(r[i] == doctest::Approx(t[i]));
}

TEST_CASE("mtf1 error paths") {
    CHECK_THROWS_AS(read_mtf1<float>(tmp_path("does_not_exist.mtf")), IoError);
    const std::string bad = tmp_path("misf_bad.mtf");
    {
        std::ofstream f(bad, std::ios::binary);
        f << "NOPE";
    }
    CHECK_THROWS_AS(read_mtf1<float>(bad), IoError);
    const std::string trunc = tmp_path("misf_trunc.mtf");
    {
        Tensor<float> t({1, 1, 4, 4}, 1.0f);
        write_mtf1(trunc, t);
        fs::resize_file(trunc, 30);
    }
    CHECK_THROWS_AS(read_mtf1<float>(trunc), IoError);
}

TEST_CASE("ppm fixture bytes") {
    // 2x2 P6 with known pixels
    const std::string path = tmp_path("misf_fix.ppm");
    {
        std::ofstream f(path, std::ios::binary);
        f << "P6\n# comment\n2 2\n255\n";
        const unsigned char px[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
        f.write(reinterpret_cast<const char*>(px), 12);
    }
    RawImage img = load_image_bytes(path);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    CHECK(img.rgb[0] == 255);
    CHECK(img.rgb[4] == 255);
    CHECK(img.rgb[8] == 255);
    CHECK(img.rgb[9] == 255);

    Tensor<double> t = to_tensor<double>(img);
    CHECK(t.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(t.at(0, 1, 0, 1) == doctest::Approx(1.0));
    CHECK(t.at(0, 2, 1, 0) == doctest::Approx(1.0));
}

TEST_CASE("image round trip within quantization") {
    Tensor<double> t({1, 3, 8, 8});
    Rng rng(11);
    rng.fill_uniform(t, 0, 1);
    for (const char* ext : {".png", ".ppm"}) {
        const std::string path = tmp_path(std::string("misf_rt") + ext);
        save_image(t, path);
        Tensor<double> r = load_image<double>(path);
        REQUIRE(r.shape() == t.shape());
        for (int64_t i = 0; i < t.size(); ++i)
            CHECK(std::abs(r[i] - t[i]) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("quantization rounds half away from zero") {
    Tensor<double> t({1, 3, 1, 1});
    t[0] = 0.5 / 255.0;   // exactly half a step -> 1
    t[1] = 1.2;           // clamps to 255
    t[2] = -0.3;          // clamps to 0
    RawImage img = to_raw_image(t);
    CHECK(img.rgb[0] == 1);
    CHECK(img.rgb[1] == 255);
    CHECK(img.rgb[2] == 0);
}

TEST_CASE("unsupported formats are rejected") {
    const std::string path = tmp_path("misf_bogus.txt");
    {
        std::ofstream f(path);
        f << "hello";
    }
    CHECK_THROWS_AS(load_image_bytes(path), IoError);
    RawImage img;
    img.width = img.height = 1;
    img.rgb = {0, 0, 0};
    CHECK_THROWS_AS(save_image_bytes(tmp_path("misf_bogus.gif"), img), IoError);
}
