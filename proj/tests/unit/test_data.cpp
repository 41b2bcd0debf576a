#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "misf/data.hpp"

using namespace misf;
namespace fs = std::filesystem;

TEST_CASE("bucket parsing and ranges") {
    CHECK(parse_bucket("0-20") == Bucket::B0_20);
    CHECK(parse_bucket("20-40") == Bucket::B20_40);
    CHECK(parse_bucket("40-60") == Bucket::B40_60);
    CHECK_THROWS_AS(parse_bucket("60-80"), ConfigError);
    CHECK(bucket_range(Bucket::B40_60).lo == doctest::Approx(0.4));
    CHECK(bucket_name(Bucket::B0_20) == "0-20");
}

TEST_CASE("mask generation hits its bucket and is deterministic") {
    for (Bucket b : {Bucket::B0_20, Bucket::B20_40, Bucket::B40_60}) {
        BucketRange range = bucket_range(b);
        for (uint64_t seed = 0; seed < 20; ++seed) {
            MaskSpec spec;
            spec.bucket = b;
            spec.seed = seed;
            auto m1 = generate_mask(spec, 64, 64);
            auto m2 = generate_mask(spec, 64, 64);
            CHECK(m1 == m2);
            double r = mask_ratio(m1);
            CHECK(r >= range.lo - 0.02);
            CHECK(r <= range.hi + 0.02);
        }
    }
}

TEST_CASE("different mask seeds differ") {
    MaskSpec a, b;
    a.seed = 1;
    b.seed = 2;
    CHECK(generate_mask(a, 64, 64) != generate_mask(b, 64, 64));
}

TEST_CASE("corruption follows the sample invariant") {
    Rng rng(1);
    Tensor<double> clean({1, 3, 8, 8});
    rng.fill_uniform(clean, 0, 1);

    SUBCASE("empty mask leaves the image untouched") {
        Tensor<double> mask({1, 1, 8, 8}, 0.0);
        Tensor<double> out = corrupt(clean, mask);
        for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == clean[i]);
    }
    SUBCASE("full mask paints everything white") {
        Tensor<double> mask({1, 1, 8, 8}, 1.0);
        Tensor<double> out = corrupt(clean, mask);
        for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 1.0);
    }
    SUBCASE("unmasked pixels are bitwise preserved") {
        Tensor<double> mask({1, 1, 8, 8}, 0.0);
        for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        Tensor<double> out = corrupt(clean, mask);
        const int64_t hw = 64;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t p = 0; p < hw; ++p) {
                if (mask[p] == 0.0)
                    CHECK(out[c * hw + p] == clean[c * hw + p]);
                else
                    CHECK(out[c * hw + p] == 1.0);
            }
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor<double> mask({1, 1, 4, 4}, 0.0);
        CHECK_THROWS_AS(corrupt(clean, mask), ContractError);
    }
}

TEST_CASE("fixture images are deterministic and in range") {
    Tensor<double> a = fixture_image<double>(5, 64, 64);
    Tensor<double> b = fixture_image<double>(5, 64, 64);
    Tensor<double> c = fixture_image<double>(6, 64, 64);
    CHECK(a.shape() == Shape{1, 3, 64, 64});
    for (int64_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(a[i] >= 0.0);
        CHECK(a[i] <= 1.0);
    }
    double diff = 0;
    for (int64_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - c[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("fixture dataset samples are reproducible") {
    auto d = Dataset<double>::fixture(8, 64, 3, Bucket::B20_40);
    CHECK(d.size() == 8);
    ImageSample<double> s1 = d.sample(0);
    ImageSample<double> s2 = d.sample(0);
    for (int64_t i = 0; i < s1.clean.size(); ++i) CHECK(s1.clean[i] == s2.clean[i]);
    for (int64_t i = 0; i < s1.mask.size(); ++i) CHECK(s1.mask[i] == s2.mask[i]);
    // corrupted respects the invariant
    const int64_t hw = 64 * 64;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t p = 0; p < hw; p += 37) {
            if (s1.mask[p] == 0.0)
                CHECK(s1.corrupted[c * hw + p] == s1.clean[c * hw + p]);
            else
                CHECK(s1.corrupted[c * hw + p] == 1.0);
        }
    CHECK_THROWS_AS(d.sample(8), ContractError);
}

TEST_CASE("batch order is a pure function of seed and epoch") {
    auto o1 = batch_order(10, 7, 0);
    auto o2 = batch_order(10, 7, 0);
    auto o3 = batch_order(10, 7, 1);
    auto o4 = batch_order(10, 8, 0);
    CHECK(o1 == o2);
    CHECK(o1 != o3);
    CHECK(o1 != o4);
    std::sort(o1.begin(), o1.end());
    for (int64_t i = 0; i < 10; ++i) CHECK(o1[static_cast<size_t>(i)] == i);
}

TEST_CASE("batching drops the tail in training and keeps it in eval") {
    auto d = Dataset<double>::fixture(10, 64, 1, Bucket::B0_20);
    auto train = batch_indices(d, 4, 1, 0, true);
    CHECK(train.size() == 2);
    for (const auto& b : train) CHECK(b.size() == 4);
    auto eval = batch_indices(d, 4, 1, 0, false);
    CHECK(eval.size() == 3);
    CHECK(eval.back().size() == 2);
    // eval order is the identity
    CHECK(eval[0][0] == 0);
    CHECK(eval[2][1] == 9);

    auto empty = Dataset<double>::fixture(0, 64, 1, Bucket::B0_20);
    CHECK_THROWS_AS(batch_indices(empty, 4, 1, 0, true), ContractError);
}

TEST_CASE("collate stacks along the batch axis") {
    auto d = Dataset<double>::fixture(4, 64, 2, Bucket::B20_40);
    Batch<double> b = collate(d, {1, 3});
    CHECK(b.clean.shape() == Shape{2, 3, 64, 64});
    CHECK(b.mask.shape() == Shape{2, 1, 64, 64});
    ImageSample<double> s3 = d.sample(3);
    const int64_t n = s3.clean.size();
    for (int64_t i = 0; i < n; i += 101) CHECK(b.clean[n + i] == s3.clean[i]);
}

TEST_CASE("manifest round trip and validation") {
    const std::string dir = (fs::temp_directory_path() / "misf_manifest").string();
    fs::create_directories(dir);
    DatasetManifest m;
    m.root = dir;
    m.resolution = 64;
    m.bucket = Bucket::B40_60;
    m.seed = 12;
    m.train = {"a.png", "b.png"};
    m.test = {"c.png"};
    const std::string path = dir + "/data.manifest";
    save_manifest(path, m);
    DatasetManifest r = load_manifest(path);
    CHECK(r.root == m.root);
    CHECK(r.resolution == 64);
    CHECK(r.bucket == Bucket::B40_60);
    CHECK(r.seed == 12);
    CHECK(r.train == m.train);
    CHECK(r.test == m.test);

    const std::string bad = dir + "/bad.manifest";
    {
        std::ofstream f(bad);
        f << "bogus_key = 1\n";
    }
    CHECK_THROWS_AS(load_manifest(bad), ConfigError);
    {
        std::ofstream f(bad);
        f << "stray_path.png\n";
    }
    CHECK_THROWS_AS(load_manifest(bad), ConfigError);
    CHECK_THROWS_AS(load_manifest(dir + "/missing.manifest"), IoError);
}

TEST_CASE("manifest-backed dataset loads images") {
    const std::string dir = (fs::temp_directory_path() / "misf_ds").string();
    fs::create_directories(dir);
    Tensor<double> img = fixture_image<double>(9, 64, 64);
    save_image(img, dir + "/img0.png");
    DatasetManifest m;
    m.root = dir;
    m.resolution = 64;
    m.train = {"img0.png"};
    auto d = Dataset<double>::from_manifest(m, true);
    REQUIRE(d.size() == 1);
    ImageSample<double> s = d.sample(0);
    for (int64_t i = 0; i < s.clean.size(); ++i)
        CHECK(std::abs(s.clean[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
}
