#include <doctest.h>

#include "misf/model.hpp"

using namespace misf;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace

TEST_CASE("variant and preset parsing") {
    CHECK(parse_variant("misf") == Variant::Misf);
    CHECK(parse_variant("en-decoder-filter") == Variant::EnDecoderFilter);
    CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
    CHECK(parse_preset("misf-tiny").base_channels == 16);
    CHECK(parse_preset("full-256").middle_blocks == 8);
    CHECK_THROWS_AS(parse_preset("huge"), ConfigError);
}

TEST_CASE("layer parameter counts") {
    Rng rng(1);
    Conv2d<float> c;
    c.init("c", 7, 3, 64, 1, Pad::same(3), rng);
    CHECK(c.param_count() == 64 * 3 * 7 * 7 + 64);  // 9472
    CHECK(c.param_count() == 9472);

    Conv2d<float> mid;
    mid.init("m", 1, 256, 256, 1, {}, rng);
    CHECK(mid.param_count() == 256 * 256 + 256);  // 65792
    CHECK(mid.param_count() == 65792);
}

TEST_CASE("full-256 forward reproduces every intermediate shape") {
    MisfModel<float> model(preset_full256(), Variant::Misf, 7);
    Tensor<float> image({1, 3, 256, 256});
    Rng rng(2);
    rng.fill_uniform(image, 0, 1);
    Tensor<float> mask({1, 1, 256, 256}, 0.0f);
    for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.25 ? 1.0f : 0.0f;

    Tape<float> t;
    auto fw = model.forward(t, image, mask, /*frozen=*/true);

    CHECK(t.value(fw.f1).shape() == Shape{1, 64, 256, 256});
    CHECK(t.value(fw.f2).shape() == Shape{1, 128, 128, 128});
    CHECK(t.value(fw.f2p).shape() == Shape{1, 128, 64, 64});
    CHECK(t.value(fw.f3).shape() == Shape{1, 256, 64, 64});
    CHECK(t.value(fw.e3).shape() == Shape{1, 256, 64, 64});
    CHECK(t.value(fw.k3).shape() == Shape{1, 256 * 9, 64, 64});
    CHECK(t.value(fw.f3hat).shape() == Shape{1, 256, 64, 64});
    CHECK(t.value(fw.k).shape() == Shape{1, 3 * 9, 256, 256});
    CHECK(t.value(fw.f7img).shape() == Shape{1, 3, 256, 256});
    CHECK(t.value(fw.ihat).shape() == Shape{1, 3, 256, 256});
    CHECK(t.value(fw.out).shape() == Shape{1, 3, 256, 256});

    // patch discriminator maps 256 -> 8
    Var logits = model.discriminator_forward(t, fw.out, /*frozen=*/true);
    CHECK(t.value(logits).shape() == Shape{1, 1, 8, 8});

    // output is a valid image and known pixels are restored exactly
    const Tensor<float>& out = t.value(fw.out);
    CHECK(out.min() >= 0.0f);
    CHECK(out.max() <= 1.0f);
    const int64_t hw = 256 * 256;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t p = 0; p < hw; p += 997)
            if (mask[p] == 0.0f) CHECK(out[c * hw + p] == image[c * hw + p]);
}

TEST_CASE("variant wiring exposes the right intermediates") {
    Preset p = preset_tiny();
    Tensor<float> image({1, 3, 64, 64}, 0.5f);
    Tensor<float> mask({1, 1, 64, 64}, 0.0f);

    auto run = [&](Variant v) {
        MisfModel<float> m(p, v, 3);
        Tape<float> t;
        return std::pair(m.forward(t, image, mask, true), std::move(t));
    };

    {
        auto [fw, t] = run(Variant::Misf);
        CHECK(fw.k3.valid());
        CHECK(fw.k.valid());
        CHECK(fw.f3hat.valid());
    }
    {
        auto [fw, t] = run(Variant::SemFilter);
        CHECK(fw.k3.valid());
        CHECK_FALSE(fw.k.valid());
        CHECK(fw.f3hat.valid());
    }
    {
        auto [fw, t] = run(Variant::ImgFilter);
        CHECK_FALSE(fw.k3.valid());
        CHECK(fw.k.valid());
        CHECK_FALSE(fw.f7img.valid());
    }
    {
        auto [fw, t] = run(Variant::EnDecoder);
        CHECK_FALSE(fw.k3.valid());
        CHECK_FALSE(fw.k.valid());
        CHECK_FALSE(fw.e3.valid());
        CHECK(fw.f7img.valid());
    }
    {
        auto [fw, t] = run(Variant::EnDecoderFilter);
        CHECK_FALSE(fw.k3.valid());
        CHECK(fw.k.valid());
        CHECK_FALSE(fw.f3hat.valid());
    }
}

TEST_CASE("delta-forced misf equals en-decoder with identical parameters") {
    Preset p = preset_tiny();
    MisfModel<float> misf_model(p, Variant::Misf, 42);
    misf_model.force_delta_kernels = true;
    MisfModel<float> ed_model(p, Variant::EnDecoder, 42);

    Rng rng(5);
    Tensor<float> image({2, 3, 64, 64});
    rng.fill_uniform(image, 0, 1);
    Tensor<float> mask({2, 1, 64, 64}, 0.0f);
    for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;

    Tape<float> t1, t2;
    auto fw1 = misf_model.forward(t1, image, mask, true);
    auto fw2 = ed_model.forward(t2, image, mask, true);
    CHECK(max_abs_diff(t1.value(fw1.out), t2.value(fw2.out)) == 0.0);
}

TEST_CASE("composite restores all pixels when the mask is empty") {
    Preset p = preset_tiny();
    MisfModel<float> model(p, Variant::Misf, 1);
    Rng rng(6);
    Tensor<float> image({1, 3, 64, 64});
    rng.fill_uniform(image, 0, 1);
    Tensor<float> mask({1, 1, 64, 64}, 0.0f);
    Tape<float> t;
    auto fw = model.forward(t, image, mask, true);
    CHECK(max_abs_diff(t.value(fw.out), image) == 0.0);
}

TEST_CASE("gradients reach every branch after one backward pass") {
    Preset p = preset_tiny();
    MisfModel<double> model(p, Variant::Misf, 9);
    Rng rng(7);
    Tensor<double> image({1, 3, 64, 64});
    rng.fill_uniform(image, 0, 1);
    Tensor<double> mask({1, 1, 64, 64}, 0.0);
    for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tensor<double> target({1, 3, 64, 64});
    rng.fill_uniform(target, 0, 1);

    Tape<double> t;
    auto fw = model.forward(t, image, mask);
    Var diff = ops::sub(t, fw.out, t.constant(target, "target"));
    t.backward(ops::mean_abs(t, diff));

    auto has_nonzero = [](std::vector<Parameter<double>*> params) {
        int64_t nonzero = 0;
        for (auto* p : params)
            for (int64_t i = 0; i < p->grad.size(); ++i)
                if (p->grad[i] != 0) ++nonzero;
        return nonzero;
    };
    CHECK(has_nonzero(model.sifb_params()) > 0);
    CHECK(has_nonzero(model.kpb_params()) > 0);
    CHECK(has_nonzero(model.disc_params()) == 0);  // disc untouched by the generator pass
}

TEST_CASE("parameter names are unique") {
    MisfModel<float> model(preset_tiny(), Variant::Misf, 1);
    auto params = model.all_params();
    std::vector<std::string> names;
    for (auto* p : params) names.push_back(p->name);
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("recurrent filtering keeps known pixels and tracks the fill front") {
    Preset p = preset_tiny();
    MisfModel<float> model(p, Variant::Misf, 11);
    Rng rng(8);
    Tensor<float> image({1, 3, 64, 64});
    rng.fill_uniform(image, 0, 1);
    Tensor<float> mask({1, 1, 64, 64}, 0.0f);
    // a 16x16 hole in the middle
    for (int64_t i = 24; i < 40; ++i)
        for (int64_t j = 24; j < 40; ++j) mask.at(0, 0, i, j) = 1.0f;
    Tensor<float> corrupted(image.shape());
    const int64_t hw = 64 * 64;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t q = 0; q < hw; ++q)
            corrupted[c * hw + q] = mask[q] > 0 ? 1.0f : image[c * hw + q];

    auto res = recurrent_filter(corrupted, mask, model, 3);
    REQUIRE(res.frames.size() == 4);
    REQUIRE(res.fill_front.size() == 3);
    // the front advances by the filter radius (1 for N = 3): ring sizes shrink
    CHECK(res.fill_front[0] == 60);  // outermost ring of a 16x16 block
    CHECK(res.fill_front[1] == 52);
    for (const auto& frame : res.frames)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t q = 0; q < hw; q += 501)
                if (mask[q] == 0.0f) CHECK(frame[c * hw + q] == image[c * hw + q]);
}
