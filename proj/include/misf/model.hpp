#pragma once

// The two-branch inpainting model: SIFB (encoder-decoder that gets filtered
// at feature and image level), KPB (sibling encoder predicting the kernel
// fields), a patch discriminator, and the ablation variants.

#include <string>
#include <vector>

#include "misf/filtering.hpp"
#include "misf/nn.hpp"

namespace misf {

enum class Variant { ImgFilter, SemFilter, Misf, EnDecoder, EnDecoderFilter };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ImgFilter: return "img-filter";
        case Variant::SemFilter: return "sem-filter";
        case Variant::Misf: return "misf";
        case Variant::EnDecoder: return "en-decoder";
        case Variant::EnDecoderFilter: return "en-decoder-filter";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::ImgFilter, Variant::SemFilter, Variant::Misf,
                      Variant::EnDecoder, Variant::EnDecoderFilter})
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown variant '" + s + "'");
}

struct Preset {
    std::string name;
    int image_size = 256;
    int base_channels = 64;   // encoder widths are base, 2*base, 4*base
    int middle_blocks = 8;
    int filter_n = 3;
    int batch_size = 16;
};

inline Preset preset_full256() { return {"full-256", 256, 64, 8, 3, 16}; }
inline Preset preset_tiny() { return {"misf-tiny", 64, 16, 2, 3, 4}; }

inline Preset parse_preset(const std::string& s) {
    if (s == "full-256") return preset_full256();
    if (s == "misf-tiny") return preset_tiny();
    throw ConfigError("unknown preset '" + s + "'");
}

template <typename T>
struct MisfModel {
    Preset preset;
    Variant variant = Variant::Misf;
    FilterConfig feat_cfg;  // semantic filtering at layer l = 3
    FilterConfig img_cfg;   // image-level filtering
    bool force_delta_kernels = false;  // bypass the KPB, filter with identity kernels

    struct Sifb {
        Conv2d<T> enc1, enc2, enc3;
        InstanceNorm<T> n2, n3;
        std::vector<Conv2d<T>> mid;
        std::vector<InstanceNorm<T>> nmid;
        ConvT2d<T> dec1, dec2;
        InstanceNorm<T> nd1, nd2;
        Conv2d<T> out;
    } sifb;

    struct Kpb {
        Conv2d<T> enc1, enc2, enc3;
        InstanceNorm<T> n2, n3;
        Conv2d<T> k3_head;  // 1x1 conv to G*N^2 channels
        std::vector<Conv2d<T>> mid;
        std::vector<InstanceNorm<T>> nmid;
        ConvT2d<T> dec1, dec2;
        InstanceNorm<T> nd1, nd2;
        Conv2d<T> k_head;  // 7x7 size-preserving conv to C*N^2 channels
    } kpb;

    struct Disc {
        Conv2d<T> c1, c2, c3, c4, c5;
    } disc;

    MisfModel(Preset p, Variant v, uint64_t seed) : preset(p), variant(v) {
        const int c1 = p.base_channels, c2 = 2 * c1, c3 = 4 * c1, n = p.filter_n;
        feat_cfg = {n, c3, true, Boundary::ZeroPad};
        img_cfg = {n, 3, true, Boundary::Replicate};
        Rng rng(seed);

        // conv(4) at stride 1 keeps H x W with asymmetric padding (1,1,2,2)
        const Pad p4s1{1, 1, 2, 2};

        sifb.enc1.init("sifb.enc1", 7, 3, c1, 1, Pad::same(3), rng);
        sifb.enc2.init("sifb.enc2", 4, c1, c2, 2, Pad::same(1), rng);
        sifb.n2.init("sifb.n2", c2);
        sifb.enc3.init("sifb.enc3", 4, c2, c3, 1, p4s1, rng);
        sifb.n3.init("sifb.n3", c3);
        sifb.mid.resize(p.middle_blocks);
        sifb.nmid.resize(p.middle_blocks);
        for (int i = 0; i < p.middle_blocks; ++i) {
            sifb.mid[i].init("sifb.mid" + std::to_string(i), 1, c3, c3, 1, {}, rng);
            sifb.nmid[i].init("sifb.nmid" + std::to_string(i), c3);
        }
        sifb.dec1.init("sifb.dec1", 4, c3, c2, 2, Pad::same(1), rng);
        sifb.nd1.init("sifb.nd1", c2);
        sifb.dec2.init("sifb.dec2", 4, c2, c1, 2, Pad::same(1), rng);
        sifb.nd2.init("sifb.nd2", c1);
        sifb.out.init("sifb.out", 7, c1, 3, 1, Pad::same(3), rng);

        const int n2t = n * n;
        kpb.enc1.init("kpb.enc1", 7, 3, c1, 1, Pad::same(3), rng);
        kpb.enc2.init("kpb.enc2", 4, c1, c2, 2, Pad::same(1), rng);
        kpb.n2.init("kpb.n2", c2);
        kpb.enc3.init("kpb.enc3", 4, 2 * c2, c3, 1, p4s1, rng);
        kpb.n3.init("kpb.n3", c3);
        kpb.k3_head.init("kpb.k3_head", 1, c3, c3 * n2t, 1, {}, rng);
        kpb.mid.resize(p.middle_blocks);
        kpb.nmid.resize(p.middle_blocks);
        for (int i = 0; i < p.middle_blocks; ++i) {
            kpb.mid[i].init("kpb.mid" + std::to_string(i), 1, c3, c3, 1, {}, rng);
            kpb.nmid[i].init("kpb.nmid" + std::to_string(i), c3);
        }
        kpb.dec1.init("kpb.dec1", 4, c3, c2, 2, Pad::same(1), rng);
        kpb.nd1.init("kpb.nd1", c2);
        kpb.dec2.init("kpb.dec2", 4, c2, c1, 2, Pad::same(1), rng);
        kpb.nd2.init("kpb.nd2", c1);
        kpb.k_head.init("kpb.k_head", 7, c1, 3 * n2t, 1, Pad::same(3), rng);
        // Bias the center-tap logit so both filters start near the identity;
        // the heads then learn deviations (repairs) instead of undoing an
        // arbitrary initial blur.
        for (int64_t c = n2t / 2; c < kpb.k3_head.b.value.size(); c += n2t)
            kpb.k3_head.b.value[c] += T(4);
        for (int64_t c = n2t / 2; c < kpb.k_head.b.value.size(); c += n2t)
            kpb.k_head.b.value[c] += T(4);

        // PatchGAN-style discriminator, five stride-2 4x4 convs
        disc.c1.init("disc.c1", 4, 3, c1, 2, Pad::same(1), rng);
        disc.c2.init("disc.c2", 4, c1, c2, 2, Pad::same(1), rng);
        disc.c3.init("disc.c3", 4, c2, c3, 2, Pad::same(1), rng);
        disc.c4.init("disc.c4", 4, c3, 2 * c3, 2, Pad::same(1), rng);
        disc.c5.init("disc.c5", 4, 2 * c3, 1, 2, Pad::same(1), rng);
    }

    bool uses_kpb() const { return !force_delta_kernels && variant != Variant::EnDecoder; }
    bool uses_k3() const {
        return variant == Variant::Misf || variant == Variant::SemFilter;
    }
    bool uses_k() const {
        return variant == Variant::Misf || variant == Variant::ImgFilter ||
               variant == Variant::EnDecoderFilter;
    }
    bool uses_sifb_decoder() const { return variant != Variant::ImgFilter; }

    std::vector<Parameter<T>*> sifb_params() {
        std::vector<Parameter<T>*> v;
        sifb.enc1.collect(v);
        sifb.enc2.collect(v);
        sifb.n2.collect(v);
        sifb.enc3.collect(v);
        sifb.n3.collect(v);
        for (size_t i = 0; i < sifb.mid.size(); ++i) {
            sifb.mid[i].collect(v);
            sifb.nmid[i].collect(v);
        }
        sifb.dec1.collect(v);
        sifb.nd1.collect(v);
        sifb.dec2.collect(v);
        sifb.nd2.collect(v);
        sifb.out.collect(v);
        return v;
    }
    std::vector<Parameter<T>*> kpb_params() {
        std::vector<Parameter<T>*> v;
        kpb.enc1.collect(v);
        kpb.enc2.collect(v);
        kpb.n2.collect(v);
        kpb.enc3.collect(v);
        kpb.n3.collect(v);
        kpb.k3_head.collect(v);
        for (size_t i = 0; i < kpb.mid.size(); ++i) {
            kpb.mid[i].collect(v);
            kpb.nmid[i].collect(v);
        }
        kpb.dec1.collect(v);
        kpb.nd1.collect(v);
        kpb.dec2.collect(v);
        kpb.nd2.collect(v);
        kpb.k_head.collect(v);
        return v;
    }
    std::vector<Parameter<T>*> disc_params() {
        std::vector<Parameter<T>*> v;
        disc.c1.collect(v);
        disc.c2.collect(v);
        disc.c3.collect(v);
        disc.c4.collect(v);
        disc.c5.collect(v);
        return v;
    }
    std::vector<Parameter<T>*> generator_params() {
        auto v = sifb_params();
        auto k = kpb_params();
        v.insert(v.end(), k.begin(), k.end());
        return v;
    }
    std::vector<Parameter<T>*> all_params() {
        auto v = generator_params();
        auto d = disc_params();
        v.insert(v.end(), d.begin(), d.end());
        return v;
    }

    // Intermediate tensors of one forward pass (unused Vars stay invalid).
    struct Forward {
        Var f1, f2, f2p, f3, f3hat, f7img;
        Var e3, k3, k;
        Var ihat;  // pre-composite completed image, clamped to [0,1]
        Var out;   // composited output
    };

    Forward forward(Tape<T>& t, const Tensor<T>& image, const Tensor<T>& mask,
                    bool frozen = false) {
        check(image.shape().c == 3, "model: input must have 3 channels, got " + image.shape().str());
        using namespace ops;
        Forward fw;
        Var img = t.constant(image, "image");

        // SIFB encoder
        fw.f1 = activation(t, sifb.enc1(t, img, frozen), Act::Relu);
        fw.f2 = activation(t, sifb.n2(t, sifb.enc2(t, fw.f1, frozen), frozen), Act::Relu);
        fw.f2p = avg_pool2d(t, fw.f2);
        fw.f3 = activation(t, sifb.n3(t, sifb.enc3(t, fw.f2p, frozen), frozen), Act::Relu);

        // KPB
        if (uses_kpb()) {
            Var e1 = activation(t, kpb.enc1(t, img, frozen), Act::Relu);
            Var e2 = activation(t, kpb.n2(t, kpb.enc2(t, e1, frozen), frozen), Act::Relu);
            Var e2p = avg_pool2d(t, e2);
            fw.e3 = activation(
                t, kpb.n3(t, kpb.enc3(t, concat_channels(t, fw.f2p, e2p), frozen), frozen),
                Act::Relu);
            if (uses_k3())
                fw.k3 = tap_softmax(t, kpb.k3_head(t, fw.e3, frozen), feat_cfg.n * feat_cfg.n);
            if (uses_k()) {
                Var e = fw.e3;
                for (size_t i = 0; i < kpb.mid.size(); ++i)
                    e = activation(t, kpb.nmid[i](t, kpb.mid[i](t, e, frozen), frozen), Act::Relu);
                e = activation(t, kpb.nd1(t, kpb.dec1(t, e, frozen), frozen), Act::Relu);
                e = activation(t, kpb.nd2(t, kpb.dec2(t, e, frozen), frozen), Act::Relu);
                fw.k = tap_softmax(t, kpb.k_head(t, e, frozen), img_cfg.n * img_cfg.n);
            }
        }

        const Shape is = image.shape();
        auto delta_feat = [&] {
            const Shape fs = t.value(fw.f3).shape();
            return t.constant(delta_kernel_field<T>(fs.b, feat_cfg, fs.h, fs.w), "delta_k3");
        };
        auto delta_img = [&] {
            return t.constant(delta_kernel_field<T>(is.b, img_cfg, is.h, is.w), "delta_k");
        };

        Var ihat;
        if (variant == Variant::ImgFilter) {
            Var k = force_delta_kernels ? delta_img() : fw.k;
            ihat = pixel_filter(t, img, k, img_cfg);
        } else {
            // feature-level filter site (l = 3)
            bool feat_filter = variant == Variant::Misf || variant == Variant::SemFilter;
            Var f = fw.f3;
            if (feat_filter) {
                Var k3 = force_delta_kernels ? delta_feat() : fw.k3;
                fw.f3hat = pixel_filter(t, f, k3, feat_cfg);
                f = fw.f3hat;
            }
            for (size_t i = 0; i < sifb.mid.size(); ++i)
                f = activation(t, sifb.nmid[i](t, sifb.mid[i](t, f, frozen), frozen), Act::Relu);
            f = activation(t, sifb.nd1(t, sifb.dec1(t, f, frozen), frozen), Act::Relu);
            f = activation(t, sifb.nd2(t, sifb.dec2(t, f, frozen), frozen), Act::Relu);
            Var f7 = activation(t, sifb.out(t, f, frozen), Act::Tanh);
            fw.f7img = affine(t, f7, T(0.5), T(0.5));  // [-1,1] -> [0,1]

            bool img_filter = variant == Variant::Misf || variant == Variant::EnDecoderFilter;
            if (img_filter) {
                Var k = force_delta_kernels ? delta_img() : fw.k;
                ihat = pixel_filter(t, fw.f7img, k, img_cfg);
            } else {
                ihat = fw.f7img;
            }
        }

        fw.ihat = clamp01(t, ihat);
        fw.out = composite(t, fw.ihat, image, mask);
        return fw;
    }

    Var discriminator_forward(Tape<T>& t, Var image, bool frozen = false) {
        using namespace ops;
        Var x = activation(t, disc.c1(t, image, frozen), Act::LeakyRelu);
        x = activation(t, disc.c2(t, x, frozen), Act::LeakyRelu);
        x = activation(t, disc.c3(t, x, frozen), Act::LeakyRelu);
        x = activation(t, disc.c4(t, x, frozen), Act::LeakyRelu);
        return disc.c5(t, x, frozen);
    }
};

// Image-level recurrent filtering demo: re-feed the model its own output,
// re-imposing unmasked pixels after every iteration. Returns the T+1 frames
// plus a fill-front trace: per iteration, how many still-unfilled hole pixels
// came within filter radius of known-or-filled territory.
template <typename T>
struct RecurrentResult {
    std::vector<Tensor<T>> frames;
    std::vector<int64_t> fill_front;
};

template <typename T>
RecurrentResult<T> recurrent_filter(const Tensor<T>& image, const Tensor<T>& mask,
                                    MisfModel<T>& model, int iterations) {
    check(iterations >= 0, "recurrent_filter: negative iteration count");
    RecurrentResult<T> res;
    res.frames.push_back(image);

    const Shape ms = mask.shape();
    Tensor<T> hole = mask;  // 1 = not yet reached by the fill front
    const int r = model.img_cfg.n / 2;

    Tensor<T> cur = image;
    for (int it = 0; it < iterations; ++it) {
        Tape<T> t;
        auto fw = model.forward(t, cur, mask, /*frozen=*/true);
        cur = t.value(fw.out);
        res.frames.push_back(cur);

        // advance the fill front by the filter radius
        Tensor<T> next = hole;
        int64_t newly = 0;
        for (int64_t b = 0; b < ms.b; ++b)
            for (int64_t i = 0; i < ms.h; ++i)
                for (int64_t j = 0; j < ms.w; ++j) {
                    if (hole.at(b, 0, i, j) == T(0)) continue;
                    bool reached = false;
                    for (int dy = -r; dy <= r && !reached; ++dy)
                        for (int dx = -r; dx <= r && !reached; ++dx) {
                            int64_t qi = i + dy, qj = j + dx;
                            if (qi < 0 || qi >= ms.h || qj < 0 || qj >= ms.w) continue;
                            if (hole.at(b, 0, qi, qj) == T(0)) reached = true;
                        }
                    if (reached) {
                        next.at(b, 0, i, j) = T(0);
                        ++newly;
                    }
                }
        hole = next;
        res.fill_front.push_back(newly);
    }
    return res;
}

}  // namespace misf
