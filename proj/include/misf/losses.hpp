#pragma once

// The four-term training objective: L1, non-saturating GAN, perceptual and
// style terms computed against a frozen feature extractor.

#include <array>

#include "misf/model.hpp"

namespace misf {

struct LossWeights {
    double l1 = 1.0;      // lambda1
    double gan = 0.1;     // lambda2
    double perc = 0.1;    // lambda3
    double style = 250.0; // lambda4
};

// Frozen conv stack used by the perceptual and style terms. Four 3x3 stride-2
// stages (16/32/64/128 channels); weights come from a recorded seed or an
// external MTF1 file. Parameters never receive gradients.
template <typename T>
struct FeatureExtractor {
    std::array<Conv2d<T>, 4> convs;

    explicit FeatureExtractor(uint64_t seed) {
        Rng rng(seed);
        const int ch[5] = {3, 16, 32, 64, 128};
        for (int i = 0; i < 4; ++i) {
            convs[static_cast<size_t>(i)].init("fx.c" + std::to_string(i + 1), 3, ch[i], ch[i + 1],
                                               2, Pad::same(1), rng);
            convs[static_cast<size_t>(i)].w.trainable = false;
            convs[static_cast<size_t>(i)].b.trainable = false;
        }
    }

    std::vector<Var> taps(Tape<T>& t, Var x) {
        std::vector<Var> out;
        Var v = x;
        for (auto& c : convs) {
            v = ops::activation(t, c(t, v, /*frozen=*/true), ops::Act::Relu);
            out.push_back(v);
        }
        return out;
    }

    void save(const std::string& dir) const {
        for (const auto& c : convs) {
            write_mtf1(dir + "/" + c.w.name + ".mtf", c.w.value);
            write_mtf1(dir + "/" + c.b.name + ".mtf", c.b.value);
        }
    }
    void load(const std::string& dir) {
        for (auto& c : convs) {
            Tensor<T> w = read_mtf1<T>(dir + "/" + c.w.name + ".mtf");
            check(w.shape() == c.w.value.shape(), "fx load: shape mismatch for " + c.w.name);
            c.w.value = std::move(w);
            c.b.value = read_mtf1<T>(dir + "/" + c.b.name + ".mtf");
        }
    }
};

template <typename T>
Var l1_loss(Tape<T>& t, Var pred, Var target, Var mask = {}) {
    Var d = ops::sub(t, pred, target);
    if (mask.valid()) return ops::masked_mean_abs(t, d, mask);
    return ops::mean_abs(t, d);
}

// non-saturating generator objective: mean softplus(-D(fake))
template <typename T>
Var generator_gan_loss(Tape<T>& t, Var fake_logits) {
    return ops::mean(t, ops::activation(t, ops::affine(t, fake_logits, T(-1), T(0)),
                                        ops::Act::Softplus));
}

// discriminator objective: mean softplus(-D(real)) + mean softplus(D(fake))
template <typename T>
Var discriminator_gan_loss(Tape<T>& t, Var real_logits, Var fake_logits) {
    Var lr = ops::mean(t, ops::activation(t, ops::affine(t, real_logits, T(-1), T(0)),
                                          ops::Act::Softplus));
    Var lf = ops::mean(t, ops::activation(t, fake_logits, ops::Act::Softplus));
    return ops::add(t, lr, lf);
}

template <typename T>
Var perceptual_loss(Tape<T>& t, Var pred, Var target, FeatureExtractor<T>& fx) {
    auto tp = fx.taps(t, pred);
    auto tt_ = fx.taps(t, target);
    Var total{};
    for (size_t i = 0; i < tp.size(); ++i) {
        Var term = ops::mean_abs(t, ops::sub(t, tp[i], tt_[i]));
        total = total.valid() ? ops::add(t, total, term) : term;
    }
    return total;
}

template <typename T>
Var style_loss(Tape<T>& t, Var pred, Var target, FeatureExtractor<T>& fx) {
    auto tp = fx.taps(t, pred);
    auto tt_ = fx.taps(t, target);
    Var total{};
    for (size_t i = 0; i < tp.size(); ++i) {
        Var term = ops::mean_abs(t, ops::sub(t, ops::gram(t, tp[i]), ops::gram(t, tt_[i])));
        total = total.valid() ? ops::add(t, total, term) : term;
    }
    return total;
}

template <typename T>
struct TotalLoss {
    Var total;
    double l1 = 0, gan = 0, perc = 0, style = 0;  // unweighted per-term values
};

// weights.gan > 0 requires disc_logits_fake; zero-weight terms are skipped
// entirely (their cost too), so the breakdown reports them as 0.
template <typename T>
TotalLoss<T> total_loss(Tape<T>& t, Var pred, Var target, const LossWeights& w,
                        Var disc_logits_fake, FeatureExtractor<T>* fx, Var mask = {}) {
    TotalLoss<T> res;
    Var acc{};
    auto weighted = [&](Var term, double lambda) {
        Var wterm = ops::affine(t, term, T(lambda), T(0));
        acc = acc.valid() ? ops::add(t, acc, wterm) : wterm;
    };

    Var l1 = l1_loss(t, pred, target, mask);
    res.l1 = static_cast<double>(t.value(l1)[0]);
    weighted(l1, w.l1);

    if (w.gan != 0) {
        check(disc_logits_fake.valid(), "total_loss: GAN term requires discriminator logits");
        Var g = generator_gan_loss(t, disc_logits_fake);
        res.gan = static_cast<double>(t.value(g)[0]);
        weighted(g, w.gan);
    }
    if (w.perc != 0 || w.style != 0)
        check(fx != nullptr, "total_loss: perceptual/style terms require a feature extractor");
    if (w.perc != 0) {
        Var p = perceptual_loss(t, pred, target, *fx);
        res.perc = static_cast<double>(t.value(p)[0]);
        weighted(p, w.perc);
    }
    if (w.style != 0) {
        Var s = style_loss(t, pred, target, *fx);
        res.style = static_cast<double>(t.value(s)[0]);
        weighted(s, w.style);
    }
    res.total = acc;
    return res;
}

}  // namespace misf
