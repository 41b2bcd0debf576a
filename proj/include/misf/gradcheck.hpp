#pragma once

// Central-difference verification of every differentiable op and of the full
// model objective, always in double precision.

#include <functional>

#include "misf/losses.hpp"
#include "misf/train.hpp"

namespace misf {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    int64_t probes = 0;
    bool finite = true;
    bool ok(double tol = 1e-4) const { return finite && max_rel_err < tol; }
};

namespace gradcheck_detail {

inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

}  // namespace gradcheck_detail

// builder maps leaf Vars (one per input tensor) to a scalar loss. Analytic
// gradients come from one backward pass; numeric ones from central
// differences on a deterministic sample of elements per input.
inline GradCheckResult grad_check(
    const std::string& name, std::vector<Tensor<double>> inputs,
    const std::function<Var(Tape<double>&, const std::vector<Var>&)>& builder,
    int64_t samples_per_input = 24, double eps = 1e-5) {
    GradCheckResult res;
    res.name = name;

    auto eval = [&](const std::vector<Tensor<double>>& vals) {
        Tape<double> t;
        std::vector<Var> vars;
        for (const auto& v : vals) vars.push_back(t.input(v));
        Var loss = builder(t, vars);
        return t.value(loss)[0];
    };

    Tape<double> t;
    std::vector<Var> vars;
    for (const auto& v : inputs) vars.push_back(t.input(v));
    Var loss = builder(t, vars);
    t.backward(loss);

    Rng rng(fnv1a(name));
    for (size_t k = 0; k < inputs.size(); ++k) {
        const Tensor<double>& analytic = t.grad(vars[k]);
        const int64_t n = inputs[k].size();
        const int64_t probes = std::min(samples_per_input, n);
        for (int64_t s = 0; s < probes; ++s) {
            int64_t i = n <= samples_per_input ? s : rng.uniform_int(n);
            std::vector<Tensor<double>> plus = inputs, minus = inputs;
            plus[k][i] += eps;
            minus[k][i] -= eps;
            double numeric = (eval(plus) - eval(minus)) / (2 * eps);
            double a = analytic[i];
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                res.finite = false;
                continue;
            }
            res.max_rel_err = std::max(res.max_rel_err, gradcheck_detail::rel_err(a, numeric));
            ++res.probes;
        }
    }
    return res;
}

// Verifies parameter gradients of the full misf-tiny style objective by
// finite differences on a sample of entries of every layer family.
inline GradCheckResult grad_check_model(Variant variant = Variant::Misf,
                                        int64_t probes_per_param = 2) {
    GradCheckResult res;
    res.name = "model-" + variant_name(variant);

    Preset p{"gradcheck", 32, 4, 1, 3, 1};
    MisfModel<double> model(p, variant, 11);
    FeatureExtractor<double> fx(7);
    LossWeights w;  // all four terms active

    Rng rng(123);
    Tensor<double> image({1, 3, 32, 32});
    rng.fill_uniform(image, 0.0, 1.0);
    Tensor<double> clean({1, 3, 32, 32});
    rng.fill_uniform(clean, 0.0, 1.0);
    Tensor<double> mask({1, 1, 32, 32});
    for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;

    // The discriminator stays live here so its parameters are part of the
    // checked function; training freezes it for the generator step instead.
    auto eval = [&]() {
        Tape<double> t;
        auto fw = model.forward(t, image, mask);
        Var logits = model.discriminator_forward(t, fw.out);
        TotalLoss<double> loss =
            total_loss(t, fw.out, t.constant(clean, "target"), w, logits, &fx);
        return std::pair<double, Tape<double>>(t.value(loss.total)[0], std::move(t));
    };

    // analytic pass
    for (auto* param : model.all_params()) param->zero_grad();
    {
        Tape<double> t;
        auto fw = model.forward(t, image, mask);
        Var logits = model.discriminator_forward(t, fw.out);
        TotalLoss<double> loss =
            total_loss(t, fw.out, t.constant(clean, "target"), w, logits, &fx);
        t.backward(loss.total);
    }

    const double eps = 1e-5;
    Rng pick(99);
    for (auto* param : model.all_params()) {
        for (int64_t s = 0; s < probes_per_param; ++s) {
            int64_t i = pick.uniform_int(param->value.size());
            double orig = param->value[i];
            param->value[i] = orig + eps;
            double fp = eval().first;
            param->value[i] = orig - eps;
            double fm = eval().first;
            param->value[i] = orig;
            double numeric = (fp - fm) / (2 * eps);
            double a = param->grad[i];
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                res.finite = false;
                continue;
            }
            res.max_rel_err = std::max(res.max_rel_err, gradcheck_detail::rel_err(a, numeric));
            ++res.probes;
        }
    }
    return res;
}

// The registry the CLI gradcheck subcommand and unit tests iterate over.
inline std::vector<GradCheckResult> run_all_grad_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(2024);

    auto rnd = [&](Shape s, double lo = -1.0, double hi = 1.0) {
        Tensor<double> t(s);
        rng.fill_uniform(t, lo, hi);
        return t;
    };

    {
        Rng wr(5);
        Tensor<double> w({4, 3, 3, 3});
        wr.fill_uniform(w, -0.5, 0.5);
        Tensor<double> b({1, 4, 1, 1});
        wr.fill_uniform(b, -0.5, 0.5);
        out.push_back(grad_check(
            "conv2d", {rnd({2, 3, 6, 6}), w, b},
            [](Tape<double>& t, const std::vector<Var>& v) {
                return ops::mean(t, ops::conv2d(t, v[0], v[1], v[2], 2, Pad::same(1)));
            }));
    }
    {
        Rng wr(6);
        Tensor<double> w({3, 4, 4, 4});
        wr.fill_uniform(w, -0.5, 0.5);
        Tensor<double> b({1, 4, 1, 1});
        wr.fill_uniform(b, -0.5, 0.5);
        out.push_back(grad_check(
            "conv_transpose2d", {rnd({2, 3, 5, 5}), w, b},
            [](Tape<double>& t, const std::vector<Var>& v) {
                return ops::mean_abs(t, ops::conv_transpose2d(t, v[0], v[1], v[2], 2, Pad::same(1)));
            }));
    }
    out.push_back(grad_check("avg_pool2d", {rnd({2, 3, 6, 6})},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return ops::mean_abs(t, ops::avg_pool2d(t, v[0]));
                             }));
    out.push_back(grad_check("instance_norm", {rnd({2, 3, 5, 5}), rnd({1, 3, 1, 1}, 0.5, 1.5),
                                               rnd({1, 3, 1, 1})},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return ops::mean_abs(t, ops::instance_norm(t, v[0], v[1], v[2]));
                             }));
    out.push_back(grad_check("tap_softmax", {rnd({1, 18, 4, 4})},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return ops::mean_abs(t, ops::tap_softmax(t, v[0], 9));
                             }));
    for (Boundary bd : {Boundary::ZeroPad, Boundary::Replicate}) {
        FilterConfig per_channel{3, 4, false, bd};
        std::string nm = std::string("pixel_filter-") +
                         (bd == Boundary::ZeroPad ? "zeropad" : "replicate");
        out.push_back(grad_check(nm, {rnd({1, 4, 5, 5}), rnd({1, 36, 5, 5})},
                                 [per_channel](Tape<double>& t, const std::vector<Var>& v) {
                                     return ops::mean_abs(
                                         t, ops::pixel_filter(t, v[0], v[1], per_channel));
                                 }));
    }
    {
        // feature-style filtering: softmax-normalized per-channel kernels
        FilterConfig cfg{3, 4, false, Boundary::ZeroPad};
        out.push_back(grad_check(
            "feature_filter", {rnd({1, 4, 5, 5}), rnd({1, 36, 5, 5})},
            [cfg](Tape<double>& t, const std::vector<Var>& v) {
                Var k = ops::tap_softmax(t, v[1], 9);
                return ops::mean_abs(t, ops::pixel_filter(t, v[0], k, cfg));
            }));
    }
    out.push_back(grad_check("l1_loss", {rnd({1, 3, 6, 6}), rnd({1, 3, 6, 6})},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return l1_loss(t, v[0], v[1]);
                             }));
    {
        Tensor<double> mask({1, 1, 6, 6});
        for (int64_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        out.push_back(grad_check("masked_l1_loss", {rnd({1, 3, 6, 6}), rnd({1, 3, 6, 6})},
                                 [mask](Tape<double>& t, const std::vector<Var>& v) {
                                     return l1_loss(t, v[0], v[1], t.constant(mask, "mask"));
                                 }));
    }
    out.push_back(grad_check("generator_gan_loss", {rnd({1, 1, 3, 3}, -2.0, 2.0)},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return generator_gan_loss(t, v[0]);
                             }));
    out.push_back(grad_check("discriminator_gan_loss",
                             {rnd({1, 1, 3, 3}, -2.0, 2.0), rnd({1, 1, 3, 3}, -2.0, 2.0)},
                             [](Tape<double>& t, const std::vector<Var>& v) {
                                 return discriminator_gan_loss(t, v[0], v[1]);
                             }));
    {
        auto fx = std::make_shared<FeatureExtractor<double>>(7);
        out.push_back(grad_check("perceptual_loss",
                                 {rnd({1, 3, 16, 16}, 0.0, 1.0), rnd({1, 3, 16, 16}, 0.0, 1.0)},
                                 [fx](Tape<double>& t, const std::vector<Var>& v) {
                                     return perceptual_loss(t, v[0], v[1], *fx);
                                 }));
        out.push_back(grad_check("style_loss",
                                 {rnd({1, 3, 16, 16}, 0.0, 1.0), rnd({1, 3, 16, 16}, 0.0, 1.0)},
                                 [fx](Tape<double>& t, const std::vector<Var>& v) {
                                     return style_loss(t, v[0], v[1], *fx);
                                 }));
    }
    out.push_back(grad_check_model(Variant::Misf));
    return out;
}

}  // namespace misf
