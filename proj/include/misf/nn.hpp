#pragma once

#include <string>
#include <vector>

#include "misf/ops.hpp"

namespace misf {

// Fan-in-scaled uniform init, one shared Rng so parameter values are a pure
// function of the seed and the layer construction order.

template <typename T>
struct Conv2d {
    Parameter<T> w, b;  // w [Cout, Cin, k, k]
    int stride = 1;
    Pad pad;

    void init(const std::string& name, int k, int cin, int cout, int stride_, Pad pad_, Rng& rng) {
        stride = stride_;
        pad = pad_;
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
        Tensor<T> wt({cout, cin, k, k});
        rng.fill_uniform(wt, -bound, bound);
        Tensor<T> bt({1, cout, 1, 1});
        rng.fill_uniform(bt, -bound, bound);
        w = Parameter<T>(name + ".w", std::move(wt));
        b = Parameter<T>(name + ".b", std::move(bt));
    }

    Var operator()(Tape<T>& t, Var x, bool frozen = false) {
        return ops::conv2d(t, x, t.leaf(w, frozen), t.leaf(b, frozen), stride, pad);
    }

    int64_t param_count() const { return w.value.size() + b.value.size(); }
    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct ConvT2d {
    Parameter<T> w, b;  // w [Cin, Cout, k, k]
    int stride = 1;
    Pad pad;

    void init(const std::string& name, int k, int cin, int cout, int stride_, Pad pad_, Rng& rng) {
        stride = stride_;
        pad = pad_;
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
        Tensor<T> wt({cin, cout, k, k});
        rng.fill_uniform(wt, -bound, bound);
        Tensor<T> bt({1, cout, 1, 1});
        rng.fill_uniform(bt, -bound, bound);
        w = Parameter<T>(name + ".w", std::move(wt));
        b = Parameter<T>(name + ".b", std::move(bt));
    }

    Var operator()(Tape<T>& t, Var x, bool frozen = false) {
        return ops::conv_transpose2d(t, x, t.leaf(w, frozen), t.leaf(b, frozen), stride, pad);
    }

    int64_t param_count() const { return w.value.size() + b.value.size(); }
    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct InstanceNorm {
    Parameter<T> gamma, beta;

    void init(const std::string& name, int channels) {
        gamma = Parameter<T>(name + ".gamma", Tensor<T>({1, channels, 1, 1}, T(1)));
        beta = Parameter<T>(name + ".beta", Tensor<T>({1, channels, 1, 1}, T(0)));
    }

    Var operator()(Tape<T>& t, Var x, bool frozen = false) {
        return ops::instance_norm(t, x, t.leaf(gamma, frozen), t.leaf(beta, frozen));
    }

    int64_t param_count() const { return gamma.value.size() + beta.value.size(); }
    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

}  // namespace misf
