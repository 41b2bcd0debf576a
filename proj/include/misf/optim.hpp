#pragma once

#include <cmath>
#include <vector>

#include "misf/tape.hpp"

namespace misf {

// Bias-corrected Adam over a fixed parameter list. Moments are stored by
// position, so the list order must stay stable across steps and checkpoints.
template <typename T>
class Adam {
  public:
    Adam(std::vector<Parameter<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        check(lr_ > 0, "adam: lr must be positive");
        for (auto* p : params_) {
            m_.emplace_back(p->value.shape(), T(0));
            v_.emplace_back(p->value.shape(), T(0));
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Parameter<T>& p = *params_[k];
            if (!p.trainable) continue;
            check(p.grad.shape() == p.value.shape(), "adam: missing gradient for " + p.name);
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            for (int64_t i = 0; i < p.value.size(); ++i) {
                double g = static_cast<double>(p.grad[i]);
                double mi = beta1_ * static_cast<double>(m[i]) + (1 - beta1_) * g;
                double vi = beta2_ * static_cast<double>(v[i]) + (1 - beta2_) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                double upd = lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_);
                p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - upd);
            }
            p.zero_grad();
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    int64_t t() const { return t_; }
    void set_t(int64_t t) { t_ = t; }
    size_t size() const { return params_.size(); }
    const std::vector<Parameter<T>*>& params() const { return params_; }
    Tensor<T>& moment1(size_t k) { return m_[k]; }
    Tensor<T>& moment2(size_t k) { return v_[k]; }

  private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace misf
