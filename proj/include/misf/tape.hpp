#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "misf/errors.hpp"
#include "misf/tensor.hpp"

namespace misf {

// A named trainable tensor. Gradients accumulate across backward passes and
// are zeroed by the optimizer step.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape(), T(0)) {}

    void zero_grad() { grad.fill(T(0)); }
};

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over whole tensors. Nodes are recorded in topological
// order by construction; backward walks them once in reverse.
template <typename T>
class Tape {
  public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        bool needs_grad = false;
        Parameter<T>* param = nullptr;   // leaf bound to a parameter
        bool accumulate_param = false;   // false for frozen leaves
        std::function<void(Tape&)> backprop;
        const char* op = "";
    };

    explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

    Var leaf(Parameter<T>& p, bool frozen = false) {
        Node n;
        n.value = p.value;
        n.needs_grad = true;
        n.param = &p;
        n.accumulate_param = !frozen && p.trainable;
        n.op = "leaf";
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Var constant(Tensor<T> v, const char* op = "const") {
        Node n;
        n.value = std::move(v);
        n.needs_grad = false;
        n.op = op;
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    // Differentiable input that is not a parameter (used by grad checks).
    Var input(Tensor<T> v) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = true;
        n.op = "input";
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Var make(Tensor<T> value, std::initializer_list<Var> parents,
             std::function<void(Tape&)> backprop, const char* op) {
        bool needs = false;
        for (Var p : parents) needs = needs || node(p).needs_grad;
        if (check_finite_ && !value.all_finite())
            throw NumericError(std::string("non-finite output of op '") + op + "'");
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs;
        if (needs) n.backprop = std::move(backprop);
        n.op = op;
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Node& node(Var v) {
        check(v.valid() && v.idx < static_cast<int>(nodes_.size()), "tape: invalid var");
        return nodes_[static_cast<size_t>(v.idx)];
    }
    const Tensor<T>& value(Var v) { return node(v).value; }
    const Tensor<T>& grad(Var v) {
        Node& n = node(v);
        check(n.has_grad, "tape: node has no gradient");
        return n.grad;
    }

    bool wants_grad(Var v) { return node(v).needs_grad; }

    void accumulate(Var v, const Tensor<T>& g) {
        Node& n = node(v);
        if (!n.needs_grad) return;
        check(g.shape() == n.value.shape(), "tape: gradient shape mismatch");
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            for (int64_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
        }
    }

    void backward(Var loss) {
        if (consumed_) throw ContractError("tape: backward called twice without a new forward pass");
        Node& ln = node(loss);
        check(ln.value.size() == 1, "tape: backward needs a scalar loss");
        consumed_ = true;
        ln.grad = Tensor<T>(ln.value.shape(), T(1));
        ln.has_grad = true;
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.has_grad) continue;
            if (n.backprop) n.backprop(*this);
            if (n.param && n.accumulate_param) {
                Tensor<T>& pg = n.param->grad;
                for (int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
            }
        }
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    bool consumed() const { return consumed_; }
    bool check_finite() const { return check_finite_; }
    void set_check_finite(bool v) { check_finite_ = v; }
    size_t size() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;
    bool consumed_ = false;
    bool check_finite_ = false;
};

}  // namespace misf
