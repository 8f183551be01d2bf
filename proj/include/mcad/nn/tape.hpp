#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mcad/nn/tensor.hpp"

namespace mcad::nn {

/// Named learnable array with a persistent gradient buffer.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

    void zero_grad() { grad.zero(); }
};

/// Reverse-mode tape. Ops append nodes in topological order; backward() walks
/// the nodes once in reverse, then flushes gradients of bound parameters.
/// One tape per forward pass; clear() or a fresh tape per step.
template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;  // allocated lazily; empty means "no gradient flowed"
        bool needs_grad = false;
        std::function<void(Tape&)> backward;  // null for leaves
    };

    int leaf(Tensor<T> v, bool needs_grad = false) {
        Node n;
        n.val = std::move(v);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return int(nodes_.size()) - 1;
    }

    int constant(Tensor<T> v) { return leaf(std::move(v), false); }

    /// Leases a parameter onto the tape; after backward(), the node gradient
    /// is accumulated into p.grad.
    int param(Parameter<T>& p) {
        int id = leaf(p.value, true);
        bound_.emplace_back(id, &p);
        return id;
    }

    int emit(Tensor<T> val, bool needs_grad, std::function<void(Tape&)> backward) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        if (needs_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return int(nodes_.size()) - 1;
    }

    Tensor<T>& val(int id) { return nodes_[size_t(id)].val; }
    const Tensor<T>& val(int id) const { return nodes_[size_t(id)].val; }

    bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

    /// Gradient buffer, allocated (zeroed) on first touch.
    Tensor<T>& grad(int id) {
        Node& n = nodes_[size_t(id)];
        if (n.grad.empty()) n.grad = Tensor<T>(n.val.shape);
        return n.grad;
    }

    bool grad_touched(int id) const { return !nodes_[size_t(id)].grad.empty(); }

    /// Accumulates into a parent's grad only when the parent wants gradients.
    void accumulate(int id, const Tensor<T>& g) {
        Node& n = nodes_[size_t(id)];
        if (!n.needs_grad) return;
        Tensor<T>& dst = grad(id);
        for (int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    void backward(int root) {
        check_shape(val(root).size() == 1, "backward root must be scalar");
        grad(root)[0] = T(1);
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (n.backward && !n.grad.empty()) n.backward(*this);
        }
        for (auto& [id, p] : bound_) {
            Node& n = nodes_[size_t(id)];
            if (n.grad.empty()) continue;
            for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    }

    void clear() {
        nodes_.clear();
        bound_.clear();
    }

    size_t node_count() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
    std::vector<std::pair<int, Parameter<T>*>> bound_;
};

}  // namespace mcad::nn
