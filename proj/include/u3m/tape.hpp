#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "u3m/error.hpp"
#include "u3m/tensor.hpp"

namespace u3m {

/// Gradients keyed by leaf name, in deterministic (lexicographic) order.
using Gradients = std::map<std::string, Tensor>;

/// Records one forward pass for reverse-mode differentiation. Nodes are
/// appended in execution order, so reverse iteration is a valid topological
/// sweep. A tape serves exactly one backward pass and is cleared by it.
class Tape {
  public:
    using BackFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a differentiable leaf. Named leaves appear in the backward
    /// result; unnamed leaves still receive gradient flow internally.
    Tensor watch(const Tensor& t, std::string name = {}) {
        require_live("watch");
        Node n;
        n.leaf_name = std::move(name);
        n.shape = t.shape();
        nodes_.push_back(std::move(n));
        Tensor out = t.detached();
        out.bind(this, static_cast<int>(nodes_.size()) - 1);
        return out;
    }

    /// Called by ops: appends an interior node and returns its id.
    int record(std::vector<int> inputs, Shape out_shape, BackFn back) {
        require_live("record");
        Node n;
        n.inputs = std::move(inputs);
        n.shape = std::move(out_shape);
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    /// Called by backward closures to add a contribution to a node's grad.
    /// node < 0 marks an untracked operand and is ignored.
    void accumulate(int node, Tensor g) {
        if (node < 0) return;
        Tensor& slot = grads_[static_cast<size_t>(node)];
        if (!slot.defined())
            slot = std::move(g);
        else
            slot.add_(g);
    }

    /// Reverse sweep from a scalar loss recorded on this tape. Returns the
    /// gradient of every named leaf. Clears the tape; a second call throws.
    Gradients backward(const Tensor& loss) {
        require_live("backward");
        if (loss.tape() != this) throw state_error("loss tensor is not recorded on this tape");
        if (loss.numel() != 1) throw shape_error("backward requires a scalar loss, got " + shape_str(loss.shape()));

        grads_.assign(nodes_.size(), Tensor());
        grads_[static_cast<size_t>(loss.node())] = Tensor::ones(loss.shape());

        for (size_t i = nodes_.size(); i-- > 0;) {
            const Node& n = nodes_[i];
            if (!grads_[i].defined() || !n.back) continue;
            n.back(grads_[i], *this);
        }

        Gradients out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].leaf_name.empty() || !grads_[i].defined()) continue;
            auto [it, inserted] = out.try_emplace(nodes_[i].leaf_name, std::move(grads_[i]));
            if (!inserted) it->second.add_(grads_[i]);
        }

        consumed_ = true;
        nodes_.clear();
        grads_.clear();
        return out;
    }

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

  private:
    struct Node {
        std::vector<int> inputs;
        Shape shape;
        BackFn back;            // empty for leaves
        std::string leaf_name;  // empty for interior nodes
    };

    void require_live(const char* what) const {
        if (consumed_) throw state_error(std::string(what) + " on a cleared tape (one backward per forward)");
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;
};

namespace detail {

/// The common tape of a set of operands; throws if two differ.
inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->tape()) continue;
        if (tape && tape != t->tape()) throw state_error("operands recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

inline int node_or(const Tensor& t, Tape* tape) { return t.tape() == tape ? t.node() : -1; }

}  // namespace detail

}  // namespace u3m
