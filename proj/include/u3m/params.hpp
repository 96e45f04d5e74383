#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "u3m/error.hpp"
#include "u3m/rng.hpp"
#include "u3m/tape.hpp"
#include "u3m/tensor.hpp"

namespace u3m {

/// Named trainable (or frozen) tensor. The dotted name encodes the module
/// path, e.g. "enc0.s2.blk0.attn.wq".
struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

/// Ordered parameter collection. Iteration order is insertion order, which is
/// construction order and therefore deterministic.
class ParamStore {
  public:
    Tensor& add(const std::string& name, Tensor value, bool trainable = true) {
        if (index_.count(name)) throw state_error("duplicate parameter name: " + name);
        index_.emplace(name, items_.size());
        items_.push_back(Parameter{name, std::move(value), trainable});
        return items_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Parameter& get(const std::string& name) const { return items_[index_of(name)]; }
    Parameter& get(const std::string& name) { return items_[index_of(name)]; }

    const Tensor& tensor(const std::string& name) const { return get(name).value; }
    Tensor& tensor(const std::string& name) { return get(name).value; }

    size_t size() const { return items_.size(); }
    const std::vector<Parameter>& items() const { return items_; }
    std::vector<Parameter>& items() { return items_; }

    size_t total_elements() const {
        size_t n = 0;
        for (const Parameter& p : items_) n += p.value.numel();
        return n;
    }

  private:
    size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw state_error("unknown parameter: " + name);
        return it->second;
    }

    std::vector<Parameter> items_;
    std::unordered_map<std::string, size_t> index_;
};

/// Resolves parameters during a forward pass, watching each trainable one on
/// the tape exactly once. Frozen parameters come back as plain constants, so
/// their gradients never appear in the backward result.
class ParamView {
  public:
    ParamView(const ParamStore& store, Tape* tape) : store_(store), tape_(tape) {}

    Tensor operator[](const std::string& name) {
        const Parameter& p = store_.get(name);
        if (!tape_ || !p.trainable) return p.value.detached();
        auto it = watched_.find(name);
        if (it != watched_.end()) return it->second;
        Tensor w = tape_->watch(p.value, name);
        watched_.emplace(name, w);
        return w;
    }

    Tape* tape() const { return tape_; }

  private:
    const ParamStore& store_;
    Tape* tape_;
    std::unordered_map<std::string, Tensor> watched_;
};

// --- initialization -------------------------------------------------------

/// Truncated normal (+-2 sigma), std 0.02: linear and attention weights.
inline Tensor init_linear_weight(Shape shape, Rng& rng) {
    Tensor t(shape);
    double* d = t.mut();
    for (size_t i = 0; i < t.numel(); ++i) d[i] = rng.trunc_normal(0.02);
    return t;
}

/// Fan-in scaled normal for convolution kernels. Unit gain: most of the
/// 1x1 projection chains here have no interleaved rectifier, so a gain of 2
/// would compound variance layer over layer.
inline Tensor init_conv_weight(Shape shape, Rng& rng) {
    // shape [O, C/g, k, k]; fan_in = C/g * k * k
    size_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    double stddev = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor t(shape);
    double* d = t.mut();
    for (size_t i = 0; i < t.numel(); ++i) d[i] = rng.normal(0.0, stddev);
    return t;
}

}  // namespace u3m
