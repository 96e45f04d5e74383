#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "u3m/error.hpp"
#include "u3m/rng.hpp"

namespace u3m {

class Tape;

using Shape = std::vector<size_t>;

inline size_t numel_of(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Dense row-major tensor of 64-bit floats with copy-on-write storage.
/// Copies are cheap handle copies; mutation detaches from shared buffers,
/// so Tensor behaves as a value. A tensor may carry a (tape, node) link
/// when it participates in reverse-mode differentiation.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(numel_of(shape_), 0.0)) {
        validate_shape();
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
        validate_shape();
        if (data_->size() != numel_of(shape_))
            throw shape_error("value count " + std::to_string(data_->size()) +
                              " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    /// Rank-0 tensor holding a single value.
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = rng.uniform(lo, hi);
        return t;
    }

    static Tensor normal(Shape shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = rng.normal(mean, stddev);
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t extent(size_t axis) const { return shape_.at(axis); }
    size_t numel() const { return data_ ? data_->size() : 0; }

    const double* data() const { return data_->data(); }
    const std::vector<double>& vec() const { return *data_; }

    /// Mutable access; detaches from shared storage first.
    double* mut() {
        ensure_unique();
        return data_->data();
    }

    double value() const {
        if (numel() != 1) throw shape_error("value() on non-scalar tensor " + shape_str(shape_));
        return (*data_)[0];
    }

    size_t offset_of(std::initializer_list<size_t> idx) const {
        if (idx.size() != shape_.size()) throw shape_error("index rank mismatch");
        size_t off = 0;
        size_t axis = 0;
        for (size_t i : idx) {
            if (i >= shape_[axis]) throw shape_error("index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    double at(std::initializer_list<size_t> idx) const { return (*data_)[offset_of(idx)]; }
    void set(std::initializer_list<size_t> idx, double v) {
        size_t off = offset_of(idx);
        ensure_unique();
        (*data_)[off] = v;
    }

    /// Same storage, different shape (no tape linkage). Internal reshapes of
    /// untracked tensors; tracked code paths go through ops::reshape.
    Tensor with_shape(Shape shape) const {
        if (numel_of(shape) != numel())
            throw shape_error("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    /// Value copy with no tape linkage (shares storage until mutated).
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void add_(const Tensor& other) {
        if (shape_ != other.shape_)
            throw shape_error("add_ shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
        ensure_unique();
        double* d = data_->data();
        const double* o = other.data();
        size_t n = numel();
        for (size_t i = 0; i < n; ++i) d[i] += o[i];
    }

    void fill_(double v) {
        ensure_unique();
        for (double& x : *data_) x = v;
    }

    // --- autodiff linkage -------------------------------------------------
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    bool requires_grad() const { return tape_ != nullptr; }
    void bind(Tape* tape, int node) {
        tape_ = tape;
        node_ = node;
    }

  private:
    void validate_shape() const {
        for (size_t d : shape_)
            if (d == 0) throw shape_error("zero extent in shape " + shape_str(shape_));
    }

    void ensure_unique() {
        if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
    }

    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

}  // namespace u3m
