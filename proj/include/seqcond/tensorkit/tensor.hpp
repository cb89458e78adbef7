// Copyright 2026 The seqcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seqcond/errors.hpp"

namespace seqcond::tk {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

template <class T>
class GradTape;

namespace detail {

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    const GradTape<T>* tape = nullptr;  // set when produced by a recorded op

    std::span<T> ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), T(0));
        }
        return grad;
    }
};

}  // namespace detail

/// Dense row-major array with an optional gradient slot.
///
/// Copies are shallow: two Tensor handles may refer to the same node, which is
/// how the tape keeps saved inputs alive. Use clone() for an independent copy.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
        for (auto e : shape) {
            if (e == 0) {
                throw ShapeError("tensor extents must be positive, got " + to_string(shape));
            }
        }
        node_->data.assign(numel_of(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> values) : Tensor(std::move(shape)) {
        if (values.size() != node_->data.size()) {
            throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                             to_string(node_->shape));
        }
        node_->data = std::move(values);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    T* ptr() { return node_->data.data(); }
    const T* ptr() const { return node_->data.data(); }
    T item() const {
        if (numel() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape()));
        }
        return node_->data[0];
    }

    T& operator[](std::size_t i) { return node_->data[i]; }
    const T& operator[](std::size_t i) const { return node_->data[i]; }

    /// Gradient view; empty until backward has touched this tensor.
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        node_->requires_grad = on;
        return *this;
    }

    /// True when this tensor participates in gradient computation, either as a
    /// leaf parameter or as the output of an op recorded on a tape.
    bool tracked() const { return node_->requires_grad || node_->tape != nullptr; }
    const GradTape<T>* tape() const { return node_->tape; }

    Tensor clone() const {
        Tensor out(shape());
        out.node_->data = node_->data;
        out.node_->requires_grad = node_->requires_grad;
        return out;
    }

    /// Same values, cut off from any tape and not requiring grad.
    Tensor detach() const {
        Tensor out(shape());
        out.node_->data = node_->data;
        return out;
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    std::shared_ptr<detail::Node<T>> node() const { return node_; }

private:
    template <class U>
    friend class GradTape;

    std::shared_ptr<detail::Node<T>> node_;
};

/// Ordered record of executed ops for reverse-mode differentiation.
///
/// While a Recording guard is alive, ops whose inputs are tracked append a
/// backward closure here. backward() replays the closures in exact reverse
/// execution order, so gradient accumulation order is fixed for a given graph.
template <class T>
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    class Recording {
    public:
        explicit Recording(GradTape& tape) : prev_(active_) { active_ = &tape; }
        ~Recording() { active_ = prev_; }
        Recording(const Recording&) = delete;
        Recording& operator=(const Recording&) = delete;

    private:
        GradTape* prev_;
    };

    static GradTape* active() { return active_; }

    std::size_t size() const { return entries_.size(); }

    /// Registers `out` as produced by an op and stores its backward closure.
    void push(Tensor<T>& out, std::function<void()> backward) {
        out.node_->tape = this;
        entries_.push_back(std::move(backward));
    }

    void backward(const Tensor<T>& loss) {
        if (!loss.defined() || loss.numel() != 1) {
            throw ShapeError("backward() needs a scalar loss");
        }
        if (loss.tape() != this) {
            throw UsageError("backward() called on a tensor that is not on this tape");
        }
        auto node = loss.node();
        node->ensure_grad()[0] += T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            (*it)();
        }
        entries_.clear();
    }

private:
    inline static thread_local GradTape* active_ = nullptr;
    std::vector<std::function<void()>> entries_;
};

/// Returns the tape an op on `inputs` should record onto, or nullptr.
template <class T>
GradTape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    auto* tape = GradTape<T>::active();
    if (tape == nullptr) {
        return nullptr;
    }
    for (const auto* t : inputs) {
        if (t != nullptr && t->defined() && t->tracked()) {
            return tape;
        }
    }
    return nullptr;
}

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
    for (auto v : t.data()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
}

}  // namespace seqcond::tk
