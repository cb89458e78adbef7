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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "seqcond/tensorkit/tensor.hpp"

// Differentiable ops. Every op computes its output eagerly and, when a tape is
// recording and an input is tracked, pushes a closure that accumulates into
// the inputs' gradients. All reductions run in a fixed sequential order.

namespace seqcond::tk {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

template <class T>
bool wants_grad(const std::shared_ptr<Node<T>>& n) {
    return n->requires_grad || n->tape != nullptr;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) {
        return false;
    }
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class Binary { add, sub, mul };

template <class T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
    // Broadcasting is along leading dimensions only: the smaller operand's
    // shape must be a suffix of the larger one's and repeats every numel(small).
    const bool a_big = a.rank() >= b.rank();
    const Tensor<T>& big = a_big ? a : b;
    const Tensor<T>& small = a_big ? b : a;
    if (!is_suffix(small.shape(), big.shape())) {
        throw ShapeError(std::string(name) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " are not broadcastable");
    }
    Tensor<T> out(big.shape());
    const std::size_t n = big.numel();
    const std::size_t m = small.numel();
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const T x = pa[na == n ? i : i % na];
        const T y = pb[nb == n ? i : i % nb];
        switch (kind) {
            case Binary::add: po[i] = x + y; break;
            case Binary::sub: po[i] = x - y; break;
            case Binary::mul: po[i] = x * y; break;
        }
    }
    check_finite(out, name);
    (void)m;
    if (auto* tape = recording_tape<T>({&a, &b})) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->push(out, [an, bn, on, kind, n]() {
            if (on->grad.empty()) {
                return;
            }
            const T* g = on->grad.data();
            const std::size_t na = an->data.size();
            const std::size_t nb = bn->data.size();
            if (wants_grad(an)) {
                T* ga = an->ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t ia = na == n ? i : i % na;
                    const std::size_t ib = nb == n ? i : i % nb;
                    switch (kind) {
                        case Binary::add:
                        case Binary::sub: ga[ia] += g[i]; break;
                        case Binary::mul: ga[ia] += g[i] * bn->data[ib]; break;
                    }
                }
            }
            if (wants_grad(bn)) {
                T* gb = bn->ensure_grad().data();
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t ia = na == n ? i : i % na;
                    const std::size_t ib = nb == n ? i : i % nb;
                    switch (kind) {
                        case Binary::add: gb[ib] += g[i]; break;
                        case Binary::sub: gb[ib] -= g[i]; break;
                        case Binary::mul: gb[ib] += g[i] * an->data[ia]; break;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::Binary::add, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::Binary::sub, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::Binary::mul, "mul");
}

/// out = a * s + c, with scalar constants s and c.
template <class T>
Tensor<T> affine_scalar(const Tensor<T>& a, T s, T c = T(0)) {
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] * s + c;
    }
    check_finite(out, "affine_scalar");
    if (auto* tape = recording_tape<T>({&a})) {
        auto an = a.node(), on = out.node();
        tape->push(out, [an, on, s, n]() {
            if (on->grad.empty()) {
                return;
            }
            T* ga = an->ensure_grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += on->grad[i] * s;
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    return affine_scalar(a, s, T(0));
}

/// 2-D contraction [m,k] x [k,n] -> [m,n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner extents disagree for " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    Tensor<T> out({a.dim(0), b.dim(1)});
    MatMap<T>(out.ptr(), m, n).noalias() = ConstMatMap<T>(a.ptr(), m, k) * ConstMatMap<T>(b.ptr(), k, n);
    check_finite(out, "matmul");
    if (auto* tape = recording_tape<T>({&a, &b})) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->push(out, [an, bn, on, m, k, n]() {
            if (on->grad.empty()) {
                return;
            }
            ConstMatMap<T> g(on->grad.data(), m, n);
            if (detail::wants_grad(an)) {
                MatMap<T>(an->ensure_grad().data(), m, k).noalias() += g * ConstMatMap<T>(bn->data.data(), k, n).transpose();
            }
            if (detail::wants_grad(bn)) {
                MatMap<T>(bn->ensure_grad().data(), k, n).noalias() += ConstMatMap<T>(an->data.data(), m, k).transpose() * g;
            }
        });
    }
    return out;
}

/// x[N, in] * w[in, out] + bias[out]; bias may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {}) {
    auto y = matmul(x, w);
    return bias.defined() ? add(y, bias) : y;
}

/// Softmax along `axis`, max-subtracted. Entries may be -inf; a slice that is
/// entirely -inf yields zeros. NaN input is rejected.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t len = x.dim(axis);
    Tensor<T> out(x.shape());
    for (auto v : x.data()) {
        if (std::isnan(v)) {
            throw NumericError("softmax: NaN input");
        }
    }
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
            if (mx == -std::numeric_limits<T>::infinity()) {
                for (std::size_t j = 0; j < len; ++j) out[base + j * inner] = T(0);
                continue;
            }
            T total = T(0);
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(x[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
        }
    }
    check_finite(out, "softmax");
    if (auto* tape = recording_tape<T>({&x})) {
        auto xn = x.node(), on = out.node();
        tape->push(out, [xn, on, outer, inner, len]() {
            if (on->grad.empty()) {
                return;
            }
            T* gx = xn->ensure_grad().data();
            const T* g = on->grad.data();
            const T* y = on->data.data();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    T dot = T(0);
                    for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                    for (std::size_t j = 0; j < len; ++j) {
                        const std::size_t i = base + j * inner;
                        gx[i] += y[i] * (g[i] - dot);
                    }
                }
            }
        });
    }
    return out;
}

/// Normalizes over the last axis, then applies optional gain and bias (both [d]).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    if (!(eps > T(0))) {
        throw ConfigError("layer_norm: eps must be positive");
    }
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    if (gain.defined() && gain.numel() != d) throw ShapeError("layer_norm: gain extent mismatch");
    if (bias.defined() && bias.numel() != d) throw ShapeError("layer_norm: bias extent mismatch");
    Tensor<T> out(x.shape());
    std::vector<T> xhat(x.numel());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = x.ptr() + r * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= T(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - mean) * is;
            xhat[r * d + j] = h;
            T v = h;
            if (gain.defined()) v *= gain[j];
            if (bias.defined()) v += bias[j];
            out[r * d + j] = v;
        }
    }
    check_finite(out, "layer_norm");
    if (auto* tape = recording_tape<T>({&x, &gain, &bias})) {
        auto xn = x.node(), on = out.node();
        auto gn = gain.defined() ? gain.node() : nullptr;
        auto bn = bias.defined() ? bias.node() : nullptr;
        tape->push(out, [xn, gn, bn, on, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
            if (on->grad.empty()) {
                return;
            }
            const T* g = on->grad.data();
            if (gn && detail::wants_grad(gn)) {
                T* gg = gn->ensure_grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
            }
            if (bn && detail::wants_grad(bn)) {
                T* gb = bn->ensure_grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
            if (detail::wants_grad(xn)) {
                T* gx = xn->ensure_grad().data();
                std::vector<T> gh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    T sum_gh = T(0), sum_gh_h = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        gh[j] = g[r * d + j] * (gn ? gn->data[j] : T(1));
                        sum_gh += gh[j];
                        sum_gh_h += gh[j] * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        gx[r * d + j] +=
                            inv_std[r] * (gh[j] - sum_gh / T(d) - xhat[r * d + j] * sum_gh_h / T(d));
                    }
                }
            }
        });
    }
    return out;
}

/// GELU, tanh approximation:
///   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T k0 = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T k1 = T(0.044715);
    Tensor<T> out(x.shape());
    const std::size_t n = x.numel();
    std::vector<T> th(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T v = x[i];
        th[i] = std::tanh(k0 * (v + k1 * v * v * v));
        out[i] = T(0.5) * v * (T(1) + th[i]);
    }
    check_finite(out, "gelu");
    if (auto* tape = recording_tape<T>({&x})) {
        auto xn = x.node(), on = out.node();
        tape->push(out, [xn, on, th = std::move(th), n]() {
            if (on->grad.empty()) {
                return;
            }
            T* gx = xn->ensure_grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                const T v = xn->data[i];
                const T dinner = k0 * (T(1) + T(3) * k1 * v * v);
                const T d = T(0.5) * (T(1) + th[i]) + T(0.5) * v * (T(1) - th[i] * th[i]) * dinner;
                gx[i] += on->grad[i] * d;
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (auto v : x.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    check_finite(out, "sum");
    if (auto* tape = recording_tape<T>({&x})) {
        auto xn = x.node(), on = out.node();
        tape->push(out, [xn, on]() {
            if (on->grad.empty()) {
                return;
            }
            const T g = on->grad[0];
            for (auto& v : xn->ensure_grad()) v += g;
        });
    }
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / T(x.numel()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel_of(shape) != x.numel()) {
        throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    if (auto* tape = recording_tape<T>({&x})) {
        auto xn = x.node(), on = out.node();
        tape->push(out, [xn, on]() {
            if (on->grad.empty()) {
                return;
            }
            auto gx = xn->ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
        });
    }
    return out;
}

/// Columns [begin, begin+len) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len) {
    const std::size_t d = x.shape().back();
    if (len == 0 || begin + len > d) {
        throw ShapeError("slice_last: range out of bounds");
    }
    const std::size_t rows = x.numel() / d;
    Shape shape = x.shape();
    shape.back() = len;
    Tensor<T> out(shape);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.ptr() + r * d + begin, len, out.ptr() + r * len);
    if (auto* tape = recording_tape<T>({&x})) {
        auto xn = x.node(), on = out.node();
        tape->push(out, [xn, on, rows, d, begin, len]() {
            if (on->grad.empty()) {
                return;
            }
            T* gx = xn->ensure_grad().data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < len; ++j) gx[r * d + begin + j] += on->grad[r * len + j];
        });
    }
    return out;
}

/// Concatenates along the last axis; leading extents must agree.
template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
        throw ShapeError("concat_last: leading extents differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    const std::size_t da = a.shape().back(), db = b.shape().back();
    const std::size_t rows = a.numel() / da;
    Shape shape = a.shape();
    shape.back() = da + db;
    Tensor<T> out(shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.ptr() + r * da, da, out.ptr() + r * (da + db));
        std::copy_n(b.ptr() + r * db, db, out.ptr() + r * (da + db) + da);
    }
    if (auto* tape = recording_tape<T>({&a, &b})) {
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->push(out, [an, bn, on, rows, da, db]() {
            if (on->grad.empty()) {
                return;
            }
            const T* g = on->grad.data();
            if (detail::wants_grad(an)) {
                T* ga = an->ensure_grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += g[r * (da + db) + j];
            }
            if (detail::wants_grad(bn)) {
                T* gb = bn->ensure_grad().data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < db; ++j) gb[r * db + j] += g[r * (da + db) + da + j];
            }
        });
    }
    return out;
}

}  // namespace seqcond::tk
