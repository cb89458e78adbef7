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
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "seqcond/tensorkit/ops.hpp"

namespace seqcond::dit {

enum class AttentionMode { full, block_causal };

/// How prediction tokens see each other under block_causal.
enum class PredictionAttention { causal, bidirectional };

/// additive: softmax(QK^T / sqrt(d_k) + A) with A in {0, -inf}.
/// multiplicative_literal: softmax((QK^T * M) / sqrt(d_k)) with M in {0, 1};
/// kept for study only, it does not zero the forbidden weights.
enum class MaskStyle { additive, multiplicative_literal };

/// Token-level allow/forbid pattern. An empty pattern means every pair is
/// allowed (full attention).
struct AttentionMask {
    std::size_t tokens = 0;
    std::vector<std::uint8_t> allowed;  // row-major tokens x tokens, 1 = allowed

    bool is_full() const { return allowed.empty(); }
    bool allows(std::size_t q, std::size_t k) const { return allowed.empty() || allowed[q * tokens + k] != 0; }

    /// The additive form: 0 for allowed pairs, -inf for forbidden ones.
    std::vector<float> additive() const {
        std::vector<float> out(tokens * tokens, 0.0f);
        if (!allowed.empty()) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (!allowed[i]) out[i] = -std::numeric_limits<float>::infinity();
            }
        }
        return out;
    }
};

inline AttentionMask full_mask(std::size_t tokens) { return AttentionMask{tokens, {}}; }

/// Builds the mask from each token's frame index. Frames below
/// `context_frames` are context: they attend only to context. Prediction
/// tokens attend to all context plus prediction frames at or before their own
/// (causal) or all prediction frames (bidirectional).
inline AttentionMask build_attention_mask(const std::vector<std::size_t>& token_frame, std::size_t context_frames,
                                          AttentionMode mode,
                                          PredictionAttention within = PredictionAttention::causal) {
    const std::size_t n = token_frame.size();
    if (mode == AttentionMode::full) {
        return full_mask(n);
    }
    AttentionMask m{n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t q = 0; q < n; ++q) {
        const std::size_t fq = token_frame[q];
        const bool q_ctx = fq < context_frames;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t fk = token_frame[k];
            const bool k_ctx = fk < context_frames;
            bool ok;
            if (q_ctx) {
                ok = k_ctx;
            } else if (k_ctx) {
                ok = true;
            } else {
                ok = within == PredictionAttention::bidirectional || fk <= fq;
            }
            m.allowed[q * n + k] = ok ? 1 : 0;
        }
    }
    return m;
}

/// Set to print a diagnostic whenever a query row has no allowed key.
inline bool& attention_debug() {
    static bool on = false;
    return on;
}

/// Multi-head scaled dot-product attention on [N, heads*d_k] projections.
///
/// Each head computes softmax(Q_h K_h^T / sqrt(d_k) + A) V_h. Forbidden pairs
/// get exactly zero weight; a row with no allowed key produces a zero output
/// row. When `weights_out` is non-null it receives the post-softmax weights,
/// one N*N block per head.
template <class T>
tk::Tensor<T> attention(const tk::Tensor<T>& q, const tk::Tensor<T>& k, const tk::Tensor<T>& v, std::size_t heads,
                        const AttentionMask& mask, MaskStyle style = MaskStyle::additive,
                        std::vector<T>* weights_out = nullptr) {
    using Mat = tk::RowMatrix<T>;
    using Stride = Eigen::OuterStride<>;
    using CView = Eigen::Map<const Mat, 0, Stride>;
    using View = Eigen::Map<Mat, 0, Stride>;
    if (q.rank() != 2 || k.shape() != q.shape() || v.shape() != q.shape()) {
        throw ShapeError("attention: Q, K, V must share shape [N, D], got " + tk::to_string(q.shape()) + ", " +
                         tk::to_string(k.shape()) + ", " + tk::to_string(v.shape()));
    }
    const auto n = static_cast<Eigen::Index>(q.dim(0));
    const auto d = static_cast<Eigen::Index>(q.dim(1));
    if (heads == 0 || d % static_cast<Eigen::Index>(heads) != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible into " + std::to_string(heads) +
                         " heads");
    }
    if (mask.tokens != static_cast<std::size_t>(n)) {
        throw ShapeError("attention: mask is " + std::to_string(mask.tokens) + " tokens, input has " +
                         std::to_string(n));
    }
    const Eigen::Index dk = d / static_cast<Eigen::Index>(heads);
    const T inv_sqrt = T(1) / std::sqrt(T(dk));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    tk::Tensor<T> out({q.dim(0), q.dim(1)});
    std::vector<T> probs(static_cast<std::size_t>(heads) * n * n);
    Eigen::Array<T, 1, Eigen::Dynamic> row_buf(n);

    for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index off = static_cast<Eigen::Index>(h) * dk;
        CView qh(q.ptr() + off, n, dk, Stride(d));
        CView kh(k.ptr() + off, n, dk, Stride(d));
        CView vh(v.ptr() + off, n, dk, Stride(d));
        Eigen::Map<Mat> p(probs.data() + h * n * n, n, n);
        p.noalias() = qh * kh.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            auto row = p.row(i).array();
            if (style == MaskStyle::multiplicative_literal) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (!mask.allows(i, j)) row(j) = T(0);
                }
                row *= inv_sqrt;
            } else {
                row *= inv_sqrt;
                if (!mask.is_full()) {
                    const std::uint8_t* allow = mask.allowed.data() + i * n;
                    for (Eigen::Index j = 0; j < n; ++j) {
                        if (!allow[j]) row(j) = neg_inf;
                    }
                }
            }
            const T mx = row.maxCoeff();
            if (mx == neg_inf) {
                if (attention_debug()) {
                    std::cerr << "attention: query row " << i << " has no allowed key; output row is zero\n";
                }
                row.setZero();
                continue;
            }
            row_buf = (row - mx).exp();
            // Vectorized exp clamps its argument, so exp(-inf) comes out as a
            // denormal rather than 0.
            if (style == MaskStyle::additive && !mask.is_full()) {
                const std::uint8_t* allow = mask.allowed.data() + i * n;
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (!allow[j]) row_buf(j) = T(0);
                }
            }
            const T total = row_buf.sum();
            row = row_buf / total;
        }
        View oh(out.ptr() + off, n, dk, Stride(d));
        oh.noalias() = p * vh;
    }
    tk::check_finite(out, "attention");
    if (weights_out) {
        *weights_out = probs;
    }

    if (auto* tape = tk::recording_tape<T>({&q, &k, &v})) {
        auto qn = q.node(), kn = k.node(), vn = v.node(), on = out.node();
        std::vector<std::uint8_t> allowed = style == MaskStyle::multiplicative_literal ? mask.allowed
                                                                                        : std::vector<std::uint8_t>{};
        tape->push(out, [qn, kn, vn, on, probs = std::move(probs), allowed = std::move(allowed), heads, n, d, dk,
                         inv_sqrt]() {
            if (on->grad.empty()) {
                return;
            }
            const bool gq = tk::detail::wants_grad(qn);
            const bool gk = tk::detail::wants_grad(kn);
            const bool gv = tk::detail::wants_grad(vn);
            T* dq = gq ? qn->ensure_grad().data() : nullptr;
            T* dkp = gk ? kn->ensure_grad().data() : nullptr;
            T* dv = gv ? vn->ensure_grad().data() : nullptr;
            Mat dp(n, n);
            Eigen::Array<T, Eigen::Dynamic, 1> rowdot(n);
            for (std::size_t h = 0; h < heads; ++h) {
                const Eigen::Index off = static_cast<Eigen::Index>(h) * dk;
                Eigen::Map<const Mat> p(probs.data() + h * n * n, n, n);
                CView go(on->grad.data() + off, n, dk, Stride(d));
                CView qh(qn->data.data() + off, n, dk, Stride(d));
                CView kh(kn->data.data() + off, n, dk, Stride(d));
                CView vh(vn->data.data() + off, n, dk, Stride(d));
                if (gv) {
                    View(dv + off, n, dk, Stride(d)).noalias() += p.transpose() * go;
                }
                if (!gq && !gk) {
                    continue;
                }
                dp.noalias() = go * vh.transpose();
                // Softmax backward: dS = P o (dP - rowsum(dP o P)).
                rowdot = (dp.array() * p.array()).rowwise().sum();
                dp.array() = p.array() * (dp.array().colwise() - rowdot);
                dp *= inv_sqrt;
                if (!allowed.empty()) {
                    for (Eigen::Index i = 0; i < n * n; ++i) {
                        if (!allowed[i]) dp.data()[i] = T(0);
                    }
                }
                if (gq) {
                    View(dq + off, n, dk, Stride(d)).noalias() += dp * kh;
                }
                if (gk) {
                    View(dkp + off, n, dk, Stride(d)).noalias() += dp.transpose() * qh;
                }
            }
        });
    }
    return out;
}

}  // namespace seqcond::dit
