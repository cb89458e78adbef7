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

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "seqcond/tensorkit/tensor.hpp"

namespace seqcond::tk {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Moment accumulators, one pair per parameter in registration order.
template <class T>
struct AdamWState {
    AdamWConfig config;
    std::uint64_t step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

template <class T>
AdamWState<T> make_adamw_state(const std::vector<Tensor<T>>& params, AdamWConfig config = {}) {
    AdamWState<T> state;
    state.config = config;
    for (const auto& p : params) {
        state.m.emplace_back(p.numel(), T(0));
        state.v.emplace_back(p.numel(), T(0));
    }
    return state;
}

/// One bias-corrected Adam update followed by decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Parameters without a gradient are treated as having a zero gradient.
template <class T>
void adamw_step(std::vector<Tensor<T>>& params, AdamWState<T>& state) {
    if (state.m.size() != params.size()) {
        throw ShapeError("adamw_step: state has " + std::to_string(state.m.size()) + " slots for " +
                         std::to_string(params.size()) + " parameters");
    }
    assert(state.step < std::numeric_limits<std::uint64_t>::max());
    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != p.numel() || v.size() != p.numel()) {
            throw ShapeError("adamw_step: accumulator shape mismatch for parameter " + std::to_string(k));
        }
        auto g = p.grad();
        const bool has_g = p.has_grad();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = has_g ? static_cast<double>(g[i]) : 0.0;
            const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double pi = static_cast<double>(p[i]);
            p[i] = static_cast<T>(pi - c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * pi));
        }
    }
}

}  // namespace seqcond::tk
