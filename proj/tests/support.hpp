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

// Helpers shared by the unit tests and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "seqcond/tensorkit/ops.hpp"
#include "seqcond/tensorkit/random.hpp"
#include "seqcond/tensorkit/tensor.hpp"
#include "seqcond/video.hpp"

namespace seqcond::testing {

template <class T>
tk::Tensor<T> random_tensor(tk::Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
    tk::Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
    t.set_requires_grad(grad);
    return t;
}

template <class G>
G random_grid(std::size_t c, std::size_t l, std::size_t h, std::size_t w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    G g;
    static_cast<Grid4&>(g) = Grid4(c, l, h, w);
    for (auto& v : g.data) v = static_cast<float>(rng.uniform(lo, hi));
    return g;
}

struct GradCheck {
    double max_rel = 0.0;
    double max_abs = 0.0;
    std::size_t checked = 0;
};

/// Relative error with a floor of 1e-4 on the denominator. Central
/// differences at h = 1e-5 carry about 1e-10 of absolute noise, so gradients
/// below the floor are held to an absolute error of 1e-8 instead.
inline constexpr double kRelFloor = 1e-4;
inline double rel_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelFloor});
}

/// Compares tape gradients of `loss_fn` with respect to `inputs` against
/// central differences with step h. `loss_fn` must rebuild the graph from the
/// current input values each call. `max_per_input` (0 = all) subsamples
/// coordinates with a fixed stride.
inline GradCheck check_gradients(const std::function<tk::Tensor<double>()>& loss_fn,
                                 std::vector<tk::Tensor<double>> inputs, double h = 1e-5,
                                 std::size_t max_per_input = 0) {
    for (auto& x : inputs) x.zero_grad();
    tk::GradTape<double> tape;
    tk::Tensor<double> loss;
    {
        tk::GradTape<double>::Recording rec(tape);
        loss = loss_fn();
    }
    tape.backward(loss);
    GradCheck out;
    for (auto& x : inputs) {
        std::vector<double> analytic(x.numel(), 0.0);
        if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
        const std::size_t n = x.numel();
        const std::size_t stride = max_per_input == 0 || n <= max_per_input ? 1 : (n + max_per_input - 1) / max_per_input;
        for (std::size_t i = 0; i < n; i += stride) {
            const double keep = x[i];
            x[i] = keep + h;
            const double up = loss_fn().item();
            x[i] = keep - h;
            const double down = loss_fn().item();
            x[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            out.max_rel = std::max(out.max_rel, rel_error(analytic[i], numeric));
            out.max_abs = std::max(out.max_abs, std::abs(analytic[i] - numeric));
            ++out.checked;
        }
        x.zero_grad();
    }
    return out;
}

/// Weighted sum with fixed pseudo-random coefficients, so that every output
/// element reaches the loss with a distinct weight.
inline tk::Tensor<double> probe_loss(const tk::Tensor<double>& y, std::uint64_t seed) {
    Rng rng(derive_seed({seed, 0x9a0bULL}));
    tk::Tensor<double> w(y.shape());
    for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
    return tk::sum(tk::mul(y, w));
}

}  // namespace seqcond::testing
