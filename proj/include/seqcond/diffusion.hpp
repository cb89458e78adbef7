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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/tensorkit/ops.hpp"
#include "seqcond/tensorkit/random.hpp"
#include "seqcond/video.hpp"

namespace seqcond::diffusion {

/// Cumulative signal coefficients abar_t = prod_{s<=t} (1 - beta_s) of a
/// linear-beta schedule.
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alpha_bar;

    std::size_t size() const { return alpha_bar.size(); }
    double at(std::size_t t) const {
        if (t >= alpha_bar.size()) {
            throw ConfigError("timestep " + std::to_string(t) + " outside schedule of length " +
                              std::to_string(alpha_bar.size()));
        }
        return alpha_bar[t];
    }
};

inline NoiseSchedule make_schedule(std::size_t steps = 1000, double beta_min = 1e-4, double beta_max = 0.02) {
    if (steps < 1) throw ConfigError("make_schedule: need at least one step");
    if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
        throw ConfigError("make_schedule: require 0 < beta_min < beta_max < 1");
    }
    NoiseSchedule s;
    s.betas.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
        s.betas[t] = beta_min + (beta_max - beta_min) * frac;
        prod *= 1.0 - s.betas[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

/// corrected: context positions keep z_0 exactly, targets are noised.
/// literal:   z_t = sqrt(abar) z_0 + sqrt(1 - abar) eps (1 - M), i.e. the
///            context is scaled by sqrt(abar) but receives no noise.
enum class NoisingMode { corrected, literal };

/// Per-position weights of the training loss.
enum class LossRegion { target_only, all_frames };

inline std::string to_string(LossRegion r) { return r == LossRegion::target_only ? "half" : "all"; }

namespace detail {

inline void check_mask(const Grid4& z, const Grid4& mask) {
    if (mask.channels != 1 || mask.frames != z.frames || mask.height != z.height || mask.width != z.width) {
        throw ShapeError("mask " + mask.shape_string() + " does not broadcast over latent " + z.shape_string());
    }
}

}  // namespace detail

/// Noises the prediction region of z_0. `mask` is 1 x l x h x w with 1 on
/// context positions and broadcasts over channels.
inline LatentSeq add_noise_selective(const LatentSeq& z0, const LatentSeq& eps, std::size_t t, const Grid4& mask,
                                     const NoiseSchedule& schedule, NoisingMode mode = NoisingMode::corrected) {
    if (!eps.same_shape(z0)) throw ShapeError("add_noise_selective: noise shape differs from latent");
    detail::check_mask(z0, mask);
    const double ab = schedule.at(t);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    LatentSeq zt = z0;
    const std::size_t per_channel = z0.frames * z0.plane();
    for (std::size_t c = 0; c < z0.channels; ++c) {
        for (std::size_t i = 0; i < per_channel; ++i) {
            const std::size_t k = c * per_channel + i;
            const double m = mask.data[i];
            if (mode == NoisingMode::corrected) {
                if (m == 0.0) zt.data[k] = static_cast<float>(sa * z0.data[k] + sn * eps.data[k]);
            } else {
                zt.data[k] = static_cast<float>(sa * z0.data[k] + sn * eps.data[k] * (1.0 - m));
            }
        }
    }
    return zt;
}

/// Per-token loss weights for a [l*h*w]-token grid.
inline std::vector<double> loss_weights(const Grid4& mask, LossRegion region) {
    std::vector<double> w(mask.frames * mask.plane(), 1.0);
    if (region == LossRegion::target_only) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 - mask.data[i];
    }
    return w;
}

/// Mean squared error over weighted positions, normalized by the number of
/// weighted elements. Differentiable with respect to `pred` ([N, c] tokens).
template <class T>
tk::Tensor<T> masked_loss(const tk::Tensor<T>& pred, const tk::Tensor<T>& target, const Grid4& mask,
                          LossRegion region) {
    if (pred.shape() != target.shape() || pred.rank() != 2) {
        throw ShapeError("masked_loss: prediction " + tk::to_string(pred.shape()) + " vs target " +
                         tk::to_string(target.shape()));
    }
    if (pred.dim(0) != mask.frames * mask.plane() || mask.channels != 1) {
        throw ShapeError("masked_loss: mask " + mask.shape_string() + " does not cover " +
                         std::to_string(pred.dim(0)) + " tokens");
    }
    const auto w = loss_weights(mask, region);
    const std::size_t c = pred.dim(1);
    double weighted = 0.0;
    tk::Tensor<T> wt(pred.shape());
    for (std::size_t n = 0; n < w.size(); ++n) {
        if (w[n] != 0.0) weighted += static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) wt[n * c + j] = static_cast<T>(w[n]);
    }
    if (weighted == 0.0) {
        throw ConfigError("masked_loss: no supervised positions (mask is all context)");
    }
    const auto diff = tk::sub(pred, target);
    return tk::scale(tk::sum(tk::mul(tk::mul(diff, diff), wt)), static_cast<T>(1.0 / weighted));
}

/// Plain evaluation of masked_loss on latent grids.
inline double masked_loss_value(const LatentSeq& pred, const LatentSeq& target, const Grid4& mask, LossRegion region) {
    if (!pred.same_shape(target)) throw ShapeError("masked_loss: prediction and target shapes differ");
    detail::check_mask(pred, mask);
    const auto w = loss_weights(mask, region);
    const std::size_t per_channel = w.size();
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < pred.channels; ++c) {
        for (std::size_t i = 0; i < per_channel; ++i) {
            const double d = static_cast<double>(pred.data[c * per_channel + i]) - target.data[c * per_channel + i];
            num += w[i] * d * d;
            den += w[i] != 0.0 ? 1.0 : 0.0;
        }
    }
    if (den == 0.0) throw ConfigError("masked_loss: no supervised positions (mask is all context)");
    return num / den;
}

/// Estimate of z_0 from z_t and predicted noise. The consistent form inverts
/// the forward process, (z_t - sqrt(1-abar) eps) / sqrt(abar); the literal
/// form omits the division.
inline LatentSeq x0_estimate(const LatentSeq& z_t, const LatentSeq& eps_pred, std::size_t t,
                             const NoiseSchedule& schedule, bool literal = false) {
    if (!eps_pred.same_shape(z_t)) throw ShapeError("x0_estimate: noise shape differs from latent");
    const double ab = schedule.at(t);
    if (ab < 1e-12) throw NumericError("x0_estimate: abar_t numerically zero at t=" + std::to_string(t));
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    LatentSeq out = z_t;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(z_t.data[i]) - sn * eps_pred.data[i];
        out.data[i] = static_cast<float>(literal ? v : v / sa);
    }
    return out;
}

/// trailing: t_i = (i+1) N / S - 1, the last call at N/S - 1.
/// linspace: N-1 down to 0 inclusive, rounded.
enum class TimestepSpacing { trailing, linspace };

struct SamplerConfig {
    std::size_t steps = 50;
    TimestepSpacing spacing = TimestepSpacing::trailing;
    /// Clamp each z_0 estimate into [clip_min, clip_max] (and re-derive the
    /// noise from it) before stepping. Off for exact-inversion checks.
    bool clip_x0 = true;
    float clip_min = 0.0f;
    float clip_max = 1.0f;
    /// Use the literal z_0 estimate z_t - sqrt(1-abar) eps (no 1/sqrt(abar)).
    bool literal_x0 = false;
};

/// Evenly spaced, strictly decreasing timesteps starting at N-1.
inline std::vector<std::size_t> sampling_timesteps(std::size_t schedule_len, std::size_t steps,
                                                   TimestepSpacing spacing = TimestepSpacing::trailing) {
    if (steps < 1 || steps > schedule_len) {
        throw ConfigError("sampler: steps must be in [1, " + std::to_string(schedule_len) + "]");
    }
    std::vector<std::size_t> ts(steps);
    if (spacing == TimestepSpacing::trailing || steps == 1) {
        for (std::size_t i = 0; i < steps; ++i) ts[steps - 1 - i] = (i + 1) * schedule_len / steps - 1;
        return ts;
    }
    // Rounded (N-1) k / (S-1); consecutive values differ by at least 1 since S <= N.
    const std::size_t n = schedule_len - 1, d = steps - 1;
    for (std::size_t k = 0; k < steps; ++k) ts[steps - 1 - k] = (2 * n * k + d) / (2 * d);
    return ts;
}

/// Noise predictor used by the sampler: (z_t, t) -> eps.
using NoisePredictor = std::function<LatentSeq(const LatentSeq&, std::size_t)>;

/// Deterministic DDIM (eta = 0).
///
/// `context` carries the clean latent on context positions (mask 1); its
/// prediction positions are ignored. Prediction positions start from seeded
/// standard-normal noise, and context positions are re-clamped to the clean
/// latent before every model call. Returns the final z_0 estimate.
inline LatentSeq sample(const NoisePredictor& predict, const LatentSeq& context, const Grid4& mask,
                        const NoiseSchedule& schedule, const SamplerConfig& cfg, std::uint64_t seed) {
    detail::check_mask(context, mask);
    const auto ts = sampling_timesteps(schedule.size(), cfg.steps, cfg.spacing);
    const std::size_t per_channel = context.frames * context.plane();
    auto clamp_context = [&](LatentSeq& z) {
        for (std::size_t c = 0; c < z.channels; ++c)
            for (std::size_t i = 0; i < per_channel; ++i)
                if (mask.data[i] != 0.0f) z.data[c * per_channel + i] = context.data[c * per_channel + i];
    };
    Rng rng(seed);
    LatentSeq z = context;
    for (auto& v : z.data) v = static_cast<float>(rng.normal());
    clamp_context(z);

    LatentSeq x0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::size_t t = ts[i];
        LatentSeq eps = predict(z, t);
        if (!eps.same_shape(z)) throw ShapeError("sampler: predictor returned " + eps.shape_string());
        const double ab = schedule.at(t);
        const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        x0 = z;
        for (std::size_t k = 0; k < z.size(); ++k) {
            double x = static_cast<double>(z.data[k]) - sn * eps.data[k];
            if (!cfg.literal_x0) x /= sa;
            if (cfg.clip_x0 && sn > 0.0 && !cfg.literal_x0) {
                const double xc = std::clamp(x, static_cast<double>(cfg.clip_min), static_cast<double>(cfg.clip_max));
                if (xc != x) {
                    eps.data[k] = static_cast<float>((static_cast<double>(z.data[k]) - sa * xc) / sn);
                    x = xc;
                }
            }
            x0.data[k] = static_cast<float>(x);
        }
        clamp_context(x0);
        if (i + 1 == ts.size()) break;
        const double abp = schedule.at(ts[i + 1]);
        const double sap = std::sqrt(abp), snp = std::sqrt(1.0 - abp);
        for (std::size_t k = 0; k < z.size(); ++k) {
            z.data[k] = static_cast<float>(sap * x0.data[k] + snp * eps.data[k]);
        }
        clamp_context(z);
    }
    for (const auto v : x0.data) {
        if (!std::isfinite(v)) throw NumericError("sampler produced a non-finite latent");
    }
    return x0;
}

}  // namespace seqcond::diffusion
