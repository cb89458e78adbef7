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
#include <cstdint>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "seqcond/diffusion.hpp"
#include "seqcond/dit/model.hpp"
#include "seqcond/latent_codec.hpp"
#include "seqcond/sequence.hpp"
#include "seqcond/tensorkit/adamw.hpp"

// Glue between clips, conditioning modes, the denoiser and the diffusion
// process: problem assembly, one optimizer step, and generation.

namespace seqcond {

/// One training or evaluation clip in pixel space.
struct Clip {
    std::size_t id = 0;
    VideoTensor reference;  // C x 1 x H x W
    VideoTensor skeletons;  // C x T x H x W
    VideoTensor targets;    // C x T x H x W, empty when unknown
};

/// Latent-space problem for one clip under one conditioning mode.
///
/// `z0` is what the sampler denoises: the whole packed sequence for
/// unified_sequence, the T target frames for the baselines. `mask` marks its
/// context positions (all zero for the baselines).
struct Problem {
    dit::ConditioningMode mode = dit::ConditioningMode::unified_sequence;
    std::size_t clip_length = 0;
    std::size_t target_offset = 0;  // first target latent frame in z0
    LatentSeq z0;
    Grid4 mask;
    LatentSeq condition;  // channel_concat: overlay; token_residual: skeletons
    LatentSeq reference;  // token_residual only
};

namespace detail {

inline VideoTensor repeat_frame(const VideoTensor& frame, std::size_t n) {
    VideoTensor out(frame.channels, n, frame.height, frame.width);
    for (std::size_t c = 0; c < frame.channels; ++c)
        for (std::size_t f = 0; f < n; ++f)
            for (std::size_t i = 0; i < frame.plane(); ++i)
                out.data[out.index(c, f, 0, 0) + i] = frame.data[frame.index(c, 0, 0, 0) + i];
    return out;
}

}  // namespace detail

/// Builds the latent problem. In infer mode the targets are ignored and the
/// target slots are zero.
inline Problem make_problem(const Clip& clip, dit::ConditioningMode mode, const codec::CodecConfig& cfg,
                            seq::Mode phase) {
    const std::size_t T = clip.skeletons.frames;
    const bool have_targets = phase == seq::Mode::train;
    Problem p;
    p.mode = mode;
    p.clip_length = T;
    if (mode == dit::ConditioningMode::unified_sequence) {
        const auto us = seq::build_sequence(clip.reference, clip.skeletons,
                                            have_targets ? std::optional<VideoTensor>(clip.targets) : std::nullopt,
                                            phase);
        p.z0 = codec::encode(us.frames, cfg);
        p.mask = seq::build_mask(T, cfg, p.z0.height, p.z0.width).latent_mask;
        p.target_offset = p.z0.frames - T / cfg.temporal_stride;
        return p;
    }
    if (clip.reference.frames != 1) throw ShapeError("make_problem: reference must be a single frame");
    VideoTensor tgt(clip.skeletons.channels, T, clip.skeletons.height, clip.skeletons.width);
    if (have_targets) {
        if (!clip.targets.same_shape(clip.skeletons)) {
            throw ShapeError("make_problem: targets " + clip.targets.shape_string() + " vs skeletons " +
                             clip.skeletons.shape_string());
        }
        tgt = clip.targets;
    }
    p.z0 = codec::encode(tgt, cfg);
    p.mask = Grid4(1, p.z0.frames, p.z0.height, p.z0.width, 0.0f);
    p.target_offset = 0;
    const LatentSeq skel = codec::encode(clip.skeletons, cfg);
    if (mode == dit::ConditioningMode::channel_concat) {
        // Reference appearance and pose share the condition channels: the
        // reference latent is added to every skeleton latent frame.
        p.condition = codec::encode(detail::repeat_frame(clip.reference, T), cfg);
        for (std::size_t i = 0; i < p.condition.size(); ++i) p.condition.data[i] += skel.data[i];
    } else {
        p.condition = skel;
        p.reference = codec::encode(detail::repeat_frame(clip.reference, cfg.temporal_stride), cfg);
    }
    return p;
}

/// Differentiable noise prediction for the whole of z_t, [N, c] tokens.
template <class T>
tk::Tensor<T> predict_tokens(const dit::DiT<T>& model, const Problem& p, const LatentSeq& z_t, std::size_t t) {
    switch (p.mode) {
        case dit::ConditioningMode::unified_sequence:
            return model.epsilon_tokens(z_t, t, p.mask);
        case dit::ConditioningMode::channel_concat:
            return model.channel_concat_tokens(z_t, p.condition, t);
        case dit::ConditioningMode::token_residual:
            return model.token_residual_tokens(z_t, model.condition_embedding(p.condition, p.reference), t);
    }
    throw ConfigError("predict_tokens: unknown conditioning mode");
}

template <class T>
LatentSeq predict(const dit::DiT<T>& model, const Problem& p, const LatentSeq& z_t, std::size_t t) {
    return dit::from_tokens(predict_tokens(model, p, z_t, t), z_t.frames, z_t.height, z_t.width);
}

struct TrainOptions {
    diffusion::LossRegion region = diffusion::LossRegion::target_only;
    diffusion::NoisingMode noising = diffusion::NoisingMode::corrected;
    std::uint64_t seed = 42;
};

struct StepResult {
    double loss = 0.0;
    std::size_t t = 0;
};

/// Draws (t, eps) for a step. The draw depends only on (seed, step), so a
/// resumed run sees the same noise as an uninterrupted one.
inline std::size_t draw_noise(std::uint64_t seed, std::uint64_t step, std::size_t schedule_len, LatentSeq& eps) {
    Rng rng(derive_seed({seed, step, 0x7a11ULL}));
    const auto t = static_cast<std::size_t>(rng.below(schedule_len));
    for (auto& v : eps.data) v = static_cast<float>(rng.normal());
    return t;
}

/// One forward/backward/AdamW update on one problem (batch size 1).
template <class T>
StepResult train_step(dit::DiT<T>& model, const Problem& p, const diffusion::NoiseSchedule& schedule,
                      tk::AdamWState<T>& opt, const TrainOptions& options, std::uint64_t step) {
    LatentSeq eps = p.z0;
    const std::size_t t = draw_noise(options.seed, step, schedule.size(), eps);
    const LatentSeq z_t = diffusion::add_noise_selective(p.z0, eps, t, p.mask, schedule, options.noising);

    auto params = model.trainable_parameters();
    for (auto& q : params) q.zero_grad();
    tk::GradTape<T> tape;
    tk::Tensor<T> loss;
    {
        typename tk::GradTape<T>::Recording rec(tape);
        const auto pred = predict_tokens(model, p, z_t, t);
        loss = diffusion::masked_loss(pred, dit::to_tokens<T>(eps), p.mask, options.region);
    }
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at t=" + std::to_string(t));
    }
    tape.backward(loss);
    tk::adamw_step(params, opt);
    for (auto& q : params) q.zero_grad();
    return {value, t};
}

/// Evaluation-only loss at a fixed (t, eps) draw; no parameter update.
template <class T>
double eval_loss(const dit::DiT<T>& model, const Problem& p, const diffusion::NoiseSchedule& schedule,
                 const TrainOptions& options, std::uint64_t draw) {
    LatentSeq eps = p.z0;
    const std::size_t t = draw_noise(options.seed, draw, schedule.size(), eps);
    const LatentSeq z_t = diffusion::add_noise_selective(p.z0, eps, t, p.mask, schedule, options.noising);
    const LatentSeq pred = predict(model, p, z_t, t);
    return diffusion::masked_loss_value(pred, eps, p.mask, options.region);
}

struct Generation {
    LatentSeq latent;    // final z_0 estimate of the whole problem
    VideoTensor target;  // decoded target frames
};

/// Samples the target segment of an infer-mode problem.
template <class T>
Generation generate(const dit::DiT<T>& model, const Problem& p, const codec::CodecConfig& cfg,
                    const diffusion::NoiseSchedule& schedule, const diffusion::SamplerConfig& sampler,
                    std::uint64_t seed) {
    const diffusion::NoisePredictor fn = [&](const LatentSeq& z, std::size_t t) { return predict(model, p, z, t); };
    Generation g;
    g.latent = diffusion::sample(fn, p.z0, p.mask, schedule, sampler, seed);
    g.target = codec::decode(slice_frames(g.latent, p.target_offset, g.latent.frames - p.target_offset), cfg);
    return g;
}

/// Epoch-structured training over a fixed problem list with a recorded loss
/// history. Epoch e visits the problems in an order drawn from (seed, e).
template <class T>
class Trainer {
public:
    Trainer(dit::DiT<T>& model, diffusion::NoiseSchedule schedule, TrainOptions options, tk::AdamWConfig adam)
        : model_(model),
          schedule_(std::move(schedule)),
          options_(options),
          opt_(tk::make_adamw_state(model.trainable_parameters(), adam)) {}

    static std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed({seed, epoch, 0x0bdeULL}));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        return order;
    }

    /// Trains on problems[order[i]] for global step `step()`; throws
    /// NumericError with the recent loss history on a non-finite loss.
    StepResult step_on(const Problem& p) {
        StepResult r;
        try {
            r = train_step(model_, p, schedule_, opt_, options_, global_step_);
        } catch (const NumericError& e) {
            std::ostringstream os;
            os << "training diverged at step " << global_step_ << ": " << e.what() << "; recent losses:";
            for (double l : recent_) os << ' ' << l;
            throw NumericError(os.str());
        }
        ++global_step_;
        recent_.push_back(r.loss);
        if (recent_.size() > 16) recent_.pop_front();
        return r;
    }

    std::uint64_t step() const { return global_step_; }
    void set_step(std::uint64_t s) { global_step_ = s; }
    tk::AdamWState<T>& optimizer() { return opt_; }
    const diffusion::NoiseSchedule& schedule() const { return schedule_; }
    const TrainOptions& options() const { return options_; }

private:
    dit::DiT<T>& model_;
    diffusion::NoiseSchedule schedule_;
    TrainOptions options_;
    tk::AdamWState<T> opt_;
    std::uint64_t global_step_ = 0;
    std::deque<double> recent_;
};

}  // namespace seqcond
