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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "seqcond/diffusion.hpp"
#include "seqcond/dit/model.hpp"
#include "seqcond/pipeline.hpp"
#include "support.hpp"

namespace seqcond::diffusion {
namespace {

using testing::check_gradients;
using testing::random_grid;

Grid4 random_mask(std::size_t l, std::size_t h, std::size_t w, Rng& rng) {
    Grid4 m(1, l, h, w);
    for (auto& v : m.data) v = rng.below(2) ? 1.0f : 0.0f;
    m.data[rng.below(m.size())] = 0.0f;  // at least one supervised position
    return m;
}

// Mask of the unified layout: the first `ctx` frames are context.
Grid4 frame_mask(std::size_t l, std::size_t ctx, std::size_t h, std::size_t w) {
    Grid4 m(1, l, h, w);
    for (std::size_t i = 0; i < ctx * h * w; ++i) m.data[i] = 1.0f;
    return m;
}

TEST(Schedule, MatchesProductOracle) {
    const auto s = make_schedule(1000, 1e-4, 0.02);
    ASSERT_EQ(s.size(), 1000u);
    EXPECT_DOUBLE_EQ(s.betas.front(), 1e-4);
    EXPECT_DOUBLE_EQ(s.betas.back(), 0.02);
    long double prod = 1.0L;
    for (std::size_t t = 0; t < 1000; ++t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * static_cast<long double>(t) / 999.0L;
        prod *= 1.0L - beta;
        EXPECT_NEAR(s.alpha_bar[t], static_cast<double>(prod), 1e-12);
        if (t > 0) EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    }
    EXPECT_GT(s.alpha_bar.back(), 0.0);
    EXPECT_LT(s.alpha_bar.back(), 1e-4);
    EXPECT_THROW(s.at(1000), ConfigError);
    EXPECT_THROW(make_schedule(0), ConfigError);
    EXPECT_THROW(make_schedule(10, 0.02, 1e-4), ConfigError);
}

TEST(Noising, CorrectedKeepsContextBitExact) {
    Rng rng(1);
    const auto s = make_schedule();
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = 1 + rng.below(4), h = 1 + rng.below(3), w = 1 + rng.below(3), c = 1 + rng.below(4);
        const auto z0 = random_grid<LatentSeq>(c, l, h, w, rng, -2.0, 2.0);
        const auto eps = random_grid<LatentSeq>(c, l, h, w, rng, -3.0, 3.0);
        const auto mask = random_mask(l, h, w, rng);
        const std::size_t t = rng.below(s.size());
        const auto zt = add_noise_selective(z0, eps, t, mask, s);
        const double sa = std::sqrt(s.at(t)), sn = std::sqrt(1.0 - s.at(t));
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < l * h * w; ++i) {
                const std::size_t k = ch * l * h * w + i;
                if (mask.data[i] != 0.0f) {
                    ASSERT_EQ(std::memcmp(&zt.data[k], &z0.data[k], sizeof(float)), 0);
                } else {
                    ASSERT_NEAR(zt.data[k], sa * z0.data[k] + sn * eps.data[k], 1e-6);
                }
            }
    }
}

TEST(Noising, LiteralScalesContextWithoutNoise) {
    Rng rng(2);
    const auto s = make_schedule();
    const auto z0 = random_grid<LatentSeq>(2, 3, 2, 2, rng);
    const auto eps = random_grid<LatentSeq>(2, 3, 2, 2, rng);
    const auto mask = frame_mask(3, 1, 2, 2);
    const auto zt = add_noise_selective(z0, eps, 500, mask, s, NoisingMode::literal);
    const double sa = std::sqrt(s.at(500));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(zt.data[i], sa * z0.data[i], 1e-7);
    EXPECT_THROW(add_noise_selective(z0, eps, 5, frame_mask(2, 1, 2, 2), s), ShapeError);
}

TEST(Loss, InvariantToContextPredictions) {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = 1 + rng.below(4), h = 1 + rng.below(3), w = 1 + rng.below(3), c = 1 + rng.below(3);
        const auto mask = random_mask(l, h, w, rng);
        const auto target = dit::to_tokens<float>(random_grid<LatentSeq>(c, l, h, w, rng));
        auto pred = dit::to_tokens<float>(random_grid<LatentSeq>(c, l, h, w, rng));
        const float a = masked_loss(pred, target, mask, LossRegion::target_only).item();
        for (std::size_t n = 0; n < l * h * w; ++n)
            if (mask.data[n] != 0.0f)
                for (std::size_t j = 0; j < c; ++j) pred[n * c + j] += static_cast<float>(100.0 * rng.normal());
        const float b = masked_loss(pred, target, mask, LossRegion::target_only).item();
        ASSERT_EQ(a - b, 0.0f);
    }
}

TEST(Loss, NormalizationAndRegions) {
    const Grid4 mask = frame_mask(2, 1, 1, 1);
    tk::Tensor<double> pred({2, 2}, std::vector<double>{1, 1, 3, 3});
    tk::Tensor<double> target({2, 2}, 0.0);
    // target_only: (9 + 9) / 2; all_frames: (1 + 1 + 9 + 9) / 4.
    EXPECT_DOUBLE_EQ(masked_loss(pred, target, mask, LossRegion::target_only).item(), 9.0);
    EXPECT_DOUBLE_EQ(masked_loss(pred, target, mask, LossRegion::all_frames).item(), 5.0);
    EXPECT_THROW(masked_loss(pred, target, frame_mask(2, 2, 1, 1), LossRegion::target_only), ConfigError);
    EXPECT_NO_THROW(masked_loss(pred, target, frame_mask(2, 2, 1, 1), LossRegion::all_frames));
    EXPECT_THROW(masked_loss(pred, target, frame_mask(3, 1, 1, 1), LossRegion::target_only), ShapeError);
}

TEST(Loss, TensorAndGridFormsAgree) {
    Rng rng(4);
    const auto mask = random_mask(3, 2, 2, rng);
    const auto p = random_grid<LatentSeq>(3, 3, 2, 2, rng);
    const auto t = random_grid<LatentSeq>(3, 3, 2, 2, rng);
    for (auto r : {LossRegion::target_only, LossRegion::all_frames}) {
        const double a = masked_loss(dit::to_tokens<double>(p), dit::to_tokens<double>(t), mask, r).item();
        EXPECT_NEAR(masked_loss_value(p, t, mask, r), a, 1e-12);
    }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    Rng rng(5);
    const auto mask = random_mask(3, 2, 2, rng);
    auto pred = testing::random_tensor<double>({12, 3}, rng);
    const auto target = testing::random_tensor<double>({12, 3}, rng, 1.0, false);
    const auto r =
        check_gradients([&] { return masked_loss(pred, target, mask, LossRegion::target_only); }, {pred});
    EXPECT_LT(r.max_rel, 1e-4);
    // Context rows get exactly zero gradient.
    tk::GradTape<double> tape;
    tk::Tensor<double> loss;
    {
        tk::GradTape<double>::Recording rec(tape);
        loss = masked_loss(pred, target, mask, LossRegion::target_only);
    }
    tape.backward(loss);
    for (std::size_t n = 0; n < 12; ++n)
        if (mask.data[n] != 0.0f)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(pred.grad()[n * 3 + j], 0.0);
}

TEST(X0, InvertsForwardProcess) {
    Rng rng(6);
    const auto s = make_schedule();
    const auto z0 = random_grid<LatentSeq>(2, 2, 3, 3, rng);
    const auto eps = random_grid<LatentSeq>(2, 2, 3, 3, rng, -2.0, 2.0);
    const Grid4 none(1, 2, 3, 3, 0.0f);
    for (std::size_t t : {0u, 250u, 999u}) {
        const auto zt = add_noise_selective(z0, eps, t, none, s);
        const auto x = x0_estimate(zt, eps, t, s);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.data[i], z0.data[i], t == 999 ? 2e-3 : 1e-5);
        const auto lit = x0_estimate(zt, eps, t, s, true);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(lit.data[i], std::sqrt(s.at(t)) * z0.data[i], 1e-5);
    }
}

TEST(Timesteps, TrailingSpacing) {
    const auto ts = sampling_timesteps(1000, 50);
    ASSERT_EQ(ts.size(), 50u);
    EXPECT_EQ(ts.front(), 999u);
    EXPECT_EQ(ts.back(), 19u);
    for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_EQ(ts[i - 1] - ts[i], 20u);
    EXPECT_EQ(sampling_timesteps(1000, 1), (std::vector<std::size_t>{999}));
    EXPECT_EQ(sampling_timesteps(10, 3), (std::vector<std::size_t>{9, 5, 2}));
    const auto lin = sampling_timesteps(1000, 50, TimestepSpacing::linspace);
    ASSERT_EQ(lin.size(), 50u);
    EXPECT_EQ(lin.front(), 999u);
    EXPECT_EQ(lin.back(), 0u);
    for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(lin[49 - k], static_cast<std::size_t>(std::lround(999.0 * k / 49.0)));
    EXPECT_EQ(sampling_timesteps(10, 10, TimestepSpacing::linspace),
              (std::vector<std::size_t>{9, 8, 7, 6, 5, 4, 3, 2, 1, 0}));
    EXPECT_EQ(sampling_timesteps(1000, 2, TimestepSpacing::linspace), (std::vector<std::size_t>{999, 0}));
    EXPECT_EQ(sampling_timesteps(1000, 1, TimestepSpacing::linspace), (std::vector<std::size_t>{999}));
    EXPECT_THROW(sampling_timesteps(1000, 0), ConfigError);
    EXPECT_THROW(sampling_timesteps(10, 11), ConfigError);
}

// The exact noise oracle for a known clean latent: eps = (z_t - sqrt(abar) z0) / sqrt(1 - abar).
NoisePredictor oracle(const LatentSeq& z0, const NoiseSchedule& s) {
    return [z0, &s](const LatentSeq& z, std::size_t t) {
        const double ab = s.at(t);
        LatentSeq e = z;
        for (std::size_t i = 0; i < e.size(); ++i)
            e.data[i] = static_cast<float>((z.data[i] - std::sqrt(ab) * z0.data[i]) / std::sqrt(1.0 - ab));
        return e;
    };
}

TEST(Sampler, OracleRecoversTargetAndKeepsContext) {
    Rng rng(7);
    const auto s = make_schedule();
    for (int trial = 0; trial < 5; ++trial) {
        const auto z0 = random_grid<LatentSeq>(4, 5, 3, 3, rng, -1.0, 1.0);
        const auto mask = frame_mask(5, 3, 3, 3);
        SamplerConfig cfg;
        cfg.clip_x0 = false;
        const auto out = sample(oracle(z0, s), z0, mask, s, cfg, 100 + trial);
        double worst = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(double(out.data[i]) - z0.data[i]));
        EXPECT_LT(worst, 1e-4);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(out.data[c * 45 + i], z0.data[c * 45 + i]);
    }
}

TEST(Sampler, ClippingKeepsEstimatesInRange) {
    Rng rng(8);
    const auto s = make_schedule();
    const auto z0 = random_grid<LatentSeq>(2, 2, 2, 2, rng, 0.0, 1.0);
    const NoisePredictor wild = [](const LatentSeq& z, std::size_t) {
        LatentSeq e = z;
        for (auto& v : e.data) v = -5.0f;
        return e;
    };
    const auto out = sample(wild, z0, Grid4(1, 2, 2, 2, 0.0f), s, SamplerConfig{}, 1);
    for (float v : out.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    // The oracle stays exact with clipping on when the target lies in range.
    const auto exact = sample(oracle(z0, s), z0, Grid4(1, 2, 2, 2, 0.0f), s, SamplerConfig{}, 1);
    for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_NEAR(exact.data[i], z0.data[i], 1e-4);
}

TEST(Sampler, SeededAndNumericallyGuarded) {
    Rng rng(9);
    const auto s = make_schedule();
    const auto z0 = random_grid<LatentSeq>(2, 2, 2, 2, rng);
    const Grid4 none(1, 2, 2, 2, 0.0f);
    const NoisePredictor zero = [](const LatentSeq& z, std::size_t) {
        LatentSeq e = z;
        std::fill(e.data.begin(), e.data.end(), 0.0f);
        return e;
    };
    SamplerConfig cfg;
    cfg.steps = 10;
    EXPECT_EQ(sample(zero, z0, none, s, cfg, 5), sample(zero, z0, none, s, cfg, 5));
    EXPECT_NE(sample(zero, z0, none, s, cfg, 5), sample(zero, z0, none, s, cfg, 6));
    const NoisePredictor nan = [](const LatentSeq& z, std::size_t) {
        LatentSeq e = z;
        std::fill(e.data.begin(), e.data.end(), NAN);
        return e;
    };
    cfg.clip_x0 = false;
    EXPECT_THROW(sample(nan, z0, none, s, cfg, 5), NumericError);
}

// ---- training step ------------------------------------------------------------------------------------

TEST(TrainStep, NoiseDrawDependsOnlyOnSeedAndStep) {
    LatentSeq a(2, 2, 2, 2), b(2, 2, 2, 2);
    EXPECT_EQ(draw_noise(42, 7, 1000, a), draw_noise(42, 7, 1000, b));
    EXPECT_EQ(a, b);
    draw_noise(42, 8, 1000, b);
    EXPECT_NE(a, b);
}

TEST(TrainStep, EpochOrderIsAPermutation) {
    const auto o = Trainer<float>::epoch_order(42, 3, 64);
    std::vector<std::size_t> sorted = o;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(o, Trainer<float>::epoch_order(42, 3, 64));
    EXPECT_NE(o, Trainer<float>::epoch_order(42, 4, 64));
}

TEST(TrainStep, LossDecreasesOnOneProblem) {
    Rng rng(10);
    Clip clip{0, random_grid<VideoTensor>(3, 1, 8, 8, rng), random_grid<VideoTensor>(3, 2, 8, 8, rng),
              random_grid<VideoTensor>(3, 2, 8, 8, rng)};
    const codec::CodecConfig cc{4, 1, 3};
    dit::DiTConfig cfg;
    cfg.latent_channels = cc.latent_channels();
    cfg.model_dim = 32;
    cfg.n_heads = 2;
    cfg.head_dim = 16;
    cfg.n_layers = 2;
    dit::DiT<float> model(cfg, 1);
    const auto p = make_problem(clip, dit::ConditioningMode::unified_sequence, cc, seq::Mode::train);
    const auto sched = make_schedule();
    TrainOptions opts;
    tk::AdamWConfig ac;
    ac.lr = 1e-3;
    auto opt = tk::make_adamw_state(model.trainable_parameters(), ac);
    const double before = eval_loss(model, p, sched, opts, 1000);
    for (std::uint64_t step = 0; step < 60; ++step) train_step(model, p, sched, opt, opts, step);
    const double after = eval_loss(model, p, sched, opts, 1000);
    EXPECT_LT(after, before);
    for (const auto& q : model.trainable_parameters()) EXPECT_FALSE(q.has_grad());
}

}  // namespace
}  // namespace seqcond::diffusion
