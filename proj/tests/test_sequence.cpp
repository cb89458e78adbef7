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

#include "seqcond/sequence.hpp"
#include "support.hpp"

namespace seqcond::seq {
namespace {

using testing::random_grid;

struct Parts {
    VideoTensor ref, skel, tgt;
};

Parts make_parts(std::size_t T, Rng& rng, std::size_t H = 8, std::size_t W = 8) {
    return {random_grid<VideoTensor>(3, 1, H, W, rng), random_grid<VideoTensor>(3, T, H, W, rng),
            random_grid<VideoTensor>(3, T, H, W, rng)};
}

TEST(Sequence, TrainLayoutIsRefSkeletonsTargets) {
    Rng rng(1);
    for (std::size_t T : {1u, 3u, 8u}) {
        const auto p = make_parts(T, rng);
        const auto s = build_sequence(p.ref, p.skel, p.tgt, Mode::train);
        ASSERT_EQ(s.frames.frames, total_length(T));
        EXPECT_EQ(s.total_length(), 1 + 2 * T);
        EXPECT_EQ(s.context_length(), 1 + T);
        EXPECT_EQ(slice_frames(s.frames, 0, 1), p.ref);
        EXPECT_EQ(slice_frames(s.frames, 1, T), p.skel);
        EXPECT_EQ(slice_frames(s.frames, 1 + T, T), p.tgt);
    }
}

TEST(Sequence, InferZeroFillsTargets) {
    Rng rng(2);
    const auto p = make_parts(4, rng);
    const auto s = build_sequence(p.ref, p.skel, std::nullopt, Mode::infer);
    const auto tail = split_target(s.frames, 4);
    for (float v : tail.data) EXPECT_EQ(v, 0.0f);
    // Targets supplied in infer mode are still ignored.
    const auto s2 = build_sequence(p.ref, p.skel, p.tgt, Mode::infer);
    EXPECT_EQ(s2.frames, s.frames);
}

TEST(Sequence, RejectsBadShapes) {
    Rng rng(3);
    const auto p = make_parts(3, rng);
    const auto two = random_grid<VideoTensor>(3, 2, 8, 8, rng);
    const auto small = random_grid<VideoTensor>(3, 3, 4, 8, rng);
    EXPECT_THROW(build_sequence(two, p.skel, p.tgt, Mode::train), ShapeError);
    EXPECT_THROW(build_sequence(p.ref, p.skel, std::nullopt, Mode::train), ShapeError);
    EXPECT_THROW(build_sequence(p.ref, p.skel, two, Mode::train), ShapeError);
    EXPECT_THROW(build_sequence(p.ref, small, small, Mode::train), ShapeError);
    EXPECT_THROW(build_sequence(p.ref, VideoTensor{}, std::nullopt, Mode::infer), ShapeError);
}

TEST(Mask, OnesForContextZerosForTargets) {
    for (std::size_t T : {1u, 2u, 7u}) {
        const auto m = build_mask(T, {4, 1, 3}, 2, 3);
        ASSERT_EQ(m.frame_mask.size(), 1 + 2 * T);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < m.frame_mask.size(); ++i) {
            EXPECT_EQ(m.frame_mask[i], i < 1 + T ? 1 : 0);
            ones += m.frame_mask[i];
        }
        EXPECT_EQ(ones, 1 + T);
        EXPECT_EQ(m.latent_mask.channels, 1u);
        EXPECT_EQ(m.latent_mask.frames, 1 + 2 * T);
        for (std::size_t f = 0; f < m.latent_mask.frames; ++f)
            for (std::size_t y = 0; y < 2; ++y)
                for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(m.latent_mask.at(0, f, y, x), f < 1 + T ? 1.0f : 0.0f);
    }
    EXPECT_THROW(build_mask(0, {}, 1, 1), ConfigError);
}

TEST(Mask, TemporalStrideAboveOneAlwaysMixesAWindow) {
    // Context and target boundaries would both need to fall on window edges,
    // which forces r_t to divide 1.
    for (std::size_t rt : {2u, 3u})
        for (std::size_t T = 1; T <= 6; ++T) EXPECT_THROW(build_mask(T, {4, rt, 3}, 1, 1), ConfigError);
}

TEST(Split, TargetAndContextPartitionTheSequence) {
    Rng rng(4);
    const auto p = make_parts(5, rng);
    const auto s = build_sequence(p.ref, p.skel, p.tgt, Mode::train);
    const auto before = s.frames;
    EXPECT_EQ(split_target(s.frames, 5), p.tgt);
    const auto ctx = split_context(s.frames, 5);
    EXPECT_EQ(ctx.frames, 6u);
    EXPECT_EQ(concat_frames(ctx, split_target(s.frames, 5)), s.frames);
    EXPECT_EQ(s.frames, before);
    EXPECT_THROW(split_target(p.tgt, 5), ShapeError);
    EXPECT_THROW(split_context(s.frames, 4), ShapeError);
}

}  // namespace
}  // namespace seqcond::seq
