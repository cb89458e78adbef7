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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/latent_codec.hpp"
#include "seqcond/video.hpp"

// The packed conditioning sequence
//
//     X = [ref, S_1 .. S_T, Z_1 .. Z_T],   L_total = 1 + 2T
//
// and its context/prediction mask. Docs count frames from 1 (frame t is
// context iff t <= 1 + T); code indexes from 0, so frame i is context iff
// i < 1 + T and the target segment is [1 + T, 1 + 2T).

namespace seqcond::seq {

enum class Mode { train, infer };

struct UnifiedSequence {
    VideoTensor frames;  // C x (1 + 2T) x H x W
    std::size_t clip_length = 0;  // T
    Mode mode = Mode::train;

    std::size_t total_length() const { return 1 + 2 * clip_length; }
    std::size_t context_length() const { return 1 + clip_length; }
};

struct MaskSpec {
    std::vector<std::uint8_t> frame_mask;  // length 1 + 2T, 1 = context
    Grid4 latent_mask;                     // 1 x l x h x w, values 0/1
};

inline std::size_t total_length(std::size_t T) { return 1 + 2 * T; }

/// Packs ref (1 frame), skeletons (T frames) and targets (T frames). In infer
/// mode the target slots are zero-filled and `targets` may be omitted.
inline UnifiedSequence build_sequence(const VideoTensor& ref, const VideoTensor& skeletons,
                                      const std::optional<VideoTensor>& targets, Mode mode) {
    if (ref.frames != 1) {
        throw ShapeError("build_sequence: reference must be a single frame, got " + std::to_string(ref.frames));
    }
    if (skeletons.frames == 0) {
        throw ShapeError("build_sequence: skeleton sequence is empty");
    }
    if (ref.channels != skeletons.channels || ref.height != skeletons.height || ref.width != skeletons.width) {
        throw ShapeError("build_sequence: reference " + ref.shape_string() + " and skeletons " +
                         skeletons.shape_string() + " differ in frame shape");
    }
    const std::size_t T = skeletons.frames;
    VideoTensor tgt(ref.channels, T, ref.height, ref.width);
    if (mode == Mode::train) {
        if (!targets) {
            throw ShapeError("build_sequence: train mode requires target frames");
        }
        if (targets->frames != T) {
            throw ShapeError("build_sequence: " + std::to_string(T) + " skeleton frames but " +
                             std::to_string(targets->frames) + " target frames");
        }
        if (targets->channels != ref.channels || targets->height != ref.height || targets->width != ref.width) {
            throw ShapeError("build_sequence: target frame shape " + targets->shape_string() + " differs");
        }
        tgt = *targets;
    } else if (targets && targets->frames != T) {
        throw ShapeError("build_sequence: " + std::to_string(T) + " skeleton frames but " +
                         std::to_string(targets->frames) + " target frames");
    }
    UnifiedSequence out;
    out.frames = concat_frames(concat_frames(ref, skeletons), tgt);
    out.clip_length = T;
    out.mode = mode;
    return out;
}

/// Frame mask with 1 + T ones then T zeros, downsampled by the codec's
/// temporal stride and broadcast over a latent_h x latent_w plane.
inline MaskSpec build_mask(std::size_t T, const codec::CodecConfig& cfg, std::size_t latent_h, std::size_t latent_w) {
    if (T < 1) {
        throw ConfigError("build_mask: clip length T must be >= 1");
    }
    MaskSpec m;
    m.frame_mask.assign(total_length(T), 0);
    for (std::size_t i = 0; i < 1 + T; ++i) m.frame_mask[i] = 1;
    const auto latent_frames = codec::downsample_mask(m.frame_mask, cfg.temporal_stride);
    m.latent_mask = Grid4(1, latent_frames.size(), latent_h, latent_w);
    for (std::size_t f = 0; f < latent_frames.size(); ++f)
        for (std::size_t y = 0; y < latent_h; ++y)
            for (std::size_t x = 0; x < latent_w; ++x) m.latent_mask.at(0, f, y, x) = latent_frames[f] ? 1.0f : 0.0f;
    return m;
}

/// The last T frames of a 1 + 2T pixel sequence, or the last T / r_t frames
/// of its latent equivalent. The input is left untouched.
template <class G>
G split_target(const G& seq, std::size_t T, std::size_t temporal_stride = 1) {
    const std::size_t L = total_length(T);
    if (temporal_stride < 1 || L % temporal_stride != 0 || seq.frames != L / temporal_stride) {
        throw ShapeError("split_target: sequence has " + std::to_string(seq.frames) + " frames, expected " +
                         std::to_string(L) + (temporal_stride > 1 ? " / " + std::to_string(temporal_stride) : ""));
    }
    const std::size_t n = T / temporal_stride;
    return slice_frames(seq, seq.frames - n, n);
}

/// Frames [0, 1 + T): reference plus skeletons.
template <class G>
G split_context(const G& seq, std::size_t T, std::size_t temporal_stride = 1) {
    const std::size_t L = total_length(T);
    if (temporal_stride < 1 || L % temporal_stride != 0 || seq.frames != L / temporal_stride) {
        throw ShapeError("split_context: sequence has " + std::to_string(seq.frames) + " frames");
    }
    return slice_frames(seq, 0, seq.frames - T / temporal_stride);
}

}  // namespace seqcond::seq
