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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/io.hpp"
#include "seqcond/tensorkit/random.hpp"
#include "seqcond/video.hpp"

// Synthetic stick-figure corpus in the OpenPose COCO-18 body layout.
//
// Joint order: 0 nose, 1 neck, 2 r-shoulder, 3 r-elbow, 4 r-wrist,
// 5 l-shoulder, 6 l-elbow, 7 l-wrist, 8 r-hip, 9 r-knee, 10 r-ankle, 11 l-hip,
// 12 l-knee, 13 l-ankle, 14 r-eye, 15 l-eye, 16 r-ear, 17 l-ear.

namespace seqcond::toy {

inline constexpr std::size_t kJoints = 18;
inline constexpr std::size_t kLimbs = 17;
inline constexpr float kConfidenceThreshold = 0.1f;

/// Bone list as (parent, child) joint indices, in drawing order.
inline constexpr std::array<std::array<std::size_t, 2>, kLimbs> kLimbPairs{{
    {1, 2}, {1, 5}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {1, 8}, {8, 9}, {9, 10},
    {1, 11}, {11, 12}, {12, 13}, {1, 0}, {0, 14}, {14, 16}, {0, 15}, {15, 17},
}};

/// Canonical 8-bit skeleton palette; joint j and limb j share entry j.
inline constexpr std::array<std::array<std::uint8_t, 3>, kJoints> kPalette{{
    {255, 0, 0}, {255, 85, 0}, {255, 170, 0}, {255, 255, 0}, {170, 255, 0}, {85, 255, 0},
    {0, 255, 0}, {0, 255, 85}, {0, 255, 170}, {0, 255, 255}, {0, 170, 255}, {0, 85, 255},
    {0, 0, 255}, {85, 0, 255}, {170, 0, 255}, {255, 0, 255}, {255, 0, 170}, {255, 0, 85},
}};

/// Limbs are drawn at this fraction of the palette intensity.
inline constexpr float kLimbShade = 0.6f;

using Color = std::array<float, 3>;

inline Color palette_color(std::size_t i, float shade = 1.0f) {
    return {kPalette[i][0] / 255.0f * shade, kPalette[i][1] / 255.0f * shade, kPalette[i][2] / 255.0f * shade};
}

struct Joint {
    float x = 0.0f;  // normalized, 0 = left edge
    float y = 0.0f;  // normalized, 0 = top edge
    float c = 0.0f;  // confidence
    bool operator==(const Joint&) const = default;
};

using Pose = std::array<Joint, kJoints>;

/// Per-frame joints in normalized [0, 1] image coordinates.
struct SkeletonTrack {
    std::vector<Pose> frames;

    std::size_t length() const { return frames.size(); }
    bool operator==(const SkeletonTrack&) const = default;
};

/// Appearance of one identity.
struct SpriteCharacter {
    std::uint64_t identity_seed = 0;
    std::array<Color, kLimbs> limb_color{};
    std::array<float, kLimbs> limb_width{};  // fraction of image height
    Color head_color{};
    float head_radius = 0.07f;  // fraction of image height
    Color background{};
};

// ---- rendering -------------------------------------------------------------

namespace detail {

inline float segment_distance(float px, float py, float ax, float ay, float bx, float by) {
    const float dx = bx - ax, dy = by - ay;
    const float len2 = dx * dx + dy * dy;
    float u = len2 > 0.0f ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0f;
    u = std::clamp(u, 0.0f, 1.0f);
    const float ex = ax + u * dx - px, ey = ay + u * dy - py;
    return std::sqrt(ex * ex + ey * ey);
}

// Composites an anti-aliased capsule of half-width r (pixels) over frame f.
inline void draw_capsule(VideoTensor& v, std::size_t f, float ax, float ay, float bx, float by, float r,
                         const Color& col) {
    const auto y0 = static_cast<long>(std::floor(std::min(ay, by) - r - 1.0f));
    const auto y1 = static_cast<long>(std::ceil(std::max(ay, by) + r + 1.0f));
    const auto x0 = static_cast<long>(std::floor(std::min(ax, bx) - r - 1.0f));
    const auto x1 = static_cast<long>(std::ceil(std::max(ax, bx) + r + 1.0f));
    for (long y = std::max(0L, y0); y <= std::min<long>(static_cast<long>(v.height) - 1, y1); ++y) {
        for (long x = std::max(0L, x0); x <= std::min<long>(static_cast<long>(v.width) - 1, x1); ++x) {
            const float d = segment_distance(static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f, ax, ay, bx, by);
            const float cov = std::clamp(r + 0.5f - d, 0.0f, 1.0f);
            if (cov <= 0.0f) continue;
            for (std::size_t c = 0; c < 3; ++c) {
                float& p = v.at(c, f, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                p = p * (1.0f - cov) + col[c] * cov;
            }
        }
    }
}

inline Joint clamped(const Joint& j) { return {std::clamp(j.x, 0.0f, 1.0f), std::clamp(j.y, 0.0f, 1.0f), j.c}; }

inline void check_frame_args(const SkeletonTrack& track, std::size_t t, std::size_t H, std::size_t W) {
    if (t >= track.length()) {
        throw ShapeError("render: frame " + std::to_string(t) + " outside track of length " +
                         std::to_string(track.length()));
    }
    if (H == 0 || W == 0) throw ConfigError("render: empty frame size");
}

}  // namespace detail

/// OpenPose-style rendering of frame t into a 3 x 1 x H x W frame: palette
/// limbs at kLimbShade and palette joint dots on black.
inline VideoTensor render_skeleton_frame(const SkeletonTrack& track, std::size_t t, std::size_t H, std::size_t W) {
    detail::check_frame_args(track, t, H, W);
    VideoTensor out(3, 1, H, W, 0.0f);
    const Pose& pose = track.frames[t];
    const float sx = static_cast<float>(W), sy = static_cast<float>(H);
    const float stroke = 0.0225f * sy;
    const float dot = 0.035f * sy;
    for (std::size_t i = 0; i < kLimbs; ++i) {
        const Joint a = detail::clamped(pose[kLimbPairs[i][0]]);
        const Joint b = detail::clamped(pose[kLimbPairs[i][1]]);
        if (a.c < kConfidenceThreshold || b.c < kConfidenceThreshold) continue;
        detail::draw_capsule(out, 0, a.x * sx, a.y * sy, b.x * sx, b.y * sy, stroke, palette_color(i, kLimbShade));
    }
    for (std::size_t j = 0; j < kJoints; ++j) {
        const Joint a = detail::clamped(pose[j]);
        if (a.c < kConfidenceThreshold) continue;
        detail::draw_capsule(out, 0, a.x * sx, a.y * sy, a.x * sx, a.y * sy, dot, palette_color(j));
    }
    return out;
}

/// The character drawn over the same joint geometry: its own limb colors and
/// widths, a filled head at the nose, on its background color.
inline VideoTensor render_character_frame(const SpriteCharacter& ch, const SkeletonTrack& track, std::size_t t,
                                          std::size_t H, std::size_t W) {
    detail::check_frame_args(track, t, H, W);
    VideoTensor out(3, 1, H, W);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < out.plane(); ++i) out.data[c * out.plane() + i] = ch.background[c];
    const Pose& pose = track.frames[t];
    const float sx = static_cast<float>(W), sy = static_cast<float>(H);
    for (std::size_t i = 0; i < kLimbs; ++i) {
        const Joint a = detail::clamped(pose[kLimbPairs[i][0]]);
        const Joint b = detail::clamped(pose[kLimbPairs[i][1]]);
        if (a.c < kConfidenceThreshold || b.c < kConfidenceThreshold) continue;
        detail::draw_capsule(out, 0, a.x * sx, a.y * sy, b.x * sx, b.y * sy, 0.5f * ch.limb_width[i] * sy,
                             ch.limb_color[i]);
    }
    const Joint nose = detail::clamped(pose[0]);
    if (nose.c >= kConfidenceThreshold) {
        detail::draw_capsule(out, 0, nose.x * sx, nose.y * sy, nose.x * sx, nose.y * sy, ch.head_radius * sy,
                             ch.head_color);
    }
    return out;
}

// ---- characters and motion ---------------------------------------------------

/// Limb groups sharing a color and width: torso, right arm, left arm, right
/// leg, left leg, face.
inline constexpr std::array<std::size_t, kLimbs> kLimbGroup{0, 0, 1, 1, 2, 2, 0, 3, 3, 0, 4, 4, 5, 5, 5, 5, 5};

namespace detail {

inline float palette_distance(const Color& c) {
    float best = 1e9f;
    for (std::size_t i = 0; i < kJoints; ++i) {
        for (float shade : {1.0f, kLimbShade}) {
            const Color p = palette_color(i, shade);
            const float d = std::sqrt((c[0] - p[0]) * (c[0] - p[0]) + (c[1] - p[1]) * (c[1] - p[1]) +
                                      (c[2] - p[2]) * (c[2] - p[2]));
            best = std::min(best, d);
        }
    }
    return best;
}

inline Color draw_color(Rng& rng, float lo, float hi) {
    for (;;) {
        Color c{static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
                static_cast<float>(rng.uniform(lo, hi))};
        if (palette_distance(c) > 0.25f) return c;
    }
}

}  // namespace detail

inline SpriteCharacter make_character(std::uint64_t identity_seed) {
    Rng rng(derive_seed({identity_seed, 0xc4a7ULL}));
    SpriteCharacter ch;
    ch.identity_seed = identity_seed;
    std::array<Color, 6> colors{};
    std::array<float, 6> widths{};
    for (std::size_t g = 0; g < 6; ++g) {
        colors[g] = detail::draw_color(rng, 0.3f, 0.95f);
        widths[g] = static_cast<float>(rng.uniform(0.05, 0.09));
    }
    for (std::size_t i = 0; i < kLimbs; ++i) {
        ch.limb_color[i] = colors[kLimbGroup[i]];
        ch.limb_width[i] = widths[kLimbGroup[i]];
    }
    ch.head_color = detail::draw_color(rng, 0.3f, 0.95f);
    ch.head_radius = static_cast<float>(rng.uniform(0.06, 0.09));
    for (auto& v : ch.background) v = static_cast<float>(rng.uniform(0.0, 0.2));
    return ch;
}

struct MotionConfig {
    float reversion = 0.15f;   // pull toward the rest angle per frame
    float sigma_min = 0.08f;   // per-clip step noise range, radians
    float sigma_max = 0.22f;
};

namespace detail {

// Bounded mean-reverting walk of one angle.
struct AngleWalk {
    float rest, lo, hi, value;
    void step(Rng& rng, float reversion, float sigma) {
        value += reversion * (rest - value) + sigma * static_cast<float>(rng.normal());
        value = std::clamp(value, lo, hi);
    }
};

inline void place(Pose& p, std::size_t j, float x, float y) { p[j] = {std::clamp(x, 0.0f, 1.0f), std::clamp(y, 0.0f, 1.0f), 1.0f}; }

// Child joint at `len` from parent along absolute angle a (0 = straight down).
inline void limb(Pose& p, std::size_t parent, std::size_t child, float a, float len) {
    place(p, child, p[parent].x + len * std::sin(a), p[parent].y + len * std::cos(a));
}

}  // namespace detail

/// Smooth random motion of `length` frames. Angles of the torso, arms, legs
/// and head follow independent bounded mean-reverting walks with a per-clip
/// noise amplitude; the neck drifts slowly.
inline SkeletonTrack make_track(std::uint64_t seed, std::size_t length, const MotionConfig& mc = {}) {
    using detail::AngleWalk;
    Rng rng(derive_seed({seed, 0x7ac4ULL}));
    const float sigma = static_cast<float>(rng.uniform(mc.sigma_min, mc.sigma_max));
    auto walk = [&](float rest, float lo, float hi) {
        AngleWalk w{rest, lo, hi, rest};
        w.value = std::clamp(rest + static_cast<float>(rng.uniform(-0.5, 0.5)) * (hi - lo) * 0.5f, lo, hi);
        return w;
    };
    AngleWalk torso = walk(0.0f, -0.25f, 0.25f);
    AngleWalk head = walk(0.0f, -0.35f, 0.35f);
    AngleWalk r_upper = walk(-0.45f, -2.6f, 0.3f), r_fore = walk(-0.2f, -1.4f, 1.4f);
    AngleWalk l_upper = walk(0.45f, -0.3f, 2.6f), l_fore = walk(0.2f, -1.4f, 1.4f);
    AngleWalk r_thigh = walk(-0.12f, -0.8f, 0.4f), r_shin = walk(0.1f, -0.2f, 1.0f);
    AngleWalk l_thigh = walk(0.12f, -0.4f, 0.8f), l_shin = walk(-0.1f, -1.0f, 0.2f);
    float nx = 0.5f + static_cast<float>(rng.uniform(-0.06, 0.06));
    float ny = 0.27f + static_cast<float>(rng.uniform(-0.02, 0.02));

    SkeletonTrack track;
    track.frames.resize(length);
    for (std::size_t f = 0; f < length; ++f) {
        if (f > 0) {
            for (AngleWalk* w : {&torso, &head, &r_upper, &r_fore, &l_upper, &l_fore, &r_thigh, &r_shin, &l_thigh,
                                 &l_shin}) {
                w->step(rng, mc.reversion, sigma);
            }
            nx = std::clamp(nx + 0.01f * static_cast<float>(rng.normal()), 0.38f, 0.62f);
            ny = std::clamp(ny + 0.005f * static_cast<float>(rng.normal()), 0.24f, 0.30f);
        }
        Pose& p = track.frames[f];
        detail::place(p, 1, nx, ny);
        const float ca = std::cos(torso.value), sa = std::sin(torso.value);
        // Shoulders and hips sit perpendicular to the torso axis.
        detail::place(p, 2, nx - 0.1f * ca, ny + 0.1f * sa);
        detail::place(p, 5, nx + 0.1f * ca, ny - 0.1f * sa);
        const float hx = nx + 0.28f * sa, hy = ny + 0.28f * ca;
        detail::place(p, 8, hx - 0.065f * ca, hy + 0.065f * sa);
        detail::place(p, 11, hx + 0.065f * ca, hy - 0.065f * sa);
        detail::limb(p, 2, 3, r_upper.value, 0.14f);
        detail::limb(p, 3, 4, r_upper.value + r_fore.value, 0.13f);
        detail::limb(p, 5, 6, l_upper.value, 0.14f);
        detail::limb(p, 6, 7, l_upper.value + l_fore.value, 0.13f);
        detail::limb(p, 8, 9, r_thigh.value, 0.17f);
        detail::limb(p, 9, 10, r_thigh.value + r_shin.value, 0.16f);
        detail::limb(p, 11, 12, l_thigh.value, 0.17f);
        detail::limb(p, 12, 13, l_thigh.value + l_shin.value, 0.16f);
        const float h = torso.value + head.value;
        detail::limb(p, 1, 0, std::numbers::pi_v<float> + h, 0.09f);
        const float ch = std::cos(h), sh = std::sin(h);
        auto face = [&](std::size_t j, float dx, float dy) {
            detail::place(p, j, p[0].x + dx * ch + dy * sh, p[0].y - dx * sh + dy * ch);
        };
        face(14, -0.025f, -0.02f);
        face(15, 0.025f, -0.02f);
        face(16, -0.05f, -0.005f);
        face(17, 0.05f, -0.005f);
    }
    return track;
}

// ---- corpus ------------------------------------------------------------------

struct DatasetConfig {
    std::size_t n_clips = 72;
    std::size_t n_test = 8;
    std::size_t n_identities = 8;
    std::size_t frames = 8;  // T
    std::size_t height = 32;
    std::size_t width = 32;
    std::uint64_t master_seed = 42;
    std::size_t spatial_multiple = 4;  // frame sizes must divide by the codec patch
    MotionConfig motion;
};

inline void validate(const DatasetConfig& c) {
    if (c.n_clips < 1) throw ConfigError("gen_dataset: need at least one clip");
    if (c.n_test > c.n_clips) throw ConfigError("gen_dataset: more test clips than clips");
    if (c.n_identities < 1) throw ConfigError("gen_dataset: need at least one identity");
    if (c.frames < 1) throw ConfigError("gen_dataset: clip length must be >= 1");
    if (c.height < 8 || c.width < 8) throw ConfigError("gen_dataset: frames must be at least 8x8");
    if (c.spatial_multiple > 0 && (c.height % c.spatial_multiple != 0 || c.width % c.spatial_multiple != 0)) {
        throw ConfigError("gen_dataset: frame size " + std::to_string(c.height) + "x" + std::to_string(c.width) +
                          " not divisible by " + std::to_string(c.spatial_multiple));
    }
}

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

/// One clip: track frame 0 is the reference pose, frames 1..T drive the
/// skeleton and target videos.
struct ClipRecord {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    std::size_t identity = 0;
    Split split = Split::train;
    SpriteCharacter character;
    SkeletonTrack track;        // T + 1 poses
    VideoTensor reference;      // 3 x 1 x H x W
    VideoTensor skeleton;       // 3 x T x H x W
    VideoTensor target;         // 3 x T x H x W
};

inline std::uint64_t clip_seed(std::uint64_t master, std::size_t id) { return derive_seed({master, 0xc11bULL, id}); }

inline std::uint64_t identity_seed(std::uint64_t master, std::size_t identity) {
    return derive_seed({master, 0x1de7ULL, identity});
}

inline VideoTensor render_video(const SkeletonTrack& track, std::size_t first, std::size_t count, std::size_t H,
                                std::size_t W, const SpriteCharacter* ch) {
    VideoTensor out(3, count, H, W);
    for (std::size_t k = 0; k < count; ++k) {
        const VideoTensor f = ch ? render_character_frame(*ch, track, first + k, H, W)
                                 : render_skeleton_frame(track, first + k, H, W);
        for (std::size_t c = 0; c < 3; ++c)
            std::copy_n(f.data.begin() + static_cast<long>(c * f.plane()), f.plane(),
                        out.data.begin() + static_cast<long>(out.index(c, k, 0, 0)));
    }
    return out;
}

inline ClipRecord make_clip(const DatasetConfig& cfg, std::size_t id) {
    ClipRecord r;
    r.id = id;
    r.seed = clip_seed(cfg.master_seed, id);
    r.identity = id % cfg.n_identities;
    r.split = id >= cfg.n_clips - cfg.n_test ? Split::test : Split::train;
    r.character = make_character(identity_seed(cfg.master_seed, r.identity));
    r.track = make_track(r.seed, cfg.frames + 1, cfg.motion);
    r.reference = render_video(r.track, 0, 1, cfg.height, cfg.width, &r.character);
    r.skeleton = render_video(r.track, 1, cfg.frames, cfg.height, cfg.width, nullptr);
    r.target = render_video(r.track, 1, cfg.frames, cfg.height, cfg.width, &r.character);
    return r;
}

/// The whole corpus in clip-id order; the last n_test clips form the test split.
inline std::vector<ClipRecord> gen_dataset(const DatasetConfig& cfg) {
    validate(cfg);
    std::vector<ClipRecord> out;
    out.reserve(cfg.n_clips);
    for (std::size_t i = 0; i < cfg.n_clips; ++i) out.push_back(make_clip(cfg, i));
    return out;
}

// ---- keypoint documents ----------------------------------------------------------

/// BODY_25 index for each COCO-18 joint (BODY_25 inserts mid-hip at 8 and
/// appends feet).
inline constexpr std::array<std::size_t, kJoints> kBody25ToCoco{0, 1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14,
                                                                15, 16, 17, 18};

/// Writes {image_width, image_height, frames: [{people: [{pose_keypoints_2d}]}]}
/// with pixel coordinates.
inline nlohmann::json keypoints_to_json(const SkeletonTrack& track, std::size_t W, std::size_t H) {
    nlohmann::json doc;
    doc["image_width"] = W;
    doc["image_height"] = H;
    doc["frames"] = nlohmann::json::array();
    for (const auto& pose : track.frames) {
        std::vector<double> flat;
        flat.reserve(3 * kJoints);
        for (const auto& j : pose) {
            flat.push_back(static_cast<double>(j.x) * static_cast<double>(W));
            flat.push_back(static_cast<double>(j.y) * static_cast<double>(H));
            flat.push_back(static_cast<double>(j.c));
        }
        nlohmann::json person;
        person["pose_keypoints_2d"] = flat;
        nlohmann::json frame;
        frame["people"] = nlohmann::json::array({person});
        doc["frames"].push_back(frame);
    }
    return doc;
}

inline SkeletonTrack keypoints_from_json(const nlohmann::json& doc) {
    auto fail = [](const std::string& why) -> DataError { return DataError("keypoints: " + why); };
    if (!doc.is_object()) throw fail("document is not an object");
    if (!doc.contains("image_width") || !doc.contains("image_height") || !doc["image_width"].is_number() ||
        !doc["image_height"].is_number()) {
        throw fail("missing numeric image_width / image_height");
    }
    const double W = doc["image_width"].get<double>(), H = doc["image_height"].get<double>();
    if (!(W > 0 && H > 0)) throw fail("image size must be positive");
    if (!doc.contains("frames") || !doc["frames"].is_array()) throw fail("missing frames array");
    SkeletonTrack track;
    for (const auto& fr : doc["frames"]) {
        Pose pose{};
        if (!fr.is_object() || !fr.contains("people") || !fr["people"].is_array()) {
            throw fail("frame " + std::to_string(track.length()) + " has no people array");
        }
        if (!fr["people"].empty()) {
            const auto& person = fr["people"][0];
            if (!person.is_object() || !person.contains("pose_keypoints_2d") ||
                !person["pose_keypoints_2d"].is_array()) {
                throw fail("frame " + std::to_string(track.length()) + " lacks pose_keypoints_2d");
            }
            const auto& flat = person["pose_keypoints_2d"];
            if (flat.size() % 3 != 0) throw fail("keypoint array length not a multiple of 3");
            const std::size_t J = flat.size() / 3;
            for (const auto& v : flat) {
                if (!v.is_number()) throw fail("non-numeric keypoint value");
            }
            auto joint = [&](std::size_t src) {
                const double x = flat[3 * src].get<double>() / W;
                const double y = flat[3 * src + 1].get<double>() / H;
                const double c = flat[3 * src + 2].get<double>();
                return Joint{static_cast<float>(std::clamp(x, 0.0, 1.0)), static_cast<float>(std::clamp(y, 0.0, 1.0)),
                             static_cast<float>(std::clamp(c, 0.0, 1.0))};
            };
            if (J == kJoints) {
                for (std::size_t j = 0; j < kJoints; ++j) pose[j] = joint(j);
            } else if (J == 25) {
                for (std::size_t j = 0; j < kJoints; ++j) pose[j] = joint(kBody25ToCoco[j]);
            } else {
                throw fail(std::to_string(J) + " joints per person; expected 18 (COCO) or 25 (BODY_25)");
            }
        }
        track.frames.push_back(pose);
    }
    return track;
}

inline void save_keypoints(const std::filesystem::path& path, const SkeletonTrack& track, std::size_t W,
                           std::size_t H) {
    io::write_atomic(path, keypoints_to_json(track, W, H).dump(1) + "\n");
}

inline SkeletonTrack load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("keypoints: cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("keypoints: malformed document " + path.string() + ": " + e.what());
    }
    return keypoints_from_json(doc);
}

// ---- on-disk corpus ----------------------------------------------------------------

struct ManifestEntry {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    std::size_t identity = 0;
    Split split = Split::train;
};

struct Manifest {
    DatasetConfig config;
    std::uint64_t config_hash = 0;
    std::vector<ManifestEntry> clips;

    std::vector<std::size_t> ids(Split s) const {
        std::vector<std::size_t> out;
        for (const auto& c : clips)
            if (c.split == s) out.push_back(c.id);
        return out;
    }
};

inline std::uint64_t dataset_hash(const DatasetConfig& c) {
    return derive_seed({c.n_clips, c.n_test, c.n_identities, c.frames, c.height, c.width, c.master_seed,
                        std::bit_cast<std::uint32_t>(c.motion.reversion), std::bit_cast<std::uint32_t>(c.motion.sigma_min),
                        std::bit_cast<std::uint32_t>(c.motion.sigma_max)});
}

inline std::string clip_dir_name(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip_%04zu", id);
    return buf;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config_hash"] = io::hex64(m.config_hash);
    const auto& c = m.config;
    j["n_clips"] = c.n_clips;
    j["n_test"] = c.n_test;
    j["n_identities"] = c.n_identities;
    j["frames"] = c.frames;
    j["channels"] = 3;
    j["height"] = c.height;
    j["width"] = c.width;
    j["master_seed"] = c.master_seed;
    j["motion"] = {{"reversion", c.motion.reversion}, {"sigma_min", c.motion.sigma_min},
                   {"sigma_max", c.motion.sigma_max}};
    j["clips"] = nlohmann::json::array();
    for (const auto& e : m.clips) {
        j["clips"].push_back({{"id", e.id},
                              {"dir", clip_dir_name(e.id)},
                              {"seed", io::hex64(e.seed)},
                              {"identity", e.identity},
                              {"split", to_string(e.split)}});
    }
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    try {
        Manifest m;
        auto& c = m.config;
        c.n_clips = j.at("n_clips").get<std::size_t>();
        c.n_test = j.at("n_test").get<std::size_t>();
        c.n_identities = j.at("n_identities").get<std::size_t>();
        c.frames = j.at("frames").get<std::size_t>();
        c.height = j.at("height").get<std::size_t>();
        c.width = j.at("width").get<std::size_t>();
        c.master_seed = j.at("master_seed").get<std::uint64_t>();
        c.motion.reversion = j.at("motion").at("reversion").get<float>();
        c.motion.sigma_min = j.at("motion").at("sigma_min").get<float>();
        c.motion.sigma_max = j.at("motion").at("sigma_max").get<float>();
        m.config_hash = io::parse_hex64(j.at("config_hash").get<std::string>());
        for (const auto& e : j.at("clips")) {
            ManifestEntry me;
            me.id = e.at("id").get<std::size_t>();
            me.seed = io::parse_hex64(e.at("seed").get<std::string>());
            me.identity = e.at("identity").get<std::size_t>();
            const auto s = e.at("split").get<std::string>();
            if (s != "train" && s != "test") throw DataError("manifest: unknown split '" + s + "'");
            me.split = s == "train" ? Split::train : Split::test;
            m.clips.push_back(me);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

/// Writes every clip directory, then manifest.json last.
inline Manifest write_dataset(const std::filesystem::path& root, const DatasetConfig& cfg) {
    validate(cfg);
    Manifest m;
    m.config = cfg;
    m.config_hash = dataset_hash(cfg);
    std::filesystem::create_directories(root);
    std::filesystem::remove(root / "manifest.json");
    for (std::size_t i = 0; i < cfg.n_clips; ++i) {
        const ClipRecord r = make_clip(cfg, i);
        const auto dir = root / clip_dir_name(i);
        std::filesystem::create_directories(dir);
        io::write_clip(dir / "ref.sqv", r.reference, m.config_hash);
        io::write_clip(dir / "skeleton.sqv", r.skeleton, m.config_hash);
        io::write_clip(dir / "target.sqv", r.target, m.config_hash);
        save_keypoints(dir / "keypoints.json", r.track, cfg.width, cfg.height);
        m.clips.push_back({r.id, r.seed, r.identity, r.split});
    }
    io::write_atomic(root / "manifest.json", manifest_to_json(m).dump(1) + "\n");
    return m;
}

inline Manifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    std::ifstream in(path);
    if (!in) throw DataError("corpus: no manifest at " + path.string() + " (incomplete or missing corpus)");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corpus: malformed manifest: " + std::string(e.what()));
    }
    return manifest_from_json(j);
}

struct StoredClip {
    std::size_t id = 0;
    VideoTensor reference, skeleton, target;
};

inline StoredClip read_clip(const std::filesystem::path& root, std::size_t id) {
    const auto dir = root / clip_dir_name(id);
    StoredClip c;
    c.id = id;
    c.reference = io::read_clip(dir / "ref.sqv");
    c.skeleton = io::read_clip(dir / "skeleton.sqv");
    c.target = io::read_clip(dir / "target.sqv");
    return c;
}

}  // namespace seqcond::toy
