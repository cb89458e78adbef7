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
#include <cstddef>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"

namespace seqcond {

/// Channel-major 4-D float grid: [channels][frames][height][width].
struct Grid4 {
    std::size_t channels = 0;
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    Grid4() = default;
    Grid4(std::size_t c, std::size_t l, std::size_t h, std::size_t w, float fill = 0.0f)
        : channels(c), frames(l), height(h), width(w), data(c * l * h * w, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return height * width; }
    std::size_t index(std::size_t c, std::size_t l, std::size_t y, std::size_t x) const {
        return ((c * frames + l) * height + y) * width + x;
    }
    float& at(std::size_t c, std::size_t l, std::size_t y, std::size_t x) { return data[index(c, l, y, x)]; }
    float at(std::size_t c, std::size_t l, std::size_t y, std::size_t x) const { return data[index(c, l, y, x)]; }

    bool same_shape(const Grid4& o) const {
        return channels == o.channels && frames == o.frames && height == o.height && width == o.width;
    }
    std::string shape_string() const {
        return std::to_string(channels) + "x" + std::to_string(frames) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }

    friend bool operator==(const Grid4&, const Grid4&) = default;
};

/// Pixel frames, values nominally in [0, 1].
struct VideoTensor : Grid4 {
    using Grid4::Grid4;
};

/// Encoded latent sequence, c x l x h x w.
struct LatentSeq : Grid4 {
    using Grid4::Grid4;
};

/// Copies frames [first, first+count) of `src`.
template <class G>
G slice_frames(const G& src, std::size_t first, std::size_t count) {
    if (first + count > src.frames) {
        throw ShapeError("slice_frames: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                         ") exceeds " + std::to_string(src.frames) + " frames");
    }
    G out;
    static_cast<Grid4&>(out) = Grid4(src.channels, count, src.height, src.width);
    const std::size_t plane = src.plane();
    for (std::size_t c = 0; c < src.channels; ++c) {
        for (std::size_t l = 0; l < count; ++l) {
            const float* s = src.data.data() + src.index(c, first + l, 0, 0);
            std::copy(s, s + plane, out.data.data() + out.index(c, l, 0, 0));
        }
    }
    return out;
}

/// Concatenates along the frame axis.
template <class G>
G concat_frames(const G& a, const G& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw ShapeError("concat_frames: " + a.shape_string() + " vs " + b.shape_string());
    }
    G out;
    static_cast<Grid4&>(out) = Grid4(a.channels, a.frames + b.frames, a.height, a.width);
    const std::size_t plane = a.plane();
    for (std::size_t c = 0; c < a.channels; ++c) {
        for (std::size_t l = 0; l < a.frames; ++l) {
            const float* s = a.data.data() + a.index(c, l, 0, 0);
            std::copy(s, s + plane, out.data.data() + out.index(c, l, 0, 0));
        }
        for (std::size_t l = 0; l < b.frames; ++l) {
            const float* s = b.data.data() + b.index(c, l, 0, 0);
            std::copy(s, s + plane, out.data.data() + out.index(c, a.frames + l, 0, 0));
        }
    }
    return out;
}

}  // namespace seqcond
