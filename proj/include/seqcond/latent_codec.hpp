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
#include <cstdint>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/video.hpp"

// Exactly invertible space-to-depth codec. A latent pixel (f, y, x) holds the
// p x p x r_t block of pixels starting at (f*r_t, y*p, x*p) for every input
// channel, flattened as
//     latent_channel = ((ch * r_t + dt) * p + dy) * p + dx.
// Encoding is a pure reshuffle, so decode(encode(X)) == X bit for bit.

namespace seqcond::codec {

struct CodecConfig {
    std::size_t spatial_patch = 4;
    std::size_t temporal_stride = 1;
    std::size_t channels = 3;

    std::size_t latent_channels() const { return channels * spatial_patch * spatial_patch * temporal_stride; }
};

/// Spatial tiles in pixel units. Tile origins advance by the stride and the
/// last tile is pulled back to end at the border.
struct TileSpec {
    std::size_t tile_h = 34;
    std::size_t tile_w = 34;
    std::size_t stride_h = 18;
    std::size_t stride_w = 16;
};

inline void validate(const CodecConfig& cfg) {
    if (cfg.spatial_patch < 1) throw ConfigError("codec: spatial_patch must be >= 1");
    if (cfg.temporal_stride < 1) throw ConfigError("codec: temporal_stride must be >= 1");
    if (cfg.channels < 1) throw ConfigError("codec: channels must be >= 1");
}

inline void check_divisible(const VideoTensor& x, const CodecConfig& cfg) {
    validate(cfg);
    if (x.channels != cfg.channels) {
        throw ConfigError("codec: input has " + std::to_string(x.channels) + " channels, config expects " +
                          std::to_string(cfg.channels));
    }
    if (x.height % cfg.spatial_patch != 0) {
        throw ConfigError("codec: height " + std::to_string(x.height) + " not divisible by spatial_patch " +
                          std::to_string(cfg.spatial_patch));
    }
    if (x.width % cfg.spatial_patch != 0) {
        throw ConfigError("codec: width " + std::to_string(x.width) + " not divisible by spatial_patch " +
                          std::to_string(cfg.spatial_patch));
    }
    if (x.frames % cfg.temporal_stride != 0) {
        throw ConfigError("codec: frame count " + std::to_string(x.frames) + " not divisible by temporal_stride " +
                          std::to_string(cfg.temporal_stride));
    }
}

namespace detail {

// Visits every (pixel index, latent index) pair for latent rows [ly0, ly1) and
// cols [lx0, lx1).
template <class Fn>
void for_each_pair(const CodecConfig& cfg, const Grid4& px, const Grid4& z, std::size_t ly0, std::size_t ly1,
                   std::size_t lx0, std::size_t lx1, Fn&& fn) {
    const std::size_t p = cfg.spatial_patch;
    const std::size_t rt = cfg.temporal_stride;
    for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
        for (std::size_t dt = 0; dt < rt; ++dt) {
            for (std::size_t dy = 0; dy < p; ++dy) {
                for (std::size_t dx = 0; dx < p; ++dx) {
                    const std::size_t lc = ((ch * rt + dt) * p + dy) * p + dx;
                    for (std::size_t f = 0; f < z.frames; ++f) {
                        for (std::size_t y = ly0; y < ly1; ++y) {
                            for (std::size_t x = lx0; x < lx1; ++x) {
                                fn(px.index(ch, f * rt + dt, y * p + dy, x * p + dx), z.index(lc, f, y, x));
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

inline LatentSeq encode(const VideoTensor& x, const CodecConfig& cfg) {
    check_divisible(x, cfg);
    LatentSeq z(cfg.latent_channels(), x.frames / cfg.temporal_stride, x.height / cfg.spatial_patch,
                x.width / cfg.spatial_patch);
    detail::for_each_pair(cfg, x, z, 0, z.height, 0, z.width,
                          [&](std::size_t pi, std::size_t li) { z.data[li] = x.data[pi]; });
    return z;
}

inline VideoTensor decode(const LatentSeq& z, const CodecConfig& cfg) {
    validate(cfg);
    if (z.channels != cfg.latent_channels()) {
        throw ShapeError("codec: latent has " + std::to_string(z.channels) + " channels, config implies " +
                         std::to_string(cfg.latent_channels()));
    }
    VideoTensor x(cfg.channels, z.frames * cfg.temporal_stride, z.height * cfg.spatial_patch,
                  z.width * cfg.spatial_patch);
    detail::for_each_pair(cfg, x, z, 0, z.height, 0, z.width,
                          [&](std::size_t pi, std::size_t li) { x.data[pi] = z.data[li]; });
    return x;
}

namespace detail {

// Tile origins along one axis: 0, stride, 2*stride, ... with the final tile
// shifted back so it ends exactly at `extent`.
inline std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t tile, std::size_t stride) {
    std::vector<std::size_t> out;
    if (tile >= extent) {
        out.push_back(0);
        return out;
    }
    for (std::size_t o = 0;; o += stride) {
        if (o + tile >= extent) {
            out.push_back(extent - tile);
            break;
        }
        out.push_back(o);
    }
    return out;
}

}  // namespace detail

/// Encodes tile by tile. Each pixel tile is widened to the enclosing patch
/// grid, encoded, and written into the full latent (last writer wins). Since
/// the codec is local, the result equals encode() exactly.
inline LatentSeq encode_tiled(const VideoTensor& x, const CodecConfig& cfg, const TileSpec& tiles) {
    check_divisible(x, cfg);
    const std::size_t p = cfg.spatial_patch;
    if (tiles.tile_h < p || tiles.tile_w < p) {
        throw ConfigError("codec: tile " + std::to_string(tiles.tile_h) + "x" + std::to_string(tiles.tile_w) +
                          " is smaller than one " + std::to_string(p) + "x" + std::to_string(p) + " patch");
    }
    if (tiles.stride_h < 1 || tiles.stride_w < 1 || tiles.stride_h > tiles.tile_h || tiles.stride_w > tiles.tile_w) {
        throw ConfigError("codec: tile stride must be in [1, tile size]");
    }
    LatentSeq z(cfg.latent_channels(), x.frames / cfg.temporal_stride, x.height / p, x.width / p);
    const auto ys = detail::tile_origins(x.height, tiles.tile_h, tiles.stride_h);
    const auto xs = detail::tile_origins(x.width, tiles.tile_w, tiles.stride_w);
    for (auto y0 : ys) {
        for (auto x0 : xs) {
            const std::size_t y1 = std::min(x.height, y0 + tiles.tile_h);
            const std::size_t x1 = std::min(x.width, x0 + tiles.tile_w);
            // Snap outward to the patch grid.
            const std::size_t ly0 = y0 / p, ly1 = (y1 + p - 1) / p;
            const std::size_t lx0 = x0 / p, lx1 = (x1 + p - 1) / p;
            // Crop the tile, encode it on its own, then paste.
            VideoTensor tile(x.channels, x.frames, (ly1 - ly0) * p, (lx1 - lx0) * p);
            for (std::size_t c = 0; c < x.channels; ++c)
                for (std::size_t f = 0; f < x.frames; ++f)
                    for (std::size_t yy = 0; yy < tile.height; ++yy)
                        for (std::size_t xx = 0; xx < tile.width; ++xx)
                            tile.at(c, f, yy, xx) = x.at(c, f, ly0 * p + yy, lx0 * p + xx);
            const LatentSeq zt = encode(tile, cfg);
            for (std::size_t c = 0; c < z.channels; ++c)
                for (std::size_t f = 0; f < z.frames; ++f)
                    for (std::size_t yy = 0; yy < zt.height; ++yy)
                        for (std::size_t xx = 0; xx < zt.width; ++xx)
                            z.at(c, f, ly0 + yy, lx0 + xx) = zt.at(c, f, yy, xx);
        }
    }
    return z;
}

/// Frame-level binary mask -> latent-frame mask under temporal stride r_t.
/// A latent frame is context iff every pixel frame it covers is context;
/// windows mixing context and prediction frames are rejected.
inline std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& frame_mask, std::size_t r_t) {
    if (r_t < 1) throw ConfigError("downsample_mask: temporal stride must be >= 1");
    if (frame_mask.size() % r_t != 0) {
        throw ConfigError("downsample_mask: mask length " + std::to_string(frame_mask.size()) +
                          " not divisible by temporal stride " + std::to_string(r_t));
    }
    std::vector<std::uint8_t> out(frame_mask.size() / r_t);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint8_t first = frame_mask[i * r_t] ? 1 : 0;
        for (std::size_t k = 1; k < r_t; ++k) {
            if ((frame_mask[i * r_t + k] ? 1 : 0) != first) {
                throw ConfigError("downsample_mask: latent frame " + std::to_string(i) +
                                  " mixes context and prediction frames; choose T so that 1+T is divisible by " +
                                  std::to_string(r_t));
            }
        }
        out[i] = first;
    }
    return out;
}

}  // namespace seqcond::codec
