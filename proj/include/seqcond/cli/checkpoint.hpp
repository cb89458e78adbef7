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
#include <filesystem>
#include <string>
#include <vector>

#include "seqcond/dit/model.hpp"
#include "seqcond/errors.hpp"
#include "seqcond/io.hpp"
#include "seqcond/tensorkit/adamw.hpp"

// Parameter file (.sqck), little-endian:
//   char[4] "SQCK", u32 version, u64 config hash, u32 kind, u32 block count,
//   then per block: u32 tag length, tag bytes, u32 rank, u32 extents[rank],
//   f32 values.
// kind 0 holds base weights, kind 1 LoRA adapters. Optimizer state (kind 2)
// stores m and v for each trainable parameter as blocks "<tag>.m" and
// "<tag>.v", preceded by a one-element block "step".

namespace seqcond::cli {

inline constexpr char kCkptMagic[4] = {'S', 'Q', 'C', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

enum class BlockKind : std::uint32_t { base = 0, lora = 1, optimizer = 2 };

struct ParamBlock {
    std::string tag;
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

struct ParamFile {
    std::uint64_t config_hash = 0;
    BlockKind kind = BlockKind::base;
    std::vector<ParamBlock> blocks;

    const ParamBlock* find(const std::string& tag) const {
        for (const auto& b : blocks)
            if (b.tag == tag) return &b;
        return nullptr;
    }
};

inline std::string encode_params(const ParamFile& f) {
    std::string out;
    out.append(kCkptMagic, 4);
    io::put_u32(out, kCkptVersion);
    io::put_u64(out, f.config_hash);
    io::put_u32(out, static_cast<std::uint32_t>(f.kind));
    io::put_u32(out, static_cast<std::uint32_t>(f.blocks.size()));
    for (const auto& b : f.blocks) {
        io::put_u32(out, static_cast<std::uint32_t>(b.tag.size()));
        out += b.tag;
        io::put_u32(out, static_cast<std::uint32_t>(b.shape.size()));
        for (auto e : b.shape) io::put_u32(out, static_cast<std::uint32_t>(e));
        for (float v : b.values) io::put_f32(out, v);
    }
    return out;
}

inline ParamFile decode_params(std::string_view bytes, const std::string& what) {
    io::Reader r(bytes, what);
    if (r.raw(4) != std::string_view(kCkptMagic, 4)) throw DataError(what + ": not a checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCkptVersion) throw DataError(what + ": unsupported checkpoint version " + std::to_string(version));
    ParamFile f;
    f.config_hash = r.u64();
    const auto kind = r.u32();
    if (kind > 2) throw DataError(what + ": unknown block kind " + std::to_string(kind));
    f.kind = static_cast<BlockKind>(kind);
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamBlock b;
        const auto len = r.u32();
        b.tag = std::string(r.raw(len));
        const auto rank = r.u32();
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            b.shape.push_back(r.u32());
            n *= b.shape.back();
        }
        if (n > r.remaining() / 4) throw DataError(what + ": block '" + b.tag + "' exceeds file size");
        b.values.resize(n);
        for (auto& v : b.values) v = r.f32();
        f.blocks.push_back(std::move(b));
    }
    if (r.remaining() != 0) throw DataError(what + ": trailing bytes after last block");
    return f;
}

inline void save_params(const std::filesystem::path& path, const ParamFile& f) {
    io::write_atomic(path, encode_params(f));
}

inline ParamFile load_params(const std::filesystem::path& path) {
    return decode_params(io::read_file(path), path.string());
}

template <class T>
ParamFile collect(const std::vector<dit::NamedParam<T>>& params, BlockKind kind, std::uint64_t hash) {
    ParamFile f;
    f.config_hash = hash;
    f.kind = kind;
    for (const auto& p : params) {
        ParamBlock b;
        b.tag = p.tag;
        b.shape = p.tensor.shape();
        b.values.assign(p.tensor.data().begin(), p.tensor.data().end());
        f.blocks.push_back(std::move(b));
    }
    return f;
}

/// Copies stored values into matching parameters; every parameter must be
/// present with the same shape.
template <class T>
void restore(const std::vector<dit::NamedParam<T>>& params, const ParamFile& f, const std::string& what) {
    if (f.blocks.size() != params.size()) {
        throw ConfigError(what + ": holds " + std::to_string(f.blocks.size()) + " blocks, model has " +
                          std::to_string(params.size()) + " parameters");
    }
    for (const auto& p : params) {
        const ParamBlock* b = f.find(p.tag);
        if (!b) throw ConfigError(what + ": missing parameter '" + p.tag + "'");
        if (b->shape != p.tensor.shape()) {
            throw ConfigError(what + ": parameter '" + p.tag + "' has shape " + tk::to_string(b->shape) +
                              ", model expects " + tk::to_string(p.tensor.shape()));
        }
        auto dst = p.tensor;
        for (std::size_t i = 0; i < b->values.size(); ++i) dst[i] = static_cast<T>(b->values[i]);
    }
}

template <class T>
ParamFile collect_optimizer(const std::vector<dit::NamedParam<T>>& params, const tk::AdamWState<T>& s,
                            std::uint64_t hash) {
    ParamFile f;
    f.config_hash = hash;
    f.kind = BlockKind::optimizer;
    // The step counter is split into two exactly representable halves.
    f.blocks.push_back({"step", {2},
                        {static_cast<float>(s.step & 0xffffu), static_cast<float>((s.step >> 16) & 0xffffu)}});
    for (std::size_t i = 0; i < params.size(); ++i) {
        f.blocks.push_back({params[i].tag + ".m", params[i].tensor.shape(),
                            std::vector<float>(s.m[i].begin(), s.m[i].end())});
        f.blocks.push_back({params[i].tag + ".v", params[i].tensor.shape(),
                            std::vector<float>(s.v[i].begin(), s.v[i].end())});
    }
    return f;
}

template <class T>
void restore_optimizer(const std::vector<dit::NamedParam<T>>& params, tk::AdamWState<T>& s, const ParamFile& f,
                       const std::string& what) {
    const ParamBlock* step = f.find("step");
    if (!step || step->values.size() != 2) throw DataError(what + ": missing step counter");
    s.step = static_cast<std::uint64_t>(step->values[0]) | (static_cast<std::uint64_t>(step->values[1]) << 16);
    s.m.assign(params.size(), {});
    s.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamBlock* m = f.find(params[i].tag + ".m");
        const ParamBlock* v = f.find(params[i].tag + ".v");
        if (!m || !v || m->values.size() != params[i].tensor.numel() || v->values.size() != m->values.size()) {
            throw DataError(what + ": optimizer state for '" + params[i].tag + "' missing or mis-sized");
        }
        s.m[i].assign(m->values.begin(), m->values.end());
        s.v[i].assign(v->values.begin(), v->values.end());
    }
}

/// Trainable parameters with tags, matching DiT::trainable_parameters order.
template <class T>
std::vector<dit::NamedParam<T>> trainable_named(const dit::DiT<T>& model) {
    return model.lora_active() ? model.adapter_parameters() : model.base_parameters();
}

}  // namespace seqcond::cli
