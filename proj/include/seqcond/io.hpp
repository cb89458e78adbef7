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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/video.hpp"

// Byte-level helpers shared by the corpus, checkpoint and report writers.
//
// Clip container (.sqv), all integers little-endian:
//   0  char[4]  "SQCV"
//   4  u32      format version (1)
//   8  u32      C, L, H, W
//  24  u64      stamp (config hash of the producer)
//  32  f32[C*L*H*W] channel-major data

namespace seqcond::io {

inline constexpr char kClipMagic[4] = {'S', 'Q', 'C', 'V'};
inline constexpr std::uint32_t kClipVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Bounds-checked little-endian reader over a byte buffer.
class Reader {
public:
    Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError(what_ + ": truncated file");
    }
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw DataError("write failed for " + path.string() + " (disk full?)");
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
    if (s.empty() || s.size() > 16) throw DataError("bad hex value '" + s + "'");
    std::uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
        else throw DataError("bad hex value '" + s + "'");
    }
    return v;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string encode_clip(const Grid4& v, std::uint64_t stamp) {
    std::string out;
    out.reserve(32 + 4 * v.size());
    out.append(kClipMagic, 4);
    put_u32(out, kClipVersion);
    for (auto d : {v.channels, v.frames, v.height, v.width}) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, stamp);
    for (float f : v.data) put_f32(out, f);
    return out;
}

struct ClipHeader {
    std::uint32_t channels = 0, frames = 0, height = 0, width = 0;
    std::uint64_t stamp = 0;
};

inline VideoTensor decode_clip(std::string_view bytes, const std::string& what, ClipHeader* header = nullptr) {
    Reader r(bytes, what);
    if (r.raw(4) != std::string_view(kClipMagic, 4)) throw DataError(what + ": not a clip file (bad magic)");
    const auto version = r.u32();
    if (version != kClipVersion) throw DataError(what + ": unsupported clip version " + std::to_string(version));
    ClipHeader h;
    h.channels = r.u32();
    h.frames = r.u32();
    h.height = r.u32();
    h.width = r.u32();
    h.stamp = r.u64();
    const std::uint64_t n = std::uint64_t{h.channels} * h.frames * h.height * h.width;
    if (r.remaining() != 4 * n) {
        throw DataError(what + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                        std::to_string(4 * n));
    }
    VideoTensor v(h.channels, h.frames, h.height, h.width);
    for (auto& f : v.data) f = r.f32();
    if (header) *header = h;
    return v;
}

inline void write_clip(const std::filesystem::path& path, const Grid4& v, std::uint64_t stamp) {
    write_atomic(path, encode_clip(v, stamp));
}

inline VideoTensor read_clip(const std::filesystem::path& path, ClipHeader* header = nullptr) {
    return decode_clip(read_file(path), path.string(), header);
}

}  // namespace seqcond::io
