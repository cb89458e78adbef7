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
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "seqcond/dit/attention.hpp"
#include "seqcond/sequence.hpp"
#include "seqcond/tensorkit/ops.hpp"
#include "seqcond/tensorkit/random.hpp"
#include "seqcond/video.hpp"

// Diffusion transformer denoiser eps_theta(z_t, t, M).
//
// Every latent pixel is one token. The trunk is shared by all conditioning
// modes:
//
//   tokens -> embed.in (+ fixed 3-D sinusoidal positions) [+ residual]
//          -> blocks x n_layers -> final -> per-token noise prediction
//
// Each block is pre-norm attention + MLP with adaptive layer-norm modulation
// (shift, scale, gate) computed from the timestep embedding. Gates start at 1
// and the output projection starts at 0, so a fresh model predicts zero noise.
//
// Modes differ only in input assembly:
//   unified_sequence  [z_t | M] over all 1 + 2T frames
//   channel_concat    [z_t | cond | M] over the T target frames
//   token_residual    [z_t | M] over the T target frames, plus
//                     embed.pose(skeleton) + embed.ref(reference) added after
//                     embed.in

namespace seqcond::dit {

enum class ConditioningMode { unified_sequence, channel_concat, token_residual };

inline std::string to_string(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::unified_sequence: return "unified_sequence";
        case ConditioningMode::channel_concat: return "channel_concat";
        case ConditioningMode::token_residual: return "token_residual";
    }
    return "?";
}

inline std::string to_string(AttentionMode m) { return m == AttentionMode::full ? "full" : "block_causal"; }

struct DiTConfig {
    std::size_t latent_channels = 48;
    std::size_t model_dim = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;
    std::size_t mlp_ratio = 4;
    std::size_t max_tokens = 4096;
    std::size_t num_timesteps = 1000;
    AttentionMode attention_mode = AttentionMode::full;
    PredictionAttention prediction_attention = PredictionAttention::causal;
    MaskStyle mask_style = MaskStyle::additive;
    ConditioningMode conditioning_mode = ConditioningMode::unified_sequence;

    std::size_t input_channels() const {
        return conditioning_mode == ConditioningMode::channel_concat ? 2 * latent_channels + 1 : latent_channels + 1;
    }

    void validate() const {
        if (model_dim != n_heads * head_dim) {
            throw ConfigError("dit: model_dim " + std::to_string(model_dim) + " != n_heads * head_dim (" +
                              std::to_string(n_heads) + " * " + std::to_string(head_dim) + ")");
        }
        if (model_dim % 8 != 0) throw ConfigError("dit: model_dim must be a multiple of 8");
        if (n_layers == 0 || mlp_ratio == 0 || latent_channels == 0) throw ConfigError("dit: empty model");
    }
};

inline const std::vector<std::string>& lora_tag_universe() {
    static const std::vector<std::string> tags{"q", "k", "v", "o", "ffn.0", "ffn.2"};
    return tags;
}

struct LoRAConfig {
    bool enabled = false;
    std::size_t rank = 128;
    double alpha = 128.0;
    std::vector<std::string> targets = lora_tag_universe();
};

/// Affine map y = x W + b with an optional low-rank adapter
/// y += (x A) B * (alpha / rank).
template <class T>
struct Linear {
    std::string tag;
    tk::Tensor<T> weight;  // [in, out]
    tk::Tensor<T> bias;    // [out], may be undefined
    tk::Tensor<T> lora_a;  // [in, r]
    tk::Tensor<T> lora_b;  // [r, out]
    T lora_scale = T(0);

    bool has_adapter() const { return lora_a.defined(); }
    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    tk::Tensor<T> operator()(const tk::Tensor<T>& x) const {
        auto y = tk::linear(x, weight, bias);
        if (has_adapter()) {
            y = tk::add(y, tk::scale(tk::matmul(tk::matmul(x, lora_a), lora_b), lora_scale));
        }
        return y;
    }
};

template <class T>
struct Block {
    Linear<T> mod;  // d -> 6d: shift1 scale1 gate1 shift2 scale2 gate2
    Linear<T> q, k, v, o;
    Linear<T> ffn0, ffn2;
};

/// Parameter handle with its checkpoint tag.
template <class T>
struct NamedParam {
    std::string tag;
    tk::Tensor<T> tensor;
};

/// Per-call geometry of a token grid: l frames of h x w latent pixels, the
/// first `context_frames` of which are context.
struct TokenGrid {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t context_frames = 0;

    std::size_t tokens() const { return frames * height * width; }
    bool operator==(const TokenGrid&) const = default;
};

/// [c, l, h, w] grid -> [l*h*w, c] tokens; token n = (f*h + y)*w + x.
template <class T>
tk::Tensor<T> to_tokens(const Grid4& g) {
    const std::size_t n = g.frames * g.plane();
    tk::Tensor<T> out({n, g.channels});
    for (std::size_t c = 0; c < g.channels; ++c) {
        const float* src = g.data.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) out[i * g.channels + c] = static_cast<T>(src[i]);
    }
    return out;
}

template <class T>
LatentSeq from_tokens(const tk::Tensor<T>& tokens, std::size_t frames, std::size_t height, std::size_t width) {
    const std::size_t n = tokens.dim(0), c = tokens.dim(1);
    if (n != frames * height * width) {
        throw ShapeError("from_tokens: " + std::to_string(n) + " tokens for a " + std::to_string(frames) + "x" +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    LatentSeq z(c, frames, height, width);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) z.data[ch * n + i] = static_cast<float>(tokens[i * c + ch]);
    return z;
}

/// Concatenates grids along channels (all must share l, h, w).
inline Grid4 concat_channels(std::initializer_list<const Grid4*> parts) {
    const Grid4& first = **parts.begin();
    std::size_t c = 0;
    for (const auto* p : parts) {
        if (p->frames != first.frames || p->height != first.height || p->width != first.width) {
            throw ShapeError("concat_channels: " + p->shape_string() + " vs " + first.shape_string());
        }
        c += p->channels;
    }
    Grid4 out(c, first.frames, first.height, first.width);
    std::size_t at = 0;
    for (const auto* p : parts) {
        std::copy(p->data.begin(), p->data.end(), out.data.begin() + at);
        at += p->data.size();
    }
    return out;
}

template <class T>
class DiT {
public:
    DiT(DiTConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const std::size_t d = cfg_.model_dim;
        Rng rng(derive_seed({init_seed, 0x5d17ULL}));
        embed_in_ = make_linear("embed.in", cfg_.input_channels(), d, rng, true);
        if (cfg_.conditioning_mode == ConditioningMode::token_residual) {
            embed_pose_ = make_linear("embed.pose", cfg_.latent_channels, d, rng, false);
            embed_ref_ = make_linear("embed.ref", cfg_.latent_channels, d, rng, false);
        }
        time0_ = make_linear("time.mlp.0", d, d, rng, true);
        time2_ = make_linear("time.mlp.2", d, d, rng, true);
        for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            Block<T> b;
            b.mod = make_linear(p + "mod", d, 6 * d, rng, true);
            zero(b.mod.weight);
            for (std::size_t j = 0; j < d; ++j) {
                b.mod.bias[2 * d + j] = T(1);  // gate1
                b.mod.bias[5 * d + j] = T(1);  // gate2
            }
            b.q = make_linear(p + "q", d, d, rng, true);
            b.k = make_linear(p + "k", d, d, rng, true);
            b.v = make_linear(p + "v", d, d, rng, true);
            b.o = make_linear(p + "o", d, d, rng, true);
            b.ffn0 = make_linear(p + "ffn.0", d, cfg_.mlp_ratio * d, rng, true);
            b.ffn2 = make_linear(p + "ffn.2", cfg_.mlp_ratio * d, d, rng, true);
            blocks_.push_back(std::move(b));
        }
        final_mod_ = make_linear("final.mod", d, 2 * d, rng, true);
        zero(final_mod_.weight);
        final_out_ = make_linear("final.out", d, cfg_.latent_channels, rng, true);
        zero(final_out_.weight);
    }

    /// Copies share parameter storage; clone() does not.
    DiT clone() const {
        DiT out = *this;
        for (auto* l : out.all_linears()) {
            for (auto* t : {&l->weight, &l->bias, &l->lora_a, &l->lora_b}) {
                if (t->defined()) {
                    const bool rg = t->requires_grad();
                    *t = t->clone();
                    t->set_requires_grad(rg);
                }
            }
        }
        return out;
    }

    const DiTConfig& config() const { return cfg_; }
    const LoRAConfig& lora_config() const { return lora_; }
    bool lora_active() const { return lora_.enabled; }

    /// Base weights in checkpoint order.
    std::vector<NamedParam<T>> base_parameters() const {
        std::vector<NamedParam<T>> out;
        auto push = [&](const Linear<T>& l) {
            if (!l.weight.defined()) return;
            out.push_back({l.tag + ".weight", l.weight});
            if (l.bias.defined()) out.push_back({l.tag + ".bias", l.bias});
        };
        push(embed_in_);
        push(embed_pose_);
        push(embed_ref_);
        push(time0_);
        push(time2_);
        for (const auto& b : blocks_) {
            for (const auto* l : {&b.mod, &b.q, &b.k, &b.v, &b.o, &b.ffn0, &b.ffn2}) push(*l);
        }
        push(final_mod_);
        push(final_out_);
        return out;
    }

    /// Adapter weights in checkpoint order (empty without LoRA).
    std::vector<NamedParam<T>> adapter_parameters() const {
        std::vector<NamedParam<T>> out;
        for (const auto& b : blocks_) {
            for (const auto* l : {&b.q, &b.k, &b.v, &b.o, &b.ffn0, &b.ffn2}) {
                if (l->has_adapter()) {
                    out.push_back({l->tag + ".lora_a", l->lora_a});
                    out.push_back({l->tag + ".lora_b", l->lora_b});
                }
            }
        }
        return out;
    }

    /// The parameters an optimizer should update: adapters under LoRA tuning,
    /// base weights otherwise.
    std::vector<tk::Tensor<T>> trainable_parameters() const {
        std::vector<tk::Tensor<T>> out;
        for (auto& p : lora_.enabled ? adapter_parameters() : base_parameters()) out.push_back(p.tensor);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : base_parameters()) n += p.tensor.numel();
        return n;
    }

    /// Parameter count excluding the mode-specific input encoders.
    std::size_t trunk_parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : base_parameters()) {
            if (p.tag.rfind("embed.", 0) != 0) n += p.tensor.numel();
        }
        return n;
    }

    /// Attaches zero-initialized adapters to the tagged projections of every
    /// block and freezes the base weights.
    void apply_lora(const LoRAConfig& lcfg, std::uint64_t seed) {
        if (lora_.enabled) throw ConfigError("apply_lora: adapters already attached");
        if (lcfg.rank < 1) throw ConfigError("apply_lora: rank must be >= 1");
        const auto& universe = lora_tag_universe();
        for (const auto& t : lcfg.targets) {
            if (std::find(universe.begin(), universe.end(), t) == universe.end()) {
                throw ConfigError("apply_lora: unknown target module tag '" + t + "'");
            }
        }
        Rng rng(derive_seed({seed, 0x10aaULL}));
        const T s = static_cast<T>(lcfg.alpha / static_cast<double>(lcfg.rank));
        for (auto& b : blocks_) {
            for (const auto& t : lcfg.targets) {
                Linear<T>& l = by_tag(b, t);
                const std::size_t in = l.in_features(), out = l.out_features();
                const double bound = 1.0 / std::sqrt(static_cast<double>(in));
                l.lora_a = tk::Tensor<T>({in, lcfg.rank});
                for (auto& v : l.lora_a.data()) v = static_cast<T>(rng.uniform(-bound, bound));
                l.lora_b = tk::Tensor<T>({lcfg.rank, out});
                l.lora_scale = s;
                l.lora_a.set_requires_grad(true);
                l.lora_b.set_requires_grad(true);
            }
        }
        for (auto& p : base_parameters()) p.tensor.set_requires_grad(false);
        lora_ = lcfg;
        lora_.enabled = true;
    }

    /// Folds A B (alpha / rank) into the base weights and drops the adapters.
    void merge_lora() {
        if (!lora_.enabled) return;
        for (auto& b : blocks_) {
            for (auto* l : {&b.q, &b.k, &b.v, &b.o, &b.ffn0, &b.ffn2}) {
                if (!l->has_adapter()) continue;
                const auto delta = tk::matmul(l->lora_a.detach(), l->lora_b.detach());
                for (std::size_t i = 0; i < l->weight.numel(); ++i) l->weight[i] += delta[i] * l->lora_scale;
                l->lora_a = {};
                l->lora_b = {};
                l->lora_scale = T(0);
            }
        }
        for (auto& p : base_parameters()) p.tensor.set_requires_grad(true);
        lora_ = LoRAConfig{};
    }

    void set_trainable(bool on) {
        for (auto& p : lora_.enabled ? adapter_parameters() : base_parameters()) p.tensor.set_requires_grad(on);
    }

    /// Sinusoidal embedding of t followed by a 2-layer MLP; returns [1, d].
    tk::Tensor<T> timestep_embed(std::size_t t) const {
        if (t >= cfg_.num_timesteps) {
            throw ConfigError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(cfg_.num_timesteps) +
                              ")");
        }
        const std::size_t d = cfg_.model_dim, half = d / 2;
        tk::Tensor<T> freq({1, d});
        for (std::size_t i = 0; i < half; ++i) {
            const double w = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            freq[i] = static_cast<T>(std::cos(static_cast<double>(t) * w));
            freq[half + i] = static_cast<T>(std::sin(static_cast<double>(t) * w));
        }
        return time2_(tk::gelu(time0_(freq)));
    }

    /// Fixed 3-D factorized sinusoidal positions, [tokens, d]. The width is
    /// split into a frame part (d/4, even) and equal row and column parts;
    /// each part uses frequencies 100^(-i / (n/2)).
    tk::Tensor<T> positions(const TokenGrid& grid) const {
        const std::size_t d = cfg_.model_dim;
        const std::size_t dt = (d / 8) * 2;
        const std::size_t dh = (d - dt) / 2;
        const std::size_t dw = d - dt - dh;
        tk::Tensor<T> pe({grid.tokens(), d});
        auto fill = [&](std::size_t token, std::size_t offset, std::size_t width, std::size_t pos) {
            const std::size_t half = width / 2;
            for (std::size_t i = 0; i < half; ++i) {
                const double w = std::pow(100.0, -static_cast<double>(i) / static_cast<double>(half));
                pe[token * d + offset + 2 * i] = static_cast<T>(std::sin(static_cast<double>(pos) * w));
                pe[token * d + offset + 2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(pos) * w));
            }
        };
        for (std::size_t f = 0; f < grid.frames; ++f)
            for (std::size_t y = 0; y < grid.height; ++y)
                for (std::size_t x = 0; x < grid.width; ++x) {
                    const std::size_t n = (f * grid.height + y) * grid.width + x;
                    fill(n, 0, dt, f);
                    fill(n, dt, dh, y);
                    fill(n, dt + dh, dw, x);
                }
        return pe;
    }

    AttentionMask attention_mask(const TokenGrid& grid) const {
        std::vector<std::size_t> frame_of(grid.tokens());
        for (std::size_t n = 0; n < frame_of.size(); ++n) frame_of[n] = n / (grid.height * grid.width);
        return build_attention_mask(frame_of, grid.context_frames, cfg_.attention_mode, cfg_.prediction_attention);
    }

    /// Trunk forward on assembled input tokens [N, input_channels]. `residual`
    /// ([N, d], optional) is added right after the input embedding.
    tk::Tensor<T> forward_tokens(const tk::Tensor<T>& input, const TokenGrid& grid, std::size_t t,
                                 const tk::Tensor<T>& residual = {}) const {
        const std::size_t n = grid.tokens();
        if (n > cfg_.max_tokens) {
            throw ConfigError("dit: " + std::to_string(n) + " tokens exceed the configured maximum " +
                              std::to_string(cfg_.max_tokens));
        }
        if (input.rank() != 2 || input.dim(0) != n || input.dim(1) != cfg_.input_channels()) {
            throw ShapeError("dit: input tokens " + tk::to_string(input.shape()) + ", expected [" + std::to_string(n) +
                             "," + std::to_string(cfg_.input_channels()) + "]");
        }
        const std::size_t d = cfg_.model_dim;
        const T eps = T(1e-6);
        const AttentionMask mask = attention_mask(grid);

        auto h = tk::add(embed_in_(input), positions(grid));
        if (residual.defined()) {
            if (residual.rank() != 2 || residual.dim(0) != n || residual.dim(1) != d) {
                throw ShapeError("dit: residual " + tk::to_string(residual.shape()) + " does not match " +
                                 std::to_string(n) + " target tokens");
            }
            h = tk::add(h, residual);
        }
        const auto cond = tk::gelu(timestep_embed(t));
        auto chunk = [&](const tk::Tensor<T>& mod, std::size_t i) {
            return tk::reshape(tk::slice_last(mod, i * d, d), {d});
        };
        auto modulate = [&](const tk::Tensor<T>& x, const tk::Tensor<T>& shift, const tk::Tensor<T>& scl) {
            return tk::add(tk::mul(tk::layer_norm(x, {}, {}, eps), tk::affine_scalar(scl, T(1), T(1))), shift);
        };
        for (const auto& b : blocks_) {
            const auto mod = b.mod(cond);
            const auto a = modulate(h, chunk(mod, 0), chunk(mod, 1));
            const auto att = attention(b.q(a), b.k(a), b.v(a), cfg_.n_heads, mask, cfg_.mask_style);
            h = tk::add(h, tk::mul(b.o(att), chunk(mod, 2)));
            const auto m = modulate(h, chunk(mod, 3), chunk(mod, 4));
            h = tk::add(h, tk::mul(b.ffn2(tk::gelu(b.ffn0(m))), chunk(mod, 5)));
        }
        const auto fmod = final_mod_(cond);
        return final_out_(modulate(h, chunk(fmod, 0), chunk(fmod, 1)));
    }

    // ---- conditioning-mode entry points ------------------------------------

    /// Unified sequence: z_t over all 1 + 2T frames with the mask as an extra
    /// channel. Returns [N, c] noise predictions for every token.
    tk::Tensor<T> epsilon_tokens(const LatentSeq& z_t, std::size_t t, const Grid4& latent_mask) const {
        require_mode(ConditioningMode::unified_sequence);
        check_latent(z_t);
        if (latent_mask.channels != 1 || latent_mask.frames != z_t.frames || latent_mask.height != z_t.height ||
            latent_mask.width != z_t.width) {
            throw ShapeError("epsilon_theta: mask " + latent_mask.shape_string() + " does not match latent " +
                             z_t.shape_string());
        }
        std::size_t ctx = 0;
        while (ctx < latent_mask.frames && latent_mask.at(0, ctx, 0, 0) != 0.0f) ++ctx;
        const TokenGrid grid{z_t.frames, z_t.height, z_t.width, ctx};
        return forward_tokens(to_tokens<T>(concat_channels({&z_t, &latent_mask})), grid, t);
    }

    LatentSeq epsilon_theta(const LatentSeq& z_t, std::size_t t, const Grid4& latent_mask) const {
        return from_tokens(epsilon_tokens(z_t, t, latent_mask), z_t.frames, z_t.height, z_t.width);
    }

    /// Channel concatenation: z_t (T target frames) | condition | zero mask.
    tk::Tensor<T> channel_concat_tokens(const LatentSeq& z_t, const LatentSeq& condition, std::size_t t) const {
        require_mode(ConditioningMode::channel_concat);
        check_latent(z_t);
        if (!condition.same_shape(z_t)) {
            throw ShapeError("channel_concat: condition " + condition.shape_string() + " does not match latent " +
                             z_t.shape_string());
        }
        const Grid4 mask(1, z_t.frames, z_t.height, z_t.width, 0.0f);
        const TokenGrid grid{z_t.frames, z_t.height, z_t.width, 0};
        return forward_tokens(to_tokens<T>(concat_channels({&z_t, &condition, &mask})), grid, t);
    }

    LatentSeq forward_channel_concat(const LatentSeq& z_t, const LatentSeq& condition, std::size_t t) const {
        return from_tokens(channel_concat_tokens(z_t, condition, t), z_t.frames, z_t.height, z_t.width);
    }

    /// Token residual: condition embeddings [N, d] are added to the target
    /// tokens after the input embedding.
    tk::Tensor<T> token_residual_tokens(const LatentSeq& z_t, const tk::Tensor<T>& condition_embedding,
                                        std::size_t t) const {
        require_mode(ConditioningMode::token_residual);
        check_latent(z_t);
        const Grid4 mask(1, z_t.frames, z_t.height, z_t.width, 0.0f);
        const TokenGrid grid{z_t.frames, z_t.height, z_t.width, 0};
        return forward_tokens(to_tokens<T>(concat_channels({&z_t, &mask})), grid, t, condition_embedding);
    }

    LatentSeq forward_token_residual(const LatentSeq& z_t, const tk::Tensor<T>& condition_embedding,
                                     std::size_t t) const {
        return from_tokens(token_residual_tokens(z_t, condition_embedding, t), z_t.frames, z_t.height, z_t.width);
    }

    /// Dedicated encoders of the token-residual mode: embed.pose applied to
    /// each skeleton latent frame plus embed.ref applied to the reference
    /// latent at the same spatial position. Returns [T*h*w, d].
    tk::Tensor<T> condition_embedding(const LatentSeq& skeletons, const LatentSeq& reference) const {
        require_mode(ConditioningMode::token_residual);
        check_latent(skeletons);
        check_latent(reference);
        if (reference.frames != 1 || reference.height != skeletons.height || reference.width != skeletons.width) {
            throw ShapeError("condition_embedding: reference " + reference.shape_string() + " vs skeletons " +
                             skeletons.shape_string());
        }
        LatentSeq ref_rep(reference.channels, skeletons.frames, reference.height, reference.width);
        for (std::size_t c = 0; c < reference.channels; ++c)
            for (std::size_t f = 0; f < skeletons.frames; ++f)
                for (std::size_t i = 0; i < reference.plane(); ++i)
                    ref_rep.data[ref_rep.index(c, f, 0, 0) + i] = reference.data[reference.index(c, 0, 0, 0) + i];
        return tk::add(embed_pose_(to_tokens<T>(skeletons)), embed_ref_(to_tokens<T>(ref_rep)));
    }

    /// Overwrites a named base parameter; used by checkpoint loading.
    Linear<T>* find_linear(const std::string& tag) {
        for (auto* l : all_linears()) {
            if (l->tag == tag) return l;
        }
        return nullptr;
    }

    std::vector<Linear<T>*> all_linears() {
        std::vector<Linear<T>*> out{&embed_in_, &embed_pose_, &embed_ref_, &time0_, &time2_};
        for (auto& b : blocks_) {
            for (auto* l : {&b.mod, &b.q, &b.k, &b.v, &b.o, &b.ffn0, &b.ffn2}) out.push_back(l);
        }
        out.push_back(&final_mod_);
        out.push_back(&final_out_);
        out.erase(std::remove_if(out.begin(), out.end(), [](auto* l) { return !l->weight.defined(); }), out.end());
        return out;
    }

private:
    static void zero(tk::Tensor<T>& t) {
        for (auto& v : t.data()) v = T(0);
    }

    static Linear<T> make_linear(std::string tag, std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
        Linear<T> l;
        l.tag = std::move(tag);
        l.weight = tk::Tensor<T>({in, out});
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));  // Xavier uniform
        for (auto& v : l.weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        l.weight.set_requires_grad(true);
        if (with_bias) {
            l.bias = tk::Tensor<T>({out});
            l.bias.set_requires_grad(true);
        }
        return l;
    }

    static Linear<T>& by_tag(Block<T>& b, const std::string& t) {
        if (t == "q") return b.q;
        if (t == "k") return b.k;
        if (t == "v") return b.v;
        if (t == "o") return b.o;
        if (t == "ffn.0") return b.ffn0;
        if (t == "ffn.2") return b.ffn2;
        throw ConfigError("unknown target module tag '" + t + "'");
    }

    void require_mode(ConditioningMode m) const {
        if (cfg_.conditioning_mode != m) {
            throw ConfigError("dit: model configured for " + to_string(cfg_.conditioning_mode) + ", called as " +
                              to_string(m));
        }
    }

    void check_latent(const Grid4& z) const {
        if (z.channels != cfg_.latent_channels) {
            throw ShapeError("dit: latent has " + std::to_string(z.channels) + " channels, model expects " +
                             std::to_string(cfg_.latent_channels));
        }
    }

    DiTConfig cfg_;
    LoRAConfig lora_;
    Linear<T> embed_in_, embed_pose_, embed_ref_;
    Linear<T> time0_, time2_;
    std::vector<Block<T>> blocks_;
    Linear<T> final_mod_, final_out_;

};

}  // namespace seqcond::dit
