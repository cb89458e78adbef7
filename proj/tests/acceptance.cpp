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

// Acceptance runner. Prints one PASS/FAIL line per criterion.
//
//   acceptance --core                 criteria 1-7 and 11 (minutes)
//   acceptance --desk --work DIR      criteria 8-10 (trains 18 desk-scale models)
//
// Exit status is 0 only when every selected criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "seqcond/cli/commands.hpp"
#include "seqcond/diffusion.hpp"
#include "seqcond/dit/model.hpp"
#include "seqcond/latent_codec.hpp"
#include "seqcond/metrics.hpp"
#include "seqcond/tensorkit/adamw.hpp"
#include "support.hpp"

namespace seqcond::acceptance {
namespace {

namespace fs = std::filesystem;
using testing::check_gradients;
using testing::probe_loss;
using testing::random_grid;
using testing::random_tensor;
using Clock = std::chrono::steady_clock;

// Frozen thresholds of the desk-scale overfit run.
constexpr double kTrainSsim = 0.85;
constexpr double kHeldOutSsim = 0.60;
constexpr std::uint64_t kDeskSeeds[] = {42, 43, 44};

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool report(int id, const std::string& name, Outcome& o, Clock::time_point t0) {
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << "  ("
              << std::fixed << std::setprecision(1) << seconds_since(t0) << " s) " << o.detail.str() << "\n"
              << std::flush;
    return o.pass;
}

bool bit_equal(const Grid4& a, const Grid4& b) {
    return a.same_shape(b) && std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

Grid4 frame_mask(std::size_t l, std::size_t ctx, std::size_t h, std::size_t w) {
    Grid4 m(1, l, h, w);
    for (std::size_t i = 0; i < ctx * h * w; ++i) m.data[i] = 1.0f;
    return m;
}

Grid4 random_mask(std::size_t l, std::size_t h, std::size_t w, Rng& rng) {
    Grid4 m(1, l, h, w);
    for (auto& v : m.data) v = rng.below(2) ? 1.0f : 0.0f;
    m.data[rng.below(m.size())] = 0.0f;
    return m;
}

dit::DiTConfig tiny_dit(dit::ConditioningMode mode) {
    dit::DiTConfig c;
    c.latent_channels = 6;
    c.model_dim = 16;
    c.n_heads = 2;
    c.head_dim = 8;
    c.n_layers = 1;
    c.mlp_ratio = 2;
    c.num_timesteps = 100;
    c.conditioning_mode = mode;
    return c;
}

template <class T>
void jitter(dit::DiT<T>& m, Rng& rng, double s = 0.2) {
    for (auto& p : m.base_parameters())
        for (auto& v : p.tensor.data()) v += static_cast<T>(s * rng.normal());
}

// ---- 1: gradients ----------------------------------------------------------------------------

bool criterion_gradients() {
    const auto t0 = Clock::now();
    Outcome o;
    double worst = 0.0;
    auto check = [&](const std::string& what, const testing::GradCheck& r) {
        worst = std::max(worst, r.max_rel);
        o.require(r.max_rel < 1e-4, what + " rel " + std::to_string(r.max_rel));
    };
    using tk::Tensor;
    for (std::uint64_t seed : {11u, 22u, 33u}) {
        Rng rng(seed);
        auto a = random_tensor<double>({3, 4}, rng);
        auto b = random_tensor<double>({3, 4}, rng);
        auto row = random_tensor<double>({4}, rng);
        check("add", check_gradients([&] { return probe_loss(tk::add(a, b), seed); }, {a, b}));
        check("sub", check_gradients([&] { return probe_loss(tk::sub(a, row), seed); }, {a, row}));
        check("mul", check_gradients([&] { return probe_loss(tk::mul(row, a), seed); }, {a, row}));
        check("affine", check_gradients([&] { return probe_loss(tk::affine_scalar(a, 1.7, -0.3), seed); }, {a}));
        check("scale", check_gradients([&] { return probe_loss(tk::scale(a, -0.6), seed); }, {a}));
        check("gelu", check_gradients([&] { return probe_loss(tk::gelu(a), seed); }, {a}));
        check("sum", check_gradients([&] { return tk::sum(tk::mul(a, b)); }, {a, b}));
        check("mean", check_gradients([&] { return tk::mean(tk::mul(a, a)); }, {a}));

        auto x = random_tensor<double>({5, 4}, rng);
        auto w = random_tensor<double>({4, 3}, rng);
        auto bias = random_tensor<double>({3}, rng);
        check("matmul", check_gradients([&] { return probe_loss(tk::matmul(x, w), seed); }, {x, w}));
        check("linear", check_gradients([&] { return probe_loss(tk::linear(x, w, bias), seed); }, {x, w, bias}));

        auto s = random_tensor<double>({3, 4, 2}, rng, 2.0);
        for (std::size_t axis = 0; axis < 3; ++axis)
            check("softmax", check_gradients([&] { return probe_loss(tk::softmax(s, axis), seed + axis); }, {s}));

        auto g = random_tensor<double>({4}, rng);
        auto gb = random_tensor<double>({4}, rng);
        check("layer_norm",
              check_gradients([&] { return probe_loss(tk::layer_norm(x, g, gb, 1e-5), seed); }, {x, g, gb}));
        check("reshape", check_gradients([&] { return probe_loss(tk::reshape(x, {4, 5}), seed); }, {x}));
        check("slice_last", check_gradients([&] { return probe_loss(tk::slice_last(x, 1, 2), seed); }, {x}));
        auto x2 = random_tensor<double>({5, 2}, rng);
        check("concat_last", check_gradients([&] { return probe_loss(tk::concat_last(x, x2), seed); }, {x, x2}));

        // attention
        const std::size_t n = 7;
        auto q = random_tensor<double>({n, 6}, rng);
        auto k = random_tensor<double>({n, 6}, rng);
        auto v = random_tensor<double>({n, 6}, rng);
        std::vector<std::size_t> frames(n);
        for (std::size_t i = 0; i < n; ++i) frames[i] = i * 4 / n;
        const auto mask = dit::build_attention_mask(frames, 1, dit::AttentionMode::block_causal);
        for (auto style : {dit::MaskStyle::additive, dit::MaskStyle::multiplicative_literal})
            check("attention",
                  check_gradients([&] { return probe_loss(dit::attention(q, k, v, 2, mask, style), seed); }, {q, k, v}));

        // masked loss
        auto pred = random_tensor<double>({12, 3}, rng);
        const auto target = random_tensor<double>({12, 3}, rng, 1.0, false);
        const auto lm = frame_mask(3, 1, 2, 2);
        for (auto region : {diffusion::LossRegion::target_only, diffusion::LossRegion::all_frames})
            check("masked_loss", check_gradients([&] { return diffusion::masked_loss(pred, target, lm, region); }, {pred}));

        // the full toy DiT under each conditioning mode
        for (auto mode : {dit::ConditioningMode::unified_sequence, dit::ConditioningMode::channel_concat,
                          dit::ConditioningMode::token_residual}) {
            dit::DiT<double> m(tiny_dit(mode), seed);
            jitter(m, rng);
            const bool unified = mode == dit::ConditioningMode::unified_sequence;
            const auto z = random_grid<LatentSeq>(6, unified ? 5 : 2, 2, 2, rng, -1.0, 1.0);
            const auto cond = random_grid<LatentSeq>(6, 2, 2, 2, rng);
            const auto ref = random_grid<LatentSeq>(6, 1, 2, 2, rng);
            const auto mk = unified ? frame_mask(5, 3, 2, 2) : Grid4(1, 2, 2, 2, 0.0f);
            const auto tgt = dit::to_tokens<double>(random_grid<LatentSeq>(6, z.frames, 2, 2, rng));
            auto loss = [&] {
                tk::Tensor<double> p;
                if (unified) p = m.epsilon_tokens(z, 37, mk);
                else if (mode == dit::ConditioningMode::channel_concat) p = m.channel_concat_tokens(z, cond, 37);
                else p = m.token_residual_tokens(z, m.condition_embedding(cond, ref), 37);
                return diffusion::masked_loss(p, tgt, mk, diffusion::LossRegion::target_only);
            };
            std::vector<tk::Tensor<double>> params;
            for (auto& p : m.base_parameters()) params.push_back(p.tensor);
            check("dit " + dit::to_string(mode), check_gradients(loss, params, 1e-5, 24));
        }
    }
    o.detail << (o.pass ? "" : " | ") << "max rel " << std::scientific << std::setprecision(2) << worst;
    const double secs = seconds_since(t0);
    o.require(secs < 120.0, "runtime " + std::to_string(secs) + " s");
    return report(1, "gradient suite", o, t0);
}

// ---- 2: mask semantics ---------------------------------------------------------------------------

bool criterion_mask_semantics() {
    const auto t0 = Clock::now();
    Outcome o;
    const auto s = diffusion::make_schedule();
    Rng rng(2);
    std::size_t noise_bad = 0, loss_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = 1 + rng.below(4), h = 1 + rng.below(3), w = 1 + rng.below(3), c = 1 + rng.below(4);
        const auto z0 = random_grid<LatentSeq>(c, l, h, w, rng, -2.0, 2.0);
        const auto eps = random_grid<LatentSeq>(c, l, h, w, rng, -3.0, 3.0);
        const auto mask = random_mask(l, h, w, rng);
        const auto zt = diffusion::add_noise_selective(z0, eps, rng.below(s.size()), mask, s);
        bool ok = true;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < l * h * w; ++i) {
                const std::size_t k = ch * l * h * w + i;
                if (mask.data[i] != 0.0f && std::memcmp(&zt.data[k], &z0.data[k], sizeof(float)) != 0) ok = false;
            }
        noise_bad += !ok;

        const auto target = dit::to_tokens<float>(random_grid<LatentSeq>(c, l, h, w, rng));
        auto pred = dit::to_tokens<float>(random_grid<LatentSeq>(c, l, h, w, rng));
        const float a = diffusion::masked_loss(pred, target, mask, diffusion::LossRegion::target_only).item();
        for (std::size_t n = 0; n < l * h * w; ++n)
            if (mask.data[n] != 0.0f)
                for (std::size_t j = 0; j < c; ++j) pred[n * c + j] += static_cast<float>(100.0 * rng.normal());
        const float b = diffusion::masked_loss(pred, target, mask, diffusion::LossRegion::target_only).item();
        loss_bad += (a - b) != 0.0f;
    }
    o.require(noise_bad == 0, std::to_string(noise_bad) + " trials changed context latents");
    o.require(loss_bad == 0, std::to_string(loss_bad) + " trials changed the loss");
    o.require(seconds_since(t0) < 60.0, "runtime over 1 min");
    if (o.pass) o.detail << "1000 trials, context bit-equal, zero loss delta";
    return report(2, "mask semantics", o, t0);
}

// ---- 3: sampler oracle -------------------------------------------------------------------------------

bool criterion_sampler_oracle() {
    const auto t0 = Clock::now();
    Outcome o;
    const auto s = diffusion::make_schedule();
    Rng rng(3);
    double worst = 0.0;
    // Latents of real pixel clips: 3 context frames and 2 targets, 8x8 pixels.
    const codec::CodecConfig cc{4, 1, 3};
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = random_grid<VideoTensor>(3, 5, 8, 8, rng);
        const auto z0 = codec::encode(x, cc);
        const auto mask = frame_mask(5, 3, z0.height, z0.width);
        const diffusion::NoisePredictor oracle = [&](const LatentSeq& z, std::size_t t) {
            const double ab = s.at(t);
            LatentSeq e = z;
            for (std::size_t i = 0; i < e.size(); ++i)
                e.data[i] = static_cast<float>((z.data[i] - std::sqrt(ab) * z0.data[i]) / std::sqrt(1.0 - ab));
            return e;
        };
        diffusion::SamplerConfig cfg;
        cfg.clip_x0 = false;
        const auto out = diffusion::sample(oracle, z0, mask, s, cfg, 100 + trial);
        for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(double(out.data[i]) - z0.data[i]));
        const auto dec = codec::decode(out, cc);
        bool frames_equal = true;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t f = 0; f < 3; ++f)
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t xx = 0; xx < 8; ++xx) {
                        const float a = dec.at(c, f, y, xx), b = x.at(c, f, y, xx);
                        frames_equal = frames_equal && std::memcmp(&a, &b, sizeof(float)) == 0;
                    }
        o.require(frames_equal, "decoded context frames differ");
    }
    o.require(worst < 1e-4, "max abs error " + std::to_string(worst));
    o.require(seconds_since(t0) < 60.0, "runtime over 1 min");
    o.detail << (o.pass ? "" : " | ") << "50 steps, max abs error " << std::scientific << std::setprecision(2) << worst;
    return report(3, "sampler oracle", o, t0);
}

// ---- 4: codec --------------------------------------------------------------------------------------

bool criterion_codec() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(4);
    for (const codec::CodecConfig& cfg : {codec::CodecConfig{4, 1, 3}, codec::CodecConfig{2, 2, 3}}) {
        const auto x = random_grid<VideoTensor>(3, 4, 32, 32, rng, -5.0, 5.0);
        o.require(bit_equal(codec::decode(codec::encode(x, cfg), cfg), x), "decode(encode(x)) != x");
    }
    const codec::TileSpec spec;
    o.require(spec.tile_h == 34 && spec.tile_w == 34 && spec.stride_h == 18 && spec.stride_w == 16,
              "default tile geometry");
    double diff = 0.0;
    for (auto [h, w] : {std::pair{32, 32}, std::pair{64, 96}, std::pair{80, 52}}) {
        const auto x = random_grid<VideoTensor>(3, 2, h, w, rng);
        const auto a = codec::encode_tiled(x, {4, 1, 3}, spec), b = codec::encode(x, {4, 1, 3});
        for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, double(std::abs(a.data[i] - b.data[i])));
        o.require(bit_equal(a, b), "tiled encode differs at " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (o.pass) o.detail << "round trip bit-exact, tiled max abs diff " << diff;
    return report(4, "codec and tiling", o, t0);
}

// ---- 5: attention ------------------------------------------------------------------------------------

bool criterion_attention() {
    const auto t0 = Clock::now();
    Outcome o;
    double worst = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        Rng rng(seed);
        const std::size_t n = 12, heads = 2, dk = 4, d = heads * dk;
        const auto q = random_tensor<double>({n, d}, rng, 1.5, false);
        const auto k = random_tensor<double>({n, d}, rng, 1.5, false);
        const auto v = random_tensor<double>({n, d}, rng, 1.0, false);
        std::vector<std::size_t> frames(n);
        for (auto& f : frames) f = rng.below(5);
        std::sort(frames.begin(), frames.end());
        const auto mask = dit::build_attention_mask(frames, 1 + rng.below(3), dit::AttentionMode::block_causal);
        std::vector<double> wts;
        dit::attention(q, k, v, heads, mask, dit::MaskStyle::additive, &wts);
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < n; ++i) {
                // Brute-force softmax over the allowed keys of row i.
                std::vector<double> ref(n, 0.0);
                double mx = -INFINITY, z = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (!mask.allows(i, j)) continue;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dk; ++c) dot += q[i * d + h * dk + c] * k[j * d + h * dk + c];
                    ref[j] = dot / std::sqrt(double(dk));
                    mx = std::max(mx, ref[j]);
                }
                for (std::size_t j = 0; j < n; ++j)
                    if (mask.allows(i, j)) z += (ref[j] = std::exp(ref[j] - mx));
                for (std::size_t j = 0; j < n; ++j) {
                    const double want = mask.allows(i, j) ? ref[j] / z : 0.0;
                    const double got = wts[(h * n + i) * n + j];
                    if (!mask.allows(i, j) && got != 0.0) o.require(false, "forbidden weight nonzero");
                    worst = std::max(worst, std::abs(got - want));
                }
            }
        const auto qf = random_tensor<float>({n, d}, rng, 1.0, false);
        const auto kf = random_tensor<float>({n, d}, rng, 1.0, false);
        const auto vf = random_tensor<float>({n, d}, rng, 1.0, false);
        const dit::AttentionMask open{n, std::vector<std::uint8_t>(n * n, 1)};  // additive form is all zeros
        const auto a = dit::attention(qf, kf, vf, 2, dit::full_mask(n));
        const auto b = dit::attention(qf, kf, vf, 2, open);
        o.require(std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0, "zero mask differs from unmasked");
    }
    o.require(worst < 1e-6, "row error " + std::to_string(worst));
    o.detail << (o.pass ? "" : " | ") << "max row error " << std::scientific << std::setprecision(2) << worst;
    return report(5, "attention masking", o, t0);
}

// ---- 6: LoRA ---------------------------------------------------------------------------------------

bool criterion_lora() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(6);
    auto cfg = tiny_dit(dit::ConditioningMode::unified_sequence);
    cfg.n_layers = 2;
    dit::LoRAConfig l;
    l.enabled = true;
    l.rank = 4;
    l.alpha = 8.0;
    o.require(l.targets == std::vector<std::string>{"q", "k", "v", "o", "ffn.0", "ffn.2"}, "default targets");
    const auto mask = frame_mask(5, 3, 2, 2);

    dit::DiT<float> base(cfg, 9);
    jitter(base, rng);
    auto adapted = base.clone();
    adapted.apply_lora(l, 3);
    const auto z = random_grid<LatentSeq>(6, 5, 2, 2, rng);
    const auto a = base.epsilon_theta(z, 20, mask), b = adapted.epsilon_theta(z, 20, mask);
    o.require(bit_equal(a, b), "zero-init adapters changed outputs");

    for (auto& p : adapted.adapter_parameters())
        for (auto& v : p.tensor.data()) v = static_cast<float>(0.1 * rng.normal());
    const auto before_merge = adapted.epsilon_theta(z, 33, mask);
    auto merged = adapted.clone();
    merged.merge_lora();
    const auto after_merge = merged.epsilon_theta(z, 33, mask);
    double merge_err = 0.0;
    for (std::size_t i = 0; i < after_merge.size(); ++i)
        merge_err = std::max(merge_err, std::abs(double(after_merge.data[i]) - before_merge.data[i]));
    o.require(merge_err < 1e-5, "merge error " + std::to_string(merge_err));

    auto hash = [](const dit::DiT<float>& m) {
        std::string bytes;
        for (const auto& p : m.base_parameters())
            bytes.append(reinterpret_cast<const char*>(p.tensor.ptr()), p.tensor.numel() * sizeof(float));
        return io::fnv1a(bytes);
    };
    auto trained = base.clone();
    trained.apply_lora(l, 4);
    const auto h0 = hash(trained);
    auto params = trained.trainable_parameters();
    auto opt = tk::make_adamw_state(params, tk::AdamWConfig{1e-2});
    for (int step = 0; step < 5; ++step) {
        const auto zt = random_grid<LatentSeq>(6, 5, 2, 2, rng);
        const auto target = dit::to_tokens<float>(random_grid<LatentSeq>(6, 5, 2, 2, rng));
        tk::GradTape<float> tape;
        tk::Tensor<float> loss;
        {
            tk::GradTape<float>::Recording rec(tape);
            loss = diffusion::masked_loss(trained.epsilon_tokens(zt, 5, mask), target, mask,
                                          diffusion::LossRegion::target_only);
        }
        tape.backward(loss);
        tk::adamw_step(params, opt);
        for (auto& p : params) p.zero_grad();
    }
    o.require(hash(trained) == h0, "base weights changed during LoRA training");
    double moved = 0.0;
    for (const auto& p : trained.adapter_parameters())
        for (auto v : p.tensor.data()) moved += std::abs(v);
    o.require(moved > 0.0, "adapters did not train");
    o.detail << (o.pass ? "" : " | ") << "merge error " << std::scientific << std::setprecision(2) << merge_err;
    return report(6, "LoRA contract", o, t0);
}

// ---- 7: metrics -----------------------------------------------------------------------------------

double ssim_brute(const Grid4& a, const Grid4& b) {
    const int H = int(a.height), W = int(a.width);
    double frames = 0.0;
    for (std::size_t f = 0; f < a.frames; ++f) {
        double chans = 0.0;
        for (std::size_t c = 0; c < a.channels; ++c) {
            double acc = 0.0;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double ws = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                    for (int dy = -5; dy <= 5; ++dy)
                        for (int dx = -5; dx <= 5; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
                            const double w = std::exp(-(dx * dx + dy * dy) / 4.5);
                            const double p = a.at(c, f, yy, xx), q = b.at(c, f, yy, xx);
                            ws += w, mx += w * p, my += w * q;
                            sxx += w * p * p, syy += w * q * q, sxy += w * p * q;
                        }
                    mx /= ws, my /= ws;
                    const double vx = sxx / ws - mx * mx, vy = syy / ws - my * my, cv = sxy / ws - mx * my;
                    acc += (2 * mx * my + 1e-4) * (2 * cv + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                }
            chans += acc / (H * W);
        }
        frames += chans / double(a.channels);
    }
    return frames / double(a.frames);
}

double psnr_brute(const Grid4& a, const Grid4& b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (double(a.data[i]) - b.data[i]) * (double(a.data[i]) - b.data[i]);
    const double mse = se / double(a.size());
    return std::min(metrics::kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

bool criterion_metrics() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(7);
    double ssim_err = 0.0, psnr_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_grid<Grid4>(3, 2, 8, 8, rng);
        auto b = a;
        for (auto& v : b.data) v = std::clamp(v + float(0.2 * rng.normal()), 0.0f, 1.0f);
        ssim_err = std::max(ssim_err, std::abs(metrics::ssim(a, b) - ssim_brute(a, b)));
        psnr_err = std::max(psnr_err, std::abs(metrics::psnr(a, b) - psnr_brute(a, b)));
        o.require(std::abs(metrics::ssim(a, a) - 1.0) < 1e-12, "ssim(x,x) != 1");
    }
    o.require(ssim_err < 1e-6, "ssim error " + std::to_string(ssim_err));
    o.require(psnr_err < 1e-6, "psnr error " + std::to_string(psnr_err));
    const Grid4 zero(3, 1, 8, 8, 0.0f);
    o.require(metrics::psnr_from_mse(0.01) == 20.0, "psnr(mse 0.01) != 20");
    o.require(metrics::psnr(zero, Grid4(3, 1, 8, 8, 1.0f)) == 0.0, "psnr(mse 1) != 0");
    o.require(metrics::psnr(zero, zero) == metrics::kPsnrCap, "psnr(x,x) not capped");
    auto g1 = [](double m, double v) {
        metrics::Gaussian g;
        g.mean = Eigen::VectorXd::Constant(1, m);
        g.cov = Eigen::MatrixXd::Constant(1, 1, v);
        return g;
    };
    // (m1 - m2)^2 + (s1 - s2)^2 in one dimension.
    for (auto [m1, v1, m2, v2] : {std::array{0.0, 1.0, 1.0, 1.0}, std::array{0.0, 1.0, 0.0, 4.0},
                                   std::array{2.0, 9.0, -1.0, 1.0}, std::array{0.5, 0.25, 0.5, 0.25}}) {
        const double want = (m1 - m2) * (m1 - m2) + std::pow(std::sqrt(v1) - std::sqrt(v2), 2);
        const double got = metrics::frechet_distance(g1(m1, v1), g1(m2, v2));
        o.require(std::abs(got - want) < 1e-6, "frechet " + std::to_string(got) + " vs " + std::to_string(want));
    }
    o.detail << (o.pass ? "" : " | ") << "ssim error " << std::scientific << std::setprecision(2) << ssim_err
             << ", psnr error " << psnr_err;
    return report(7, "metric oracles", o, t0);
}

// ---- 11: reproducibility -------------------------------------------------------------------------

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
    return out;
}

bool criterion_reproducibility(const fs::path& work) {
    const auto t0 = Clock::now();
    Outcome o;
    std::vector<std::map<std::string, std::string>> corpora, runs;
    std::vector<std::string> evals;
    for (int rep = 0; rep < 2; ++rep) {
        // Same paths both times: the corpus path is part of the config hash.
        const fs::path dir = work / "pipeline";
        fs::remove_all(dir);
        toy::DatasetConfig d;
        d.n_clips = 6;
        d.n_test = 2;
        d.n_identities = 2;
        d.frames = 2;
        d.height = 16;
        d.width = 16;
        cli::cmd_gen_data({dir / "corpus", d});
        cli::RunConfig cfg;
        cfg.corpus = (dir / "corpus").string();
        cfg.model_dim = 16;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.head_dim = 8;
        cfg.epochs = 2;
        cfg.sample_steps = 4;
        cfg.adam.lr = 1e-3;
        const auto res = cli::cmd_train({cfg, dir / "run", false, false, true});
        cli::EvalArgs ea;
        ea.checkpoint = res.final_checkpoint;
        ea.out = dir / "eval.csv";
        cli::cmd_eval(ea);
        corpora.push_back(tree_bytes(dir / "corpus"));
        runs.push_back({{"loss.csv", io::read_file(dir / "run" / "loss.csv")}});
        evals.push_back(io::read_file(dir / "eval.csv"));
    }
    o.require(corpora[0] == corpora[1], "corpora differ");
    o.require(runs[0] == runs[1], "loss logs differ");
    o.require(evals[0] == evals[1], "metric CSVs differ");
    if (o.pass) o.detail << corpora[0].size() << " corpus files, loss log and metric CSV byte-identical";
    fs::remove_all(work / "pipeline");
    return report(11, "reproducibility", o, t0);
}

// ---- 8-10: desk-scale runs ------------------------------------------------------------------------

cli::RunConfig desk_config(const fs::path& corpus, std::uint64_t seed) {
    cli::RunConfig c;  // d=64, 4 layers, 4 heads of 16, lr 1e-4
    c.corpus = corpus.string();
    c.seed = seed;
    c.max_steps = 2000;
    c.epochs = 32;  // 64 clips per epoch; max_steps stops inside epoch 32
    c.probe_interval = 8;
    return c;
}

bool desk(const fs::path& work) {
    bool ok = true;
    const auto t_all = Clock::now();
    const fs::path corpus = work / "corpus";
    fs::remove_all(work);
    fs::create_directories(work);
    cli::cmd_gen_data({corpus, toy::DatasetConfig{}});  // seed 42, 64 train + 8 test, T=8, 3x32x32

    std::map<std::uint64_t, cli::CompareResult> results;
    std::ostringstream summary;
    summary << "seed,method,ssim,psnr,fvd_proxy,final_loss\n";
    bool emitted = true;
    for (auto seed : kDeskSeeds) {
        const auto t0 = Clock::now();
        const fs::path out = work / ("seed_" + std::to_string(seed));
        results[seed] = cli::cmd_compare({desk_config(corpus, seed), out, true});
        const auto& r = results[seed];
        std::cout << "  seed " << seed << " compare done in " << std::fixed << std::setprecision(0)
                  << seconds_since(t0) << " s\n";
        for (const auto& row : r.rows) {
            std::cout << "    " << std::left << std::setw(24) << row.method << std::right << " ssim " << std::setprecision(4)
                      << row.ssim << " psnr " << row.psnr << " fvd_proxy " << row.fvd << " final_loss "
                      << row.final_loss << (row.ok ? "" : " FAILED: " + row.error) << "\n";
            summary << seed << "," << row.method << "," << row.ssim << "," << row.psnr << "," << row.fvd << ","
                    << row.final_loss << "\n";
        }
        std::cout << std::flush;
        std::size_t lines = 0;
        for (char ch : io::read_file(out / "compare.csv")) lines += ch == '\n';
        emitted = emitted && r.rows.size() == 6 && lines == 8;
        for (const char* f : {"ssim.svg", "psnr.svg", "fvd_proxy.svg"})
            emitted = emitted && io::read_file(out / f).find("</svg>") != std::string::npos;
    }
    io::write_atomic(work / "desk_summary.csv", summary.str());

    auto held_out = [&](std::uint64_t seed, const std::string& method) {
        const auto* row = results[seed].find(method);
        return row && row->ok ? row->ssim : -INFINITY;
    };

    // 8
    {
        const auto t0 = Clock::now();
        Outcome o;
        const auto ckpt = work / "seed_42" / "unified_sequence_half" / "checkpoints" / "final";
        auto [cfg, model] = cli::load_checkpoint(ckpt);
        const auto train = cli::load_split(corpus, toy::Split::train);
        const auto rep = cli::evaluate_clips(&model, cfg, train, cli::config_hash(cfg));
        io::write_atomic(work / "seed_42" / "unified_sequence_half" / "eval_train.csv", rep.to_csv());
        const double tr = rep.mean_ssim(), te = held_out(42, "unified_sequence/half");
        o.require(tr >= kTrainSsim, "train SSIM below " + std::to_string(kTrainSsim));
        o.require(te >= kHeldOutSsim, "held-out SSIM below " + std::to_string(kHeldOutSsim));
        o.detail << (o.pass ? "" : " | ") << std::fixed << std::setprecision(4) << "train SSIM " << tr << " ("
                 << train.size() << " clips), held-out SSIM " << te;
        ok = report(8, "desk-scale overfit", o, t0) && ok;
    }
    // 9
    {
        const auto t0 = Clock::now();
        Outcome o;
        int wins = 0;
        for (auto seed : kDeskSeeds) {
            const double h = held_out(seed, "unified_sequence/half"), a = held_out(seed, "unified_sequence/all");
            wins += h > a;
            o.detail << "seed " << seed << " half " << std::fixed << std::setprecision(4) << h << " vs all " << a
                     << "; ";
        }
        o.require(wins >= 2, "half wins " + std::to_string(wins) + "/3");
        ok = report(9, "loss-region ablation direction", o, t0) && ok;
    }
    // 10
    {
        const auto t0 = Clock::now();
        Outcome o;
        int wins = 0;
        for (auto seed : kDeskSeeds) {
            const double u = held_out(seed, "unified_sequence/half"), c = held_out(seed, "channel_concat/half"),
                         t = held_out(seed, "token_residual/half");
            wins += u >= c && u >= t;
            o.detail << "seed " << seed << " unified " << std::fixed << std::setprecision(4) << u << " cc " << c
                     << " tr " << t << "; ";
        }
        o.require(emitted, "compare CSV or plots missing");
        o.require(wins >= 2, "unified wins " + std::to_string(wins) + "/3");
        ok = report(10, "conditioning strategy direction", o, t0) && ok;
    }
    std::cout << "desk runs took " << std::fixed << std::setprecision(0) << seconds_since(t_all) << " s\n";
    return ok;
}

}  // namespace
}  // namespace seqcond::acceptance

int main(int argc, char** argv) {
    namespace fs = std::filesystem;
    using namespace seqcond::acceptance;
    CLI::App app{"seqcond acceptance runner"};
    bool core = false, desk_runs = false;
    std::string work;
    app.add_flag("--core", core, "criteria 1-7 and 11");
    app.add_flag("--desk", desk_runs, "criteria 8-10");
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);
    if (!core && !desk_runs) core = true;
    const fs::path dir = work.empty() ? fs::temp_directory_path() / "seqcond_acceptance" : fs::path(work);
    bool ok = true;
    try {
        if (core) {
            fs::create_directories(dir);
            ok = criterion_gradients() && ok;
            ok = criterion_mask_semantics() && ok;
            ok = criterion_sampler_oracle() && ok;
            ok = criterion_codec() && ok;
            ok = criterion_attention() && ok;
            ok = criterion_lora() && ok;
            ok = criterion_metrics() && ok;
            ok = criterion_reproducibility(dir) && ok;
        }
        if (desk_runs) ok = desk(dir) && ok;
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << "\n";
        return 2;
    }
    std::cout << (ok ? "all selected criteria PASS" : "some criteria FAIL") << "\n";
    return ok ? 0 : 1;
}
