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

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seqcond/diffusion.hpp"
#include "seqcond/dit/model.hpp"
#include "seqcond/errors.hpp"
#include "seqcond/io.hpp"
#include "seqcond/latent_codec.hpp"
#include "seqcond/pipeline.hpp"
#include "seqcond/tensorkit/adamw.hpp"

// Run configuration: a flat text file of `key = value` lines with dotted
// section prefixes. `#` starts a comment. Unknown keys are errors.
//
//   seed = 42
//   conditioning_mode = unified_sequence
//   optimizer.lr = 1e-4
//
// The canonical rendering (every key, fixed order) is hashed with FNV-1a; the
// hash is stamped into every file a run produces.

namespace seqcond::cli {

enum class Tuning { full, lora };

struct RunConfig {
    std::uint64_t seed = 42;
    dit::ConditioningMode conditioning_mode = dit::ConditioningMode::unified_sequence;
    dit::AttentionMode attention_mode = dit::AttentionMode::full;
    Tuning tuning = Tuning::full;

    // model
    std::size_t model_dim = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;
    std::size_t mlp_ratio = 4;
    std::size_t max_tokens = 4096;
    dit::PredictionAttention prediction_attention = dit::PredictionAttention::causal;
    dit::MaskStyle mask_style = dit::MaskStyle::additive;
    std::string init_checkpoint;  // optional base weights to start from

    // lora
    std::size_t lora_rank = 128;
    double lora_alpha = 128.0;
    std::vector<std::string> lora_targets = dit::lora_tag_universe();

    // diffusion
    std::size_t timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    std::size_t sample_steps = 50;
    diffusion::LossRegion loss_region = diffusion::LossRegion::target_only;
    bool literal = false;
    bool clip_x0 = true;

    // data
    std::string corpus = "corpus";
    std::size_t spatial_patch = 4;
    std::size_t temporal_stride = 1;

    // optimizer
    tk::AdamWConfig adam;
    std::size_t epochs = 10;
    std::size_t batch = 1;
    std::size_t grad_accum = 1;
    std::size_t max_steps = 0;  // 0 = run all epochs

    // eval
    std::size_t probe_clips = 4;
    std::size_t probe_interval = 1;  // epochs between compare probes
    std::uint64_t sample_seed = 7;

    codec::CodecConfig codec(std::size_t channels = 3) const { return {spatial_patch, temporal_stride, channels}; }

    dit::DiTConfig dit(std::size_t channels = 3) const {
        dit::DiTConfig d;
        d.latent_channels = codec(channels).latent_channels();
        d.model_dim = model_dim;
        d.n_layers = n_layers;
        d.n_heads = n_heads;
        d.head_dim = head_dim;
        d.mlp_ratio = mlp_ratio;
        d.max_tokens = max_tokens;
        d.num_timesteps = timesteps;
        d.attention_mode = attention_mode;
        d.prediction_attention = prediction_attention;
        d.mask_style = mask_style;
        d.conditioning_mode = conditioning_mode;
        return d;
    }

    dit::LoRAConfig lora() const {
        dit::LoRAConfig l;
        l.enabled = tuning == Tuning::lora;
        l.rank = lora_rank;
        l.alpha = lora_alpha;
        l.targets = lora_targets;
        return l;
    }

    diffusion::SamplerConfig sampler() const {
        diffusion::SamplerConfig s;
        s.steps = sample_steps;
        s.clip_x0 = clip_x0;
        s.literal_x0 = literal;
        return s;
    }

    TrainOptions train_options() const {
        TrainOptions o;
        o.region = loss_region;
        o.noising = literal ? diffusion::NoisingMode::literal : diffusion::NoisingMode::corrected;
        o.seed = seed;
        return o;
    }

    diffusion::NoiseSchedule schedule() const { return diffusion::make_schedule(timesteps, beta_min, beta_max); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class E>
struct EnumNames {
    std::vector<std::pair<E, std::string>> names;

    std::string to(E e) const {
        for (const auto& [k, n] : names)
            if (k == e) return n;
        return "?";
    }
    E from(const std::string& key, const std::string& s) const {
        std::string all;
        for (const auto& [k, n] : names) {
            if (n == s) return k;
            all += (all.empty() ? "" : ", ") + n;
        }
        throw ConfigError("config: " + key + " = '" + s + "' (expected one of: " + all + ")");
    }
};

inline const EnumNames<dit::ConditioningMode>& mode_names() {
    static const EnumNames<dit::ConditioningMode> n{{{dit::ConditioningMode::unified_sequence, "unified_sequence"},
                                                     {dit::ConditioningMode::channel_concat, "channel_concat"},
                                                     {dit::ConditioningMode::token_residual, "token_residual"}}};
    return n;
}
inline const EnumNames<dit::AttentionMode>& attention_names() {
    static const EnumNames<dit::AttentionMode> n{
        {{dit::AttentionMode::full, "full"}, {dit::AttentionMode::block_causal, "block_causal"}}};
    return n;
}
inline const EnumNames<dit::PredictionAttention>& prediction_names() {
    static const EnumNames<dit::PredictionAttention> n{
        {{dit::PredictionAttention::causal, "causal"}, {dit::PredictionAttention::bidirectional, "bidirectional"}}};
    return n;
}
inline const EnumNames<dit::MaskStyle>& mask_style_names() {
    static const EnumNames<dit::MaskStyle> n{{{dit::MaskStyle::additive, "additive"},
                                              {dit::MaskStyle::multiplicative_literal, "multiplicative_literal"}}};
    return n;
}
inline const EnumNames<Tuning>& tuning_names() {
    static const EnumNames<Tuning> n{{{Tuning::full, "full"}, {Tuning::lora, "lora"}}};
    return n;
}
inline const EnumNames<diffusion::LossRegion>& region_names() {
    static const EnumNames<diffusion::LossRegion> n{
        {{diffusion::LossRegion::target_only, "half"}, {diffusion::LossRegion::all_frames, "all"}}};
    return n;
}

// One accessor pair per key, in canonical order.
struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError("config: " + key + " = '" + v + "' is not an integer");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " = '" + v + "' is not a number");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " = '" + v + "' is not a boolean");
}

inline const std::vector<Field>& fields() {
    using C = RunConfig;
    auto sz = [](std::string key, std::size_t C::*m) {
        return Field{key, [m](const C& c) { return std::to_string(c.*m); },
                     [m, key](C& c, const std::string& v) { c.*m = static_cast<std::size_t>(parse_u64(key, v)); }};
    };
    auto dbl = [](std::string key, double C::*m) {
        return Field{key, [m](const C& c) { return fmt_double(c.*m); },
                     [m, key](C& c, const std::string& v) { c.*m = parse_double(key, v); }};
    };
    auto adam = [](std::string key, double tk::AdamWConfig::*m) {
        return Field{key, [m](const C& c) { return fmt_double(c.adam.*m); },
                     [m, key](C& c, const std::string& v) { c.adam.*m = parse_double(key, v); }};
    };
    auto boo = [](std::string key, bool C::*m) {
        return Field{key, [m](const C& c) { return std::string(c.*m ? "true" : "false"); },
                     [m, key](C& c, const std::string& v) { c.*m = parse_bool(key, v); }};
    };
    auto str = [](std::string key, std::string C::*m) {
        return Field{key, [m](const C& c) { return c.*m; }, [m](C& c, const std::string& v) { c.*m = v; }};
    };
    auto u64 = [](std::string key, std::uint64_t C::*m) {
        return Field{key, [m](const C& c) { return std::to_string(c.*m); },
                     [m, key](C& c, const std::string& v) { c.*m = parse_u64(key, v); }};
    };
    auto en = [](std::string key, auto C::*m, const auto& names) {
        return Field{key, [m, &names](const C& c) { return names.to(c.*m); },
                     [m, key, &names](C& c, const std::string& v) { c.*m = names.from(key, v); }};
    };
    static const std::vector<Field> f{
        u64("seed", &C::seed),
        en("conditioning_mode", &C::conditioning_mode, mode_names()),
        en("attention_mode", &C::attention_mode, attention_names()),
        en("tuning", &C::tuning, tuning_names()),
        sz("model.dim", &C::model_dim),
        sz("model.layers", &C::n_layers),
        sz("model.heads", &C::n_heads),
        sz("model.head_dim", &C::head_dim),
        sz("model.mlp_ratio", &C::mlp_ratio),
        sz("model.max_tokens", &C::max_tokens),
        en("model.prediction_attention", &C::prediction_attention, prediction_names()),
        en("model.mask_style", &C::mask_style, mask_style_names()),
        str("model.init_checkpoint", &C::init_checkpoint),
        sz("lora.rank", &C::lora_rank),
        dbl("lora.alpha", &C::lora_alpha),
        Field{"lora.targets",
              [](const C& c) {
                  std::string s;
                  for (const auto& t : c.lora_targets) s += (s.empty() ? "" : ",") + t;
                  return s;
              },
              [](C& c, const std::string& v) {
                  c.lora_targets.clear();
                  std::stringstream ss(v);
                  std::string item;
                  while (std::getline(ss, item, ',')) {
                      item = trim(item);
                      if (!item.empty()) c.lora_targets.push_back(item);
                  }
              }},
        sz("diffusion.timesteps", &C::timesteps),
        dbl("diffusion.beta_min", &C::beta_min),
        dbl("diffusion.beta_max", &C::beta_max),
        sz("diffusion.steps", &C::sample_steps),
        en("diffusion.loss_region", &C::loss_region, region_names()),
        boo("diffusion.literal", &C::literal),
        boo("diffusion.clip_x0", &C::clip_x0),
        str("data.corpus", &C::corpus),
        sz("data.patch", &C::spatial_patch),
        sz("data.temporal_stride", &C::temporal_stride),
        adam("optimizer.lr", &tk::AdamWConfig::lr),
        adam("optimizer.beta1", &tk::AdamWConfig::beta1),
        adam("optimizer.beta2", &tk::AdamWConfig::beta2),
        adam("optimizer.eps", &tk::AdamWConfig::eps),
        adam("optimizer.weight_decay", &tk::AdamWConfig::weight_decay),
        sz("optimizer.epochs", &C::epochs),
        sz("optimizer.batch", &C::batch),
        sz("optimizer.grad_accum", &C::grad_accum),
        sz("optimizer.max_steps", &C::max_steps),
        sz("eval.probe_clips", &C::probe_clips),
        sz("eval.probe_interval", &C::probe_interval),
        u64("eval.sample_seed", &C::sample_seed),
    };
    return f;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    c.dit().validate();
    codec::validate(c.codec());
    if (c.batch != 1) throw ConfigError("config: optimizer.batch must be 1");
    if (c.grad_accum != 1) throw ConfigError("config: optimizer.grad_accum must be 1");
    if (c.epochs < 1 && c.max_steps == 0) throw ConfigError("config: optimizer.epochs must be >= 1");
    if (c.sample_steps < 1 || c.sample_steps > c.timesteps) {
        throw ConfigError("config: diffusion.steps must be in [1, diffusion.timesteps]");
    }
    if (!(c.adam.lr > 0.0)) throw ConfigError("config: optimizer.lr must be positive");
    if (c.tuning == Tuning::lora && c.lora_rank < 1) throw ConfigError("config: lora.rank must be >= 1");
    if (c.probe_interval < 1) throw ConfigError("config: eval.probe_interval must be >= 1");
    diffusion::make_schedule(c.timesteps, c.beta_min, c.beta_max);
}

/// Applies one `key = value` assignment.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
    for (const auto& f : detail::fields()) {
        if (f.key == key) {
            f.set(c, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "config") {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set_key(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(io::read_file(path), path.string());
}

/// Every key in canonical order.
inline std::string to_text(const RunConfig& c) {
    std::string out;
    for (const auto& f : detail::fields()) out += f.key + " = " + f.get(c) + "\n";
    return out;
}

inline std::uint64_t config_hash(const RunConfig& c) { return io::fnv1a(to_text(c)); }

inline std::string method_name(const RunConfig& c) {
    return detail::mode_names().to(c.conditioning_mode) + "/" + detail::region_names().to(c.loss_region);
}

}  // namespace seqcond::cli
