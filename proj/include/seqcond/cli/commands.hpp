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
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seqcond/cli/checkpoint.hpp"
#include "seqcond/cli/config.hpp"
#include "seqcond/cli/report.hpp"
#include "seqcond/io.hpp"
#include "seqcond/metrics.hpp"
#include "seqcond/pipeline.hpp"
#include "seqcond/toy_data.hpp"

// Implementations behind the command-line subcommands. Each returns normally
// on success and throws one of the seqcond error types otherwise.
//
// Training output layout:
//   <out>/config.txt                 canonical config
//   <out>/loss.csv                   step,epoch,t_mean,loss
//   <out>/progress.json              last completed epoch, step, final flag
//   <out>/checkpoints/epoch_NNN/     base.sqck [lora.sqck] optimizer.sqck config.txt
//   <out>/checkpoints/final/         copy of the last epoch directory

namespace seqcond::cli {

namespace fs = std::filesystem;

// ---- corpus -------------------------------------------------------------------------

inline std::vector<Clip> load_split(const fs::path& corpus, toy::Split split, std::size_t limit = 0) {
    const auto m = toy::read_manifest(corpus);
    std::vector<Clip> out;
    for (auto id : m.ids(split)) {
        if (limit && out.size() == limit) break;
        auto s = toy::read_clip(corpus, id);
        out.push_back({id, std::move(s.reference), std::move(s.skeleton), std::move(s.target)});
    }
    return out;
}

struct GenDataArgs {
    fs::path out;
    toy::DatasetConfig data;
};

inline toy::Manifest cmd_gen_data(const GenDataArgs& a) {
    if (a.out.empty()) throw UsageError("gen-data: --out is required");
    return toy::write_dataset(a.out, a.data);
}

// ---- model construction ---------------------------------------------------------------

inline dit::DiT<float> build_model(const RunConfig& cfg) {
    dit::DiT<float> model(cfg.dit(), cfg.seed);
    if (!cfg.init_checkpoint.empty()) {
        fs::path p = cfg.init_checkpoint;
        if (fs::is_directory(p)) p /= "base.sqck";
        restore(model.base_parameters(), load_params(p), p.string());
    }
    if (cfg.tuning == Tuning::lora) model.apply_lora(cfg.lora(), cfg.seed);
    return model;
}

/// Rebuilds a trained model from a checkpoint directory.
inline std::pair<RunConfig, dit::DiT<float>> load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
    RunConfig cfg = load_config(dir / "config.txt");
    const std::uint64_t hash = config_hash(cfg);
    cfg.init_checkpoint.clear();
    dit::DiT<float> model(cfg.dit(), cfg.seed);
    const auto base = load_params(dir / "base.sqck");
    if (base.config_hash != hash) throw DataError(dir.string() + ": base.sqck config hash does not match config.txt");
    restore(model.base_parameters(), base, (dir / "base.sqck").string());
    if (cfg.tuning == Tuning::lora) {
        model.apply_lora(cfg.lora(), cfg.seed);
        const auto lora = load_params(dir / "lora.sqck");
        restore(model.adapter_parameters(), lora, (dir / "lora.sqck").string());
    }
    return {cfg, std::move(model)};
}

// ---- train ---------------------------------------------------------------------------------

struct LossRow {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    double t_mean = 0.0;
    double loss = 0.0;
};

inline std::string loss_csv(const std::vector<LossRow>& rows, std::uint64_t hash) {
    std::string out = "# config_hash=" + io::hex64(hash) + "\nstep,epoch,t_mean,loss\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%zu,%.1f,%.9g\n", static_cast<unsigned long long>(r.step), r.epoch,
                      r.t_mean, r.loss);
        out += buf;
    }
    return out;
}

inline std::vector<LossRow> parse_loss_csv(const std::string& text) {
    std::vector<LossRow> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
        LossRow r;
        unsigned long long step = 0;
        if (std::sscanf(line.c_str(), "%llu,%zu,%lf,%lf", &step, &r.epoch, &r.t_mean, &r.loss) != 4) {
            throw DataError("loss.csv: malformed row '" + line + "'");
        }
        r.step = step;
        rows.push_back(r);
    }
    return rows;
}

struct TrainArgs {
    RunConfig config;
    fs::path out;
    bool resume = false;
    bool force = false;  // accept a config-hash mismatch on resume
    bool quiet = false;
};

struct EpochInfo {
    std::size_t epoch = 0;  // 1-based
    std::uint64_t step = 0;
    bool last = false;
    const dit::DiT<float>* model = nullptr;
};

struct TrainResult {
    std::uint64_t config_hash = 0;
    std::uint64_t steps = 0;
    std::size_t epochs = 0;
    std::uint64_t batch_order_hash = 0;
    std::vector<LossRow> losses;
    fs::path final_checkpoint;
};

inline std::string epoch_dir_name(std::size_t e) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03zu", e);
    return buf;
}

inline void write_checkpoint(const fs::path& dir, const RunConfig& cfg, const dit::DiT<float>& model,
                             const tk::AdamWState<float>& opt) {
    const auto hash = config_hash(cfg);
    fs::create_directories(dir);
    save_params(dir / "base.sqck", collect(model.base_parameters(), BlockKind::base, hash));
    if (model.lora_active()) save_params(dir / "lora.sqck", collect(model.adapter_parameters(), BlockKind::lora, hash));
    save_params(dir / "optimizer.sqck", collect_optimizer(trainable_named(model), opt, hash));
    io::write_atomic(dir / "config.txt", to_text(cfg));
}

inline std::size_t planned_epochs(const RunConfig& cfg, std::size_t n_train) {
    if (cfg.max_steps == 0) return cfg.epochs;
    return (cfg.max_steps + n_train - 1) / n_train;
}

/// Trains per the config. `on_epoch` runs after each epoch's checkpoint.
inline TrainResult cmd_train(const TrainArgs& a, const std::function<void(const EpochInfo&)>& on_epoch = {}) {
    if (a.out.empty()) throw UsageError("train: --out is required");
    const RunConfig& cfg = a.config;
    validate(cfg);
    const std::uint64_t hash = config_hash(cfg);
    const auto clips = load_split(cfg.corpus, toy::Split::train);
    if (clips.empty()) throw DataError("train: corpus has no training clips");
    const auto ccfg = cfg.codec(clips.front().reference.channels);
    std::vector<Problem> problems;
    for (const auto& c : clips) problems.push_back(make_problem(c, cfg.conditioning_mode, ccfg, seq::Mode::train));

    dit::DiT<float> model = build_model(cfg);
    Trainer<float> trainer(model, cfg.schedule(), cfg.train_options(), cfg.adam);
    const std::size_t n_epochs = planned_epochs(cfg, problems.size());
    const std::uint64_t step_limit = cfg.max_steps ? cfg.max_steps : n_epochs * problems.size();

    TrainResult res;
    res.config_hash = hash;
    std::size_t start_epoch = 0;
    fs::create_directories(a.out);
    if (a.resume) {
        const auto prog_path = a.out / "progress.json";
        if (!fs::exists(prog_path)) throw DataError("train: nothing to resume in " + a.out.string());
        const auto prog = nlohmann::json::parse(io::read_file(prog_path));
        const auto stored = io::parse_hex64(prog.at("config_hash").get<std::string>());
        if (stored != hash && !a.force) {
            throw ConfigError("train: config hash " + io::hex64(hash) + " differs from the run being resumed (" +
                              io::hex64(stored) + "); pass --force to override");
        }
        start_epoch = prog.at("epoch").get<std::size_t>();
        const auto dir = a.out / "checkpoints" / epoch_dir_name(start_epoch);
        restore(model.base_parameters(), load_params(dir / "base.sqck"), (dir / "base.sqck").string());
        if (model.lora_active()) {
            restore(model.adapter_parameters(), load_params(dir / "lora.sqck"), (dir / "lora.sqck").string());
        }
        restore_optimizer(trainable_named(model), trainer.optimizer(), load_params(dir / "optimizer.sqck"),
                          (dir / "optimizer.sqck").string());
        trainer.set_step(prog.at("step").get<std::uint64_t>());
        res.losses = parse_loss_csv(io::read_file(a.out / "loss.csv"));
        if (res.losses.size() < trainer.step()) throw DataError("train: loss.csv shorter than checkpointed step");
        res.losses.resize(trainer.step());
    }
    io::write_atomic(a.out / "config.txt", to_text(cfg));

    // The visiting order of every epoch, including resumed ones, feeds the hash.
    std::uint64_t order_hash = io::fnv1a("");
    for (std::size_t e = 0; e < n_epochs; ++e) {
        for (auto i : Trainer<float>::epoch_order(cfg.seed, e, problems.size())) {
            const auto id = static_cast<std::uint64_t>(clips[i].id);
            order_hash = io::fnv1a(std::string_view(reinterpret_cast<const char*>(&id), sizeof id), order_hash);
        }
    }
    res.batch_order_hash = order_hash;

    for (std::size_t e = start_epoch; e < n_epochs && trainer.step() < step_limit; ++e) {
        const auto order = Trainer<float>::epoch_order(cfg.seed, e, problems.size());
        for (auto i : order) {
            if (trainer.step() >= step_limit) break;
            const std::uint64_t step = trainer.step();
            const auto r = trainer.step_on(problems[i]);
            res.losses.push_back({step, e + 1, static_cast<double>(r.t), r.loss});
        }
        const bool last = e + 1 == n_epochs || trainer.step() >= step_limit;
        const auto dir = a.out / "checkpoints" / epoch_dir_name(e + 1);
        write_checkpoint(dir, cfg, model, trainer.optimizer());
        io::write_atomic(a.out / "loss.csv", loss_csv(res.losses, hash));
        if (last) {
            write_checkpoint(a.out / "checkpoints" / "final", cfg, model, trainer.optimizer());
        }
        nlohmann::json prog;
        prog["config_hash"] = io::hex64(hash);
        prog["epoch"] = e + 1;
        prog["step"] = trainer.step();
        prog["final"] = last;
        prog["final_checkpoint"] = last ? "checkpoints/final" : "";
        io::write_atomic(a.out / "progress.json", prog.dump(1) + "\n");
        if (!a.quiet) {
            double mean = 0.0;
            std::size_t n = 0;
            for (const auto& r : res.losses)
                if (r.epoch == e + 1) mean += r.loss, ++n;
            std::cerr << "epoch " << e + 1 << "/" << n_epochs << " step " << trainer.step() << " mean loss "
                      << (n ? mean / static_cast<double>(n) : 0.0) << "\n";
        }
        if (on_epoch) on_epoch({e + 1, trainer.step(), last, &model});
    }
    res.steps = trainer.step();
    res.epochs = n_epochs;
    res.final_checkpoint = a.out / "checkpoints" / "final";
    return res;
}

// ---- infer ---------------------------------------------------------------------------------

struct InferArgs {
    fs::path checkpoint;
    fs::path ref;
    fs::path skeleton;  // .sqv clip or keypoint .json
    fs::path out;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    std::size_t first_frame = 0;  // first keypoint frame used as skeleton frame 1
};

/// Loads a skeleton video: a clip container, or a keypoint document rendered
/// at the given frame size.
inline VideoTensor load_skeleton(const fs::path& path, std::size_t H, std::size_t W, std::size_t first_frame) {
    if (path.extension() == ".json") {
        const auto track = toy::load_keypoints(path);
        if (first_frame >= track.length()) {
            throw UsageError("skeleton file has " + std::to_string(track.length()) + " frames, none after --first-frame");
        }
        return toy::render_video(track, first_frame, track.length() - first_frame, H, W, nullptr);
    }
    return io::read_clip(path);
}

inline Generation run_inference(const dit::DiT<float>& model, const RunConfig& cfg, const Clip& clip,
                                std::uint64_t seed) {
    const auto ccfg = cfg.codec(clip.reference.channels);
    const Problem p = make_problem(clip, cfg.conditioning_mode, ccfg, seq::Mode::infer);
    return generate(model, p, ccfg, cfg.schedule(), cfg.sampler(), seed);
}

inline VideoTensor cmd_infer(const InferArgs& a) {
    if (a.out.empty()) throw UsageError("infer: --out is required");
    auto [cfg, model] = load_checkpoint(a.checkpoint);
    if (a.steps) cfg.sample_steps = *a.steps;
    validate(cfg);
    VideoTensor ref = io::read_clip(a.ref);
    if (ref.frames < 1) throw UsageError("infer: reference clip has no frames");
    if (ref.frames > 1) ref = slice_frames(ref, 0, 1);
    VideoTensor skel = load_skeleton(a.skeleton, ref.height, ref.width, a.first_frame);
    if (skel.frames == 0) throw UsageError("infer: skeleton sequence is empty");
    Clip clip{0, ref, skel, {}};
    const auto g = run_inference(model, cfg, clip, a.seed.value_or(cfg.sample_seed));
    const auto hash = config_hash(cfg);
    io::write_clip(a.out, g.target, hash);
    auto sheet = a.out;
    sheet.replace_extension(".ppm");
    io::write_atomic(sheet, contact_sheet_ppm({&ref, &skel, &g.target}));
    return g.target;
}

// ---- eval ------------------------------------------------------------------------------------

struct EvalArgs {
    fs::path checkpoint;
    fs::path corpus;
    toy::Split split = toy::Split::test;
    fs::path out;
    bool ground_truth = false;  // score the targets against themselves
    std::size_t limit = 0;      // first N clips of the split (0 = all)
};

inline std::uint64_t clip_sample_seed(std::uint64_t base, std::size_t clip_id) { return derive_seed({base, clip_id}); }

inline metrics::MetricReport evaluate_clips(const dit::DiT<float>* model, const RunConfig& cfg,
                                            const std::vector<Clip>& clips, std::uint64_t hash) {
    if (clips.empty()) throw DataError("eval: split is empty");
    std::vector<std::size_t> ids;
    std::vector<Grid4> gen, ref;
    for (const auto& c : clips) {
        ids.push_back(c.id);
        ref.push_back(c.targets);
        gen.push_back(model ? run_inference(*model, cfg, c, clip_sample_seed(cfg.sample_seed, c.id)).target : c.targets);
    }
    return metrics::evaluate(ids, gen, ref, hash);
}

inline metrics::MetricReport cmd_eval(const EvalArgs& a) {
    if (a.out.empty()) throw UsageError("eval: --out is required");
    std::optional<std::pair<RunConfig, dit::DiT<float>>> loaded;
    RunConfig cfg;
    if (!a.ground_truth) {
        loaded.emplace(load_checkpoint(a.checkpoint));
        cfg = loaded->first;
    } else if (!a.checkpoint.empty()) {
        cfg = load_config(a.checkpoint / "config.txt");
    }
    const fs::path corpus = a.corpus.empty() ? fs::path(cfg.corpus) : a.corpus;
    const auto clips = load_split(corpus, a.split, a.limit);
    const auto report = evaluate_clips(loaded ? &loaded->second : nullptr, cfg, clips, config_hash(cfg));
    io::write_atomic(a.out, report.to_csv());
    return report;
}

// ---- compare ------------------------------------------------------------------------------------

struct CompareArgs {
    RunConfig base;
    fs::path out;
    bool quiet = false;
};

struct CompareRow {
    std::string method;
    bool ok = false;
    std::string error;
    double ssim = 0.0, psnr = 0.0, fvd = 0.0, final_loss = 0.0;
    std::uint64_t batch_order_hash = 0;
};

struct CurvePoint {
    std::string method;
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    double ssim = 0.0, psnr = 0.0, fvd = 0.0;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::vector<CurvePoint> curves;
    bool all_ok() const {
        for (const auto& r : rows)
            if (!r.ok) return false;
        return true;
    }
    const CompareRow* find(const std::string& method) const {
        for (const auto& r : rows)
            if (r.method == method) return &r;
        return nullptr;
    }
};

inline std::string compare_csv(const CompareResult& r, std::uint64_t hash) {
    std::string out = "# base_config_hash=" + io::hex64(hash) + "\nmethod,ssim,psnr,fvd_proxy,final_loss\n";
    char buf[256];
    for (const auto& row : r.rows) {
        if (row.ok) {
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", row.method.c_str(), row.ssim, row.psnr, row.fvd,
                          row.final_loss);
        } else {
            std::snprintf(buf, sizeof buf, "%s,failed,failed,failed,failed\n", row.method.c_str());
        }
        out += buf;
    }
    return out;
}

inline std::string curves_csv(const CompareResult& r) {
    std::string out = "method,epoch,step,ssim,psnr,fvd_proxy\n";
    char buf[256];
    for (const auto& c : r.curves) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%.6f,%.6f,%.6f\n", c.method.c_str(), c.epoch,
                      static_cast<unsigned long long>(c.step), c.ssim, c.psnr, c.fvd);
        out += buf;
    }
    return out;
}

/// Trains every conditioning mode with both loss regions under one budget,
/// probes a fixed test subset during training and scores the full test split
/// at the end. Sub-run failures are recorded and the remaining runs continue.
inline CompareResult cmd_compare(const CompareArgs& a) {
    if (a.out.empty()) throw UsageError("compare: --out is required");
    validate(a.base);
    const std::uint64_t base_hash = config_hash(a.base);
    const auto test = load_split(a.base.corpus, toy::Split::test);
    if (test.empty()) throw DataError("compare: corpus has no test clips");
    std::vector<Clip> probe(test.begin(), test.begin() + static_cast<long>(std::min(a.base.probe_clips, test.size())));

    CompareResult result;
    std::string order_log;
    for (auto mode : {dit::ConditioningMode::unified_sequence, dit::ConditioningMode::channel_concat,
                      dit::ConditioningMode::token_residual}) {
        for (auto region : {diffusion::LossRegion::target_only, diffusion::LossRegion::all_frames}) {
            RunConfig cfg = a.base;
            cfg.conditioning_mode = mode;
            cfg.loss_region = region;
            CompareRow row;
            row.method = method_name(cfg);
            const fs::path dir = a.out / (detail::mode_names().to(mode) + "_" + detail::region_names().to(region));
            try {
                TrainArgs ta{cfg, dir, false, false, a.quiet};
                const auto hash = config_hash(cfg);
                const auto res = cmd_train(ta, [&](const EpochInfo& info) {
                    if (info.epoch % cfg.probe_interval != 0 && !info.last) return;
                    const auto rep = evaluate_clips(info.model, cfg, probe, hash);
                    result.curves.push_back({row.method, info.epoch, info.step, rep.mean_ssim(), rep.mean_psnr(),
                                             rep.fvd_proxy.value_or(0.0)});
                });
                auto [lcfg, model] = load_checkpoint(res.final_checkpoint);
                const auto rep = evaluate_clips(&model, lcfg, test, hash);
                io::write_atomic(dir / "eval_test.csv", rep.to_csv());
                row.ssim = rep.mean_ssim();
                row.psnr = rep.mean_psnr();
                row.fvd = rep.fvd_proxy.value_or(0.0);
                // Mean over the steps of the last epoch.
                double s = 0.0;
                std::size_t n = 0;
                for (const auto& l : res.losses)
                    if (l.epoch == res.losses.back().epoch) s += l.loss, ++n;
                row.final_loss = n ? s / static_cast<double>(n) : 0.0;
                row.batch_order_hash = res.batch_order_hash;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
                if (!a.quiet) std::cerr << "compare: " << row.method << " failed: " << e.what() << "\n";
            }
            order_log += row.method + " batch_order_hash=" + io::hex64(row.batch_order_hash) +
                         (row.ok ? "" : " failed: " + row.error) + "\n";
            result.rows.push_back(row);
        }
    }

    io::write_atomic(a.out / "compare.csv", compare_csv(result, base_hash));
    io::write_atomic(a.out / "curves.csv", curves_csv(result));
    io::write_atomic(a.out / "runs.log", order_log);
    auto plot = [&](const std::string& metric, auto pick) {
        std::vector<Series> series;
        for (const auto& row : result.rows) {
            if (!row.ok) continue;
            Series s{row.method, {}, {}};
            for (const auto& c : result.curves) {
                if (c.method != row.method) continue;
                s.x.push_back(static_cast<double>(c.epoch));
                s.y.push_back(pick(c));
            }
            series.push_back(std::move(s));
        }
        io::write_atomic(a.out / (metric + ".svg"),
                         line_chart_svg(metric + " on probe clips", "epoch", metric, series,
                                        "base_config_hash=" + io::hex64(base_hash)));
    };
    plot("ssim", [](const CurvePoint& c) { return c.ssim; });
    plot("psnr", [](const CurvePoint& c) { return c.psnr; });
    plot("fvd_proxy", [](const CurvePoint& c) { return c.fvd; });
    return result;
}

}  // namespace seqcond::cli
