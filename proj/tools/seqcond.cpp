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

// seqcond command-line tool.
//
// Exit codes: 0 success, 1 usage, 2 data or config error, 3 numerical abort.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>

#include "seqcond/cli/commands.hpp"

namespace {

using namespace seqcond;
namespace fs = std::filesystem;

// SEQCOND_OUT overrides the output directory of train and compare.
fs::path output_dir(const std::string& flag) {
    if (const char* env = std::getenv("SEQCOND_OUT"); env && *env) return env;
    return flag;
}

toy::Split parse_split(const std::string& s) {
    if (s == "train") return toy::Split::train;
    if (s == "test") return toy::Split::test;
    throw UsageError("--split must be 'train' or 'test'");
}

int run(int argc, char** argv) {
    CLI::App app{"Pose-conditioned video diffusion on a toy corpus"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Render the synthetic corpus");
    std::string gen_out;
    toy::DatasetConfig data;
    std::size_t size = data.height;
    gen->add_option("--out", gen_out, "Corpus directory");
    gen->add_option("--clips", data.n_clips, "Total clips")->capture_default_str();
    gen->add_option("--test", data.n_test, "Held-out clips (the last ones)")->capture_default_str();
    gen->add_option("--frames", data.frames, "Target frames per clip")->capture_default_str();
    gen->add_option("--size", size, "Frame height and width")->capture_default_str();
    gen->add_option("--identities", data.n_identities, "Distinct characters")->capture_default_str();
    gen->add_option("--seed", data.master_seed, "Master seed")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    std::string train_cfg, train_out;
    bool resume = false, force = false;
    std::vector<std::string> overrides;
    train->add_option("--config", train_cfg, "Run config file")->required();
    train->add_option("--out", train_out, "Run directory");
    train->add_flag("--resume", resume, "Continue from the last epoch checkpoint");
    train->add_flag("--force", force, "Resume despite a config hash mismatch");
    train->add_option("--set", overrides, "Override a config key (key=value)");

    // infer
    auto* infer = app.add_subcommand("infer", "Generate a clip from a reference and a skeleton sequence");
    cli::InferArgs ia;
    std::string ia_ckpt, ia_ref, ia_skel, ia_out;
    std::size_t ia_steps = 0;
    std::uint64_t ia_seed = 0;
    infer->add_option("--checkpoint", ia_ckpt, "Checkpoint directory")->required();
    infer->add_option("--ref", ia_ref, "Reference frame (.sqv)")->required();
    infer->add_option("--skeleton", ia_skel, "Skeleton clip (.sqv) or keypoint file (.json)")->required();
    infer->add_option("--out", ia_out, "Output clip (.sqv)");
    auto* steps_opt = infer->add_option("--steps", ia_steps, "Sampling steps (default from config)");
    auto* seed_opt = infer->add_option("--seed", ia_seed, "Sampling seed (default from config)");
    infer->add_option("--first-frame", ia.first_frame, "First keypoint frame to use")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Score a checkpoint on a corpus split");
    std::string ev_ckpt, ev_corpus, ev_split = "test", ev_out;
    bool ev_gt = false;
    std::size_t ev_limit = 0;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory");
    ev->add_option("--corpus", ev_corpus, "Corpus directory (default from config)");
    ev->add_option("--split", ev_split, "train or test")->capture_default_str();
    ev->add_option("--out", ev_out, "Report CSV");
    ev->add_flag("--ground-truth", ev_gt, "Score the ground truth against itself");
    ev->add_option("--limit", ev_limit, "Only the first N clips of the split");

    // compare
    auto* cmp = app.add_subcommand("compare", "Train and score every conditioning strategy");
    std::string cmp_cfg, cmp_out;
    cmp->add_option("--config-base", cmp_cfg, "Base run config")->required();
    cmp->add_option("--out", cmp_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (*gen) {
        if (gen_out.empty()) throw UsageError("gen-data: --out is required");
        data.height = data.width = size;
        const auto m = cli::cmd_gen_data({gen_out, data});
        std::cout << "wrote " << m.clips.size() << " clips to " << gen_out << "\n";
    } else if (*train) {
        auto cfg = cli::load_config(train_cfg);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
            cli::set_key(cfg, cli::detail::trim(o.substr(0, eq)), cli::detail::trim(o.substr(eq + 1)));
        }
        const auto out = output_dir(train_out);
        if (out.empty()) throw UsageError("train: --out is required");
        const auto r = cli::cmd_train({cfg, out, resume, force, false});
        std::cout << "trained " << r.steps << " steps; final checkpoint " << r.final_checkpoint.string() << "\n";
    } else if (*infer) {
        if (ia_out.empty()) throw UsageError("infer: --out is required");
        ia.checkpoint = ia_ckpt;
        ia.ref = ia_ref;
        ia.skeleton = ia_skel;
        ia.out = ia_out;
        if (*steps_opt) ia.steps = ia_steps;
        if (*seed_opt) ia.seed = ia_seed;
        const auto v = cli::cmd_infer(ia);
        std::cout << "wrote " << v.frames << " frames to " << ia_out << "\n";
    } else if (*ev) {
        if (ev_out.empty()) throw UsageError("eval: --out is required");
        if (ev_ckpt.empty() && !ev_gt) throw UsageError("eval: --checkpoint is required");
        if (ev_ckpt.empty() && ev_corpus.empty()) throw UsageError("eval: --corpus is required without a checkpoint");
        const auto rep = cli::cmd_eval({ev_ckpt, ev_corpus, parse_split(ev_split), ev_out, ev_gt, ev_limit});
        std::cout << "ssim " << rep.mean_ssim() << " psnr " << rep.mean_psnr() << " fvd_proxy "
                  << rep.fvd_proxy.value_or(0.0) << "\n";
    } else if (*cmp) {
        const auto out = output_dir(cmp_out);
        if (out.empty()) throw UsageError("compare: --out is required");
        const auto r = cli::cmd_compare({cli::load_config(cmp_cfg), out, false});
        for (const auto& row : r.rows) {
            std::cout << row.method << (row.ok ? " ssim " + std::to_string(row.ssim) : " FAILED: " + row.error) << "\n";
        }
        if (!r.all_ok()) return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const seqcond::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const seqcond::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
