#include <cstdio>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "actuforge/pipeline.hpp"

// actuforge: dataset generation, two-stage training (VQ-VAE + latent
// diffusion), sampling, evaluation, and the 2x2 ablation harness, all driven
// by one JSON config.

namespace {

af::pipe::RunConfig load_config(const std::string& path, std::optional<uint64_t> seed,
                                const std::string& out_dir) {
    auto cfg = af::pipe::RunConfig::from_file(path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    return cfg;
}

std::vector<std::string> read_prompt_file(const std::string& path) {
    std::ifstream is(path);
    if (!is.good()) af::fail(af::str("cannot open prompt file: ", path));
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) prompts.push_back(line);
    if (prompts.empty()) af::fail(af::str("prompt file is empty: ", path));
    return prompts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"actuforge: text-to-shape latent diffusion for soft pneumatic actuators"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed_override;
    std::string arm_text = "aug=yes,transfer=yes";
    std::string prompt_file;
    std::vector<std::string> inline_prompts;
    std::string gen_dir;
    int sample_count = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--out", out_dir, "override the output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the actuator and pretraining corpora");
    add_common(gen);

    auto* tvq = app.add_subcommand("train-vqvae", "train one ablation arm's VQ-VAE");
    add_common(tvq);
    tvq->add_option("--arm", arm_text, "ablation arm, e.g. aug=yes,transfer=no");

    auto* tldm = app.add_subcommand("train-ldm", "train one arm's latent diffusion stage");
    add_common(tldm);
    tldm->add_option("--arm", arm_text, "ablation arm");

    auto* smp = app.add_subcommand("sample", "sample shapes from prompts");
    add_common(smp);
    smp->add_option("--arm", arm_text, "ablation arm");
    smp->add_option("--prompts", prompt_file, "newline-delimited prompt file");
    smp->add_option("--prompt", inline_prompts, "inline prompt (repeatable)");
    smp->add_option("--count", sample_count, "number of default prompts when none given");

    auto* evl = app.add_subcommand("eval", "evaluate generated shapes against the real corpus");
    add_common(evl);
    evl->add_option("--arm", arm_text, "arm label for single-directory mode");
    evl->add_option("--gen-dir", gen_dir, "single mode: directory of .afsd grids to evaluate");

    auto* abl = app.add_subcommand("ablation", "run the full 2x2 ablation end to end");
    add_common(abl);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            cmd_gen_data(load_config(config_path, seed_override, out_dir));
        } else if (tvq->parsed()) {
            auto cfg = load_config(config_path, seed_override, out_dir);
            cmd_train_vqvae(cfg, af::pipe::parse_arm(arm_text));
        } else if (tldm->parsed()) {
            auto cfg = load_config(config_path, seed_override, out_dir);
            cmd_train_ldm(cfg, af::pipe::parse_arm(arm_text));
        } else if (smp->parsed()) {
            auto cfg = load_config(config_path, seed_override, out_dir);
            auto arm = af::pipe::parse_arm(arm_text);
            std::vector<std::string> prompts = inline_prompts;
            if (!prompt_file.empty()) {
                auto more = read_prompt_file(prompt_file);
                prompts.insert(prompts.end(), more.begin(), more.end());
            }
            if (prompts.empty()) {
                int n = sample_count > 0 ? sample_count : cfg.sampler.count;
                prompts = af::pipe::default_prompts(cfg, n, af::Rng(cfg.seed).fork(4).seed());
            }
            auto paths = cmd_sample(cfg, arm, prompts, af::Rng(cfg.seed).fork(40).seed());
            std::printf("sample[%s]: wrote %zu grids\n", arm.id().c_str(), paths.size());
        } else if (evl->parsed()) {
            auto cfg = load_config(config_path, seed_override, out_dir);
            if (!gen_dir.empty()) {
                af::metrics::ArmLabel label;
                auto arm = af::pipe::parse_arm(arm_text);
                label.augmentation = arm.augmentation;
                label.transfer = arm.transfer;
                auto report = cmd_eval_single(cfg, gen_dir, label);
                std::string path = gen_dir + "/report.json";
                af::metrics::save_report(report, path);
                std::printf("eval: normal_std %.4f  rendered_fd %.4f  fd3d %.4f -> %s\n",
                            report.normal_std, report.rendered_fd, report.fd3d, path.c_str());
                bool finite = std::isfinite(report.normal_std) &&
                              std::isfinite(report.rendered_fd) && std::isfinite(report.fd3d);
                return finite ? 0 : 1;
            }
            return cmd_eval_compare(cfg) ? 0 : 1;
        } else if (abl->parsed()) {
            auto cfg = load_config(config_path, seed_override, out_dir);
            return cmd_ablation(cfg) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
