#pragma once

#include <optional>
#include <string>
#include <vector>

#include "actuforge/config.hpp"
#include "actuforge/dataset.hpp"
#include "actuforge/diffusion.hpp"
#include "actuforge/metrics.hpp"
#include "actuforge/vqvae.hpp"

// Orchestration shared by the CLI and the acceptance harness: dataset
// generation, the two training stages per ablation arm, sampling, and the
// four-arm evaluation table.

namespace af::pipe {

struct Arm {
    bool augmentation = true;
    bool transfer = true;

    std::string id() const {
        return str("aug", augmentation ? 1 : 0, "_tl", transfer ? 1 : 0);
    }
};

inline const Arm kArms[4] = {{false, false}, {false, true}, {true, false}, {true, true}};

// parses "aug=true,transfer=false" (also 1/0, yes/no)
Arm parse_arm(const std::string& text);

// directory layout helpers
std::string data_dir(const RunConfig& cfg, const std::string& which);  // actuators|base|generic
std::string arm_dir(const RunConfig& cfg, const Arm& arm);

// writes the actuator corpus (base and augmented), the generic pretraining
// corpus, and the prompt file; byte-identical across reruns with one seed
void cmd_gen_data(const RunConfig& cfg);

// trains one arm's VQ-VAE (transfer arms pretrain on the generic corpus
// first); saves checkpoint + ndjson log; returns validation IoU on the shared
// benchmark split (augmented-corpus val)
double cmd_train_vqvae(const RunConfig& cfg, const Arm& arm);

// trains the denoiser + text encoder on the arm's corpus over the frozen
// VQ-VAE; saves checkpoint + log
void cmd_train_ldm(const RunConfig& cfg, const Arm& arm);

// samples one shape per (prompt, seed index); writes AFSD grids and OBJ
// meshes named by prompt hash and seed; returns grid paths
std::vector<std::string> cmd_sample(const RunConfig& cfg, const Arm& arm,
                                    const std::vector<std::string>& prompts,
                                    uint64_t seed_base, const std::string& subdir = "samples");

// evaluates one generated directory against the real corpus
metrics::MetricReport cmd_eval_single(const RunConfig& cfg, const std::string& gen_dir,
                                      std::optional<metrics::ArmLabel> arm);

struct ComparisonRow {
    Arm arm;
    bool present = false;
    double val_iou = 0.0;
    metrics::MetricReport report;
};

// per-arm reports plus the aligned comparison table; returns false if any
// metric is missing or non-finite
bool cmd_eval_compare(const RunConfig& cfg, std::vector<ComparisonRow>* rows_out = nullptr);

// full pipeline for all four arms: train, sample, evaluate, emit the table
bool cmd_ablation(const RunConfig& cfg);

// seeded prompts drawn from the dataset's template distribution
std::vector<std::string> default_prompts(const RunConfig& cfg, int count, uint64_t seed);

std::string render_comparison_table(const std::vector<ComparisonRow>& rows);

}  // namespace af::pipe
