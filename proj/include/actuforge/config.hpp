#pragma once

#include <string>
#include <vector>

#include "actuforge/common.hpp"

// Run configuration: one JSON document with nested sections. Unknown keys are
// errors; the seed is mandatory (no entropy defaults).

namespace af::pipe {

struct DatasetSection {
    bool augment = true;
    int generic_count = 96;
    double split_ratio = 0.9;
};

struct VqVaeSection {
    int base_channels = 8;
    int codebook_size = 256;
    int latent_dim = 3;
    float beta = 0.25f;
    int epochs = 150;
    int pretrain_epochs = 80;
    float lr = 2e-3f;
    int batch = 4;
};

struct DiffusionSection {
    int timesteps = 400;
    double beta_start = 1e-4;
    double beta_end = 0.025;
    int epochs = 300;
    float lr = 2e-3f;
    int batch = 8;
    float cond_drop_p = 0.1f;
    int base_channels = 16;
};

struct SamplerSection {
    int steps = 0;  // 0 = full schedule
    float guidance = 3.0f;
    int count = 50;
};

struct EvalSection {
    int n_azimuth = 12;
    std::vector<float> elevations = {30.0f, -30.0f};
    int image_size = 64;
    uint64_t extractor_seed = 2024;
    int feature_dim = 64;
    double eps = 1e-6;
};

struct RunConfig {
    uint64_t seed = 0;
    int resolution = 32;
    std::string output_dir = "out";
    DatasetSection dataset;
    VqVaeSection vqvae;
    DiffusionSection diffusion;
    SamplerSection sampler;
    EvalSection eval;

    float tau() const { return 3.0f / static_cast<float>(resolution) * 1.0f; }

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

}  // namespace af::pipe
