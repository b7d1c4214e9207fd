#pragma once

#include <string>
#include <vector>

#include "actuforge/dataset.hpp"
#include "actuforge/nn.hpp"
#include "actuforge/textenc.hpp"
#include "actuforge/vqvae.hpp"

// Latent denoising diffusion over pre-quantization VQ-VAE latents: linear
// noise schedule, epsilon-prediction 3D U-Net with FiLM conditioning from
// (timestep + text) embeddings, classifier-free guidance training, ancestral
// sampler. Latents are standardized per channel before diffusion.

namespace af::diff {

struct NoiseSchedule {
    int steps = 0;                  // T
    std::vector<double> beta;       // [T+1], index 0 unused
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product, alpha_bar[0] = 1
};

// linear beta interpolation; requires 0 < beta_start <= beta_end < 1
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

inline constexpr int kDefaultT = 400;
inline constexpr double kDefaultBetaStart = 1e-4;
// chosen so alpha_bar(T) < 0.01 at T=400 (near-pure noise at the end)
inline constexpr double kDefaultBetaEnd = 0.025;

// closed-form forward process: z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps
std::vector<float> q_sample(const std::vector<float>& z0, int t, const std::vector<float>& eps,
                            const NoiseSchedule& s);

struct UNetConfig {
    int latent_dim = 3;
    int latent_extent = 8;
    int base_channels = 16;
    int embed_dim = 64;
    int groups = 8;
};

struct UNet3d {
    UNetConfig cfg;
    Linear time_l1, time_l2;
    Conv3dLayer in_conv;
    ResBlock3d down_r1;
    Conv3dLayer down1;
    ResBlock3d down_r2;
    Conv3dLayer down2;
    ResBlock3d mid;
    ConvTranspose3dLayer up1;
    ResBlock3d up_r1;
    ConvTranspose3dLayer up2;
    ResBlock3d up_r2;
    GroupNormLayer out_norm;
    Conv3dLayer out_conv;

    UNet3d() = default;
    UNet3d(const UNetConfig& cfg_, uint64_t seed);

    // z_t [D,S,S,S], timestep t in [1,T], cond [1,embed_dim] -> eps-hat
    Tensor forward(const Tensor& z_t, int t, const Tensor& cond) const;

    std::vector<Parameter*> parameters();
};

// sinusoidal timestep features, [1, dim]
Tensor timestep_embedding(int t, int dim);

struct LdmModel {
    UNet3d unet;
    text::TextEncoder text_encoder;
    text::Vocabulary vocab;
    NoiseSchedule schedule;
    std::vector<float> latent_mu, latent_sigma;  // per channel
};

struct LdmTrainConfig {
    int epochs = 60;
    float lr = 1e-3f;
    int batch = 8;
    uint64_t seed = 0;
    float cond_drop_p = 0.1f;
    int timesteps = kDefaultT;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;
    int base_channels = 16;
    std::string log_path;
    std::string phase = "ldm";
};

struct LdmEpochStats {
    int epoch = 0;
    double loss = 0.0;
};

// encodes the train split through the frozen VQ-VAE, standardizes latents,
// then trains the denoiser and the text encoder jointly on the eps objective
LdmModel train_ldm(const vq::VqVaeModel& vqvae, const data::Dataset& ds,
                   const LdmTrainConfig& cfg, std::vector<LdmEpochStats>* history = nullptr);

struct SamplerConfig {
    int steps = 0;  // 0 means the full schedule
    float guidance_scale = 3.0f;
    uint64_t seed = 0;
};

// ancestral sampling with classifier-free guidance, decoded through the
// VQ-VAE quantizer; deterministic in (weights, prompt, seed, config)
geo::SdfGrid sample_shape(const LdmModel& ldm, const vq::VqVaeModel& vqvae,
                          const std::string& prompt, const SamplerConfig& sampler);

// checkpoint = <prefix>.aftn tensors + <prefix>.json sidecar (config, schedule,
// latent statistics, vocabulary)
void save_ldm(LdmModel& model, const std::string& prefix);
LdmModel load_ldm(const std::string& prefix);

}  // namespace af::diff
