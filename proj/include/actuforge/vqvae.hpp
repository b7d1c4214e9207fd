#pragma once

#include <string>
#include <vector>

#include "actuforge/dataset.hpp"
#include "actuforge/nn.hpp"
#include "actuforge/sdf.hpp"

// 3D vector-quantized autoencoder over truncated SDF grids. Grids are
// normalized to [-1,1] by tau; the encoder downsamples by 4 into a
// [latent_dim, R/4, R/4, R/4] pre-quantization latent; quantization snaps each
// spatial site to its nearest codebook row with a straight-through gradient;
// the decoder mirrors the encoder and ends in tanh.

namespace af::vq {

struct VqVaeConfig {
    int resolution = 32;
    float extent = 1.0f;
    float tau = 3.0f / 32.0f;
    int base_channels = 8;
    int latent_dim = 3;
    int codebook_size = 256;
    float beta = 0.25f;  // commitment weight
    int groups = 8;

    int latent_extent() const { return resolution / 4; }
};

struct LatentCode {
    Tensor pre_quant;          // [D,S,S,S]
    Tensor quantized;          // [D,S,S,S]; backward passes straight through
    std::vector<int> indices;  // S^3 codebook rows, site-major
    Tensor selected;           // [S^3, D] gathered codebook rows (loss terms)
};

struct VqVaeModel {
    VqVaeConfig cfg;

    Conv3dLayer enc_in;
    Conv3dLayer enc_down1;
    ResBlock3d enc_res1;
    Conv3dLayer enc_down2;
    ResBlock3d enc_res2;
    GroupNormLayer enc_norm;
    Conv3dLayer enc_out;

    Conv3dLayer dec_in;
    ResBlock3d dec_res1;
    ConvTranspose3dLayer dec_up1;
    ResBlock3d dec_res2;
    ConvTranspose3dLayer dec_up2;
    Conv3dLayer dec_out;

    Parameter codebook;  // [K, D]

    VqVaeModel() = default;
    VqVaeModel(const VqVaeConfig& cfg_, uint64_t seed);

    std::vector<Parameter*> parameters();

    // normalized tensor paths (values in [-1,1])
    Tensor encode_tensor(const Tensor& x) const;   // [1,R,R,R] -> [D,S,S,S]
    Tensor decode_tensor(const Tensor& zq) const;  // [D,S,S,S] -> [1,R,R,R]

    Tensor grid_to_tensor(const geo::SdfGrid& g) const;  // divide by tau
    geo::SdfGrid tensor_to_grid(const Tensor& y) const;  // scale by tau
};

// nearest codebook row per spatial site (ties take the lowest index);
// quantized output is wired for the straight-through estimator
LatentCode quantize(const Tensor& pre_quant, const Parameter& codebook);

// L = mean((x-xhat)^2) + mean_site(|sg[z_e]-e|^2) + beta * mean_site(|z_e-sg[e]|^2)
Tensor vq_loss(const Tensor& x, const Tensor& xhat, const Tensor& pre_quant,
               const Tensor& selected, float beta);

Tensor encode(const VqVaeModel& model, const geo::SdfGrid& grid);
geo::SdfGrid decode(const VqVaeModel& model, const Tensor& quantized);

geo::SdfGrid reconstruct(const VqVaeModel& model, const geo::SdfGrid& grid);

struct VqTrainConfig {
    int epochs = 150;
    float lr = 1e-3f;
    int batch = 4;
    uint64_t seed = 0;
    std::string log_path;      // newline-delimited JSON; empty disables
    std::string phase = "train";  // tag written into log lines
};

struct VqEpochStats {
    int epoch = 0;
    double recon_mse = 0.0;
    double vq_term = 0.0;
    double val_iou = 0.0;
    int dead_refreshed = 0;
};

// optimizes the VQ objective with Adam; aborts on non-finite loss
std::vector<VqEpochStats> train_vqvae(VqVaeModel& model, const data::Dataset& ds,
                                      const VqTrainConfig& cfg);

// mean volumetric IoU of reconstructions over a split (delegates to geometry)
double reconstruction_iou(const VqVaeModel& model, const data::Dataset& ds,
                          const std::string& split = "val");

// checkpoint = <prefix>.aftn tensors + <prefix>.json config sidecar
void save_vqvae(VqVaeModel& model, const std::string& prefix);
VqVaeModel load_vqvae(const std::string& prefix);

}  // namespace af::vq
