#pragma once

#include <optional>
#include <string>
#include <vector>

#include "actuforge/nn.hpp"
#include "actuforge/render.hpp"
#include "actuforge/sdf.hpp"
#include "actuforge/vqvae.hpp"

// Distribution-level evaluation: Gaussian feature statistics, Frechet distance
// via a symmetrized matrix square root, rendered FD over multi-view images
// with a fixed seeded conv feature extractor, and the 3D Frechet distance over
// pooled pre-quantization VQ-VAE features.

namespace af::metrics {

struct GaussianStats {
    std::vector<double> mu;   // [F]
    std::vector<double> cov;  // [F*F], symmetric, 1/(n-1) normalization
    int n = 0;

    int dim() const { return static_cast<int>(mu.size()); }
};

// sample mean and covariance; requires n >= 2 rows
GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features);

// |mu_r - mu_g|^2 + Tr(C_r + C_g - 2 (C_r C_g)^(1/2)), square root computed
// from the symmetric eigendecomposition of C_r^(1/2) C_g C_r^(1/2);
// eps is added to both covariance diagonals for conditioning
double frechet_distance(const GaussianStats& r, const GaussianStats& g, double eps = 0.0);

// cyclic Jacobi for symmetric matrices; returns eigenvalues ascending and
// fills eigenvectors (column-major: vec k at vectors[i*n+k]) when requested
std::vector<double> symmetric_eig(const std::vector<double>& a, int n,
                                  std::vector<double>* vectors = nullptr);

struct RenderedExtractorConfig {
    uint64_t seed = 2024;  // published seed: features are fixed, not trained
    int feature_dim = 64;
    int image_size = 64;
};

struct RenderedFeatureExtractor {
    RenderedExtractorConfig cfg;
    Conv3dLayer c1, c2, c3, c4;

    explicit RenderedFeatureExtractor(const RenderedExtractorConfig& cfg_);
    std::vector<double> extract(const geo::RenderImage& img) const;
};

struct ViewConfig {
    int n_azimuth = 12;
    std::vector<float> elevations = {30.0f, -30.0f};
    int image_size = 64;

    int views_per_shape() const { return n_azimuth * static_cast<int>(elevations.size()); }
};

// renders both sets, extracts per-image features, compares Gaussian fits;
// requires enough renders per set for a usable covariance (>= F/4)
double rendered_fd(const std::vector<geo::SdfGrid>& real, const std::vector<geo::SdfGrid>& gen,
                   const RenderedFeatureExtractor& extractor, const ViewConfig& views,
                   double eps = 1e-6);

// encoder pre-quant features, 2^3 average pooled and flattened
double fd3d(const std::vector<geo::SdfGrid>& real, const std::vector<geo::SdfGrid>& gen,
            const vq::VqVaeModel& encoder, double eps = 1e-6);

std::vector<double> fd3d_features(const geo::SdfGrid& grid, const vq::VqVaeModel& encoder);

struct ArmLabel {
    bool augmentation = false;
    bool transfer = false;
};

struct MetricReport {
    double normal_std = 0.0;
    double rendered_fd = 0.0;
    double fd3d = 0.0;
    std::optional<ArmLabel> arm;
    int real_count = 0;
    int gen_count = 0;
    int empty_meshes = 0;  // generated grids with no surface, skipped for normal_std
    RenderedExtractorConfig extractor;
    ViewConfig views;
    double eps = 1e-6;
};

MetricReport eval_report(const std::vector<geo::SdfGrid>& real,
                         const std::vector<geo::SdfGrid>& gen, const vq::VqVaeModel& encoder,
                         const RenderedExtractorConfig& extractor_cfg, const ViewConfig& views,
                         std::optional<ArmLabel> arm = std::nullopt, double eps = 1e-6);

void save_report(const MetricReport& report, const std::string& path);
MetricReport load_report(const std::string& path);

}  // namespace af::metrics
