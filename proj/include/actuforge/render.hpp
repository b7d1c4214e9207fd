#pragma once

#include <string>
#include <vector>

#include "actuforge/sdf.hpp"

namespace af::geo {

struct RenderImage {
    int width = 0, height = 0;
    std::vector<float> pixels;  // grayscale in [0,1], row-major from top
};

// Orthographic sphere-traced renders of the trilinear SDF with Lambertian
// headlight shading; background 0. Azimuths evenly spaced over 360 degrees,
// one image per (azimuth, elevation). Deterministic.
std::vector<RenderImage> render_views(const SdfGrid& grid, int n_azimuth,
                                      const std::vector<float>& elevations_deg = {30.0f, -30.0f},
                                      int image_size = 64);

void save_pgm(const std::string& path, const RenderImage& img);

}  // namespace af::geo
