#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "actuforge/common.hpp"

// SDF construction and CSG, grid discretization, occupancy and volumetric IoU.
// All distances are in model units; grids are cubes centered on the origin.

namespace af::geo {

struct Vec3 {
    float x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, float s) { return {a.x * s, a.y * s, a.z * s}; }
inline float dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline float length(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(Vec3 a) {
    float l = length(a);
    return l > 0 ? a * (1.0f / l) : Vec3{0, 0, 0};
}

using SdfFn = std::function<float(Vec3)>;

// exact signed distances (torus included); axes: cylinders/tori around z
SdfFn sdf_sphere(float radius);
SdfFn sdf_box(Vec3 half_extents);
SdfFn sdf_cylinder(float radius, float half_height);
SdfFn sdf_torus(float major_radius, float minor_radius);
SdfFn sdf_capsule(Vec3 a, Vec3 b, float radius);

SdfFn translate(SdfFn f, Vec3 offset);
// helical twist around z: rotation angle = rate * z (radians per unit length)
SdfFn twist_z(SdfFn f, float rate);

SdfFn csg_union(SdfFn a, SdfFn b);
SdfFn csg_intersect(SdfFn a, SdfFn b);
SdfFn csg_subtract(SdfFn a, SdfFn b);
// polynomial smooth union with blend radius k; k <= 0 degenerates to union
SdfFn csg_smooth_union(SdfFn a, SdfFn b, float k);

struct SdfGrid {
    int resolution = 0;
    float extent = 1.0f;  // physical side length
    float tau = 0.0f;     // truncation band
    std::vector<float> values;  // x-fastest order, negative inside

    float cell_width() const { return extent / static_cast<float>(resolution); }
    int64_t index(int x, int y, int z) const {
        return (static_cast<int64_t>(z) * resolution + y) * resolution + x;
    }
    float at(int x, int y, int z) const { return values[index(x, y, z)]; }
    float& at(int x, int y, int z) { return values[index(x, y, z)]; }
    Vec3 cell_center(int x, int y, int z) const {
        float r = static_cast<float>(resolution);
        return {extent * ((x + 0.5f) / r - 0.5f), extent * ((y + 0.5f) / r - 0.5f),
                extent * ((z + 0.5f) / r - 0.5f)};
    }
    // trilinear interpolation over cell centers; coordinates clamped to the grid
    float sample(Vec3 p) const;
};

SdfGrid discretize(const SdfFn& f, int resolution, float extent, float tau);

struct OccupancyGrid {
    int resolution = 0;
    std::vector<uint8_t> bits;  // 1 = occupied (sdf <= 0)
    int64_t count() const;
};

OccupancyGrid occupancy(const SdfGrid& g);

// |a AND b| / |a OR b|; both-empty defined as 1
double volumetric_iou(const OccupancyGrid& a, const OccupancyGrid& b);

// AFSD file: magic "AFSD", version u32, resolution u32, extent f32, tau f32,
// then resolution^3 little-endian f32 values in x-fastest order.
void save_grid(const std::string& path, const SdfGrid& g);
SdfGrid load_grid(const std::string& path);

}  // namespace af::geo
