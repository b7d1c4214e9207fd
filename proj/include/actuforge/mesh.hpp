#pragma once

#include <array>
#include <string>
#include <vector>

#include "actuforge/sdf.hpp"

namespace af::geo {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> face_normals;  // unit, outward (toward positive SDF)
};

// Isosurface extraction with a 256-case table and linear edge interpolation.
// The table resolves ambiguous faces by separating inside corners, which keeps
// the output watertight and edge-manifold for surfaces away from the grid
// boundary. Errors if the grid has no zero crossing.
TriMesh marching_cubes(const SdfGrid& grid, float iso = 0.0f);

// signed volume via divergence theorem; exact for watertight meshes
double mesh_volume(const TriMesh& mesh);

// population standard deviation of the angle between normals of every pair of
// edge-adjacent faces, in radians
double normal_variation_std(const TriMesh& mesh);

// every edge used by at most two faces
bool edge_manifold(const TriMesh& mesh);

void save_obj(const std::string& path, const TriMesh& mesh, bool with_normals = true);

}  // namespace af::geo
