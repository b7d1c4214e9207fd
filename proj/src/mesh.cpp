#include "actuforge/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

namespace af::geo {

namespace {

// Cube corners: bit0 -> x, bit1 -> y, bit2 -> z.
// Lattice edges: (base corner, axis). 12 total.
struct CubeEdge {
    int a, b;    // corner indices
    int base;    // corner with the axis bit unset
    int axis;
};

std::array<CubeEdge, 12> make_edges() {
    std::array<CubeEdge, 12> edges{};
    int n = 0;
    for (int c = 0; c < 8; ++c)
        for (int axis = 0; axis < 3; ++axis) {
            int bit = 1 << axis;
            if (!(c & bit)) edges[n++] = CubeEdge{c, c | bit, c, axis};
        }
    return edges;
}

const std::array<CubeEdge, 12> kEdges = make_edges();

int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e)
        if ((kEdges[e].a == a && kEdges[e].b == b) || (kEdges[e].a == b && kEdges[e].b == a))
            return e;
    return -1;
}

// faces as cyclic corner quads
const int kFaces[6][4] = {
    {0, 2, 6, 4},  // x = 0
    {1, 3, 7, 5},  // x = 1
    {0, 1, 5, 4},  // y = 0
    {2, 3, 7, 6},  // y = 1
    {0, 1, 3, 2},  // z = 0
    {4, 5, 7, 6},  // z = 1
};

struct Corner3 {
    double x, y, z;
};
Corner3 corner_pos(int c) {
    return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
            static_cast<double>((c >> 2) & 1)};
}

// Per-case triangle lists (edge indices), generated once from the face-contour
// rule: on each face, iso-contour segments connect cut edges so that inside
// corners are separated; segments chain into closed loops which are then
// fan-triangulated with outward orientation.
struct CaseTable {
    std::vector<std::array<int, 3>> tris[256];
};

CaseTable build_case_table() {
    CaseTable table;
    for (int mask = 1; mask < 255; ++mask) {
        auto inside = [&](int c) { return (mask >> c) & 1; };

        // collect contour segments (pairs of cut-edge ids) per face
        std::vector<std::array<int, 2>> segs;
        for (const auto& f : kFaces) {
            int m4 = 0;
            for (int i = 0; i < 4; ++i)
                if (inside(f[i])) m4 |= 1 << i;
            if (m4 == 0 || m4 == 15) continue;
            auto fedge = [&](int i, int j) { return edge_between(f[i & 3], f[j & 3]); };
            int pc = __builtin_popcount(static_cast<unsigned>(m4));
            if (pc == 1 || pc == 3) {
                int lone = -1;
                for (int i = 0; i < 4; ++i) {
                    bool is_lone = (pc == 1) ? inside(f[i]) : !inside(f[i]);
                    if (is_lone) lone = i;
                }
                segs.push_back({fedge(lone - 1 + 4, lone), fedge(lone, lone + 1)});
            } else {
                // two inside corners
                int first = -1;
                for (int i = 0; i < 4; ++i)
                    if (inside(f[i])) {
                        first = i;
                        break;
                    }
                if (inside(f[(first + 2) & 3]) && !inside(f[(first + 1) & 3])) {
                    // opposite corners: two segments, inside corners separated
                    int i = first, j = first + 2;
                    segs.push_back({fedge(i - 1 + 4, i), fedge(i, i + 1)});
                    segs.push_back({fedge(j - 1 + 4, j), fedge(j, j + 1)});
                } else {
                    // adjacent corners i, i+1
                    int i = first;
                    if (!inside(f[(first + 1) & 3])) i = (first + 3) & 3;  // wrap pair (3,0)
                    segs.push_back({fedge(i - 1 + 4, i), fedge(i + 1, i + 2)});
                }
            }
        }

        // chain segments into closed loops (every cut edge touches exactly two)
        std::vector<std::vector<int>> adj(12);
        for (size_t s = 0; s < segs.size(); ++s) {
            adj[segs[s][0]].push_back(static_cast<int>(s));
            adj[segs[s][1]].push_back(static_cast<int>(s));
        }
        std::vector<bool> used(segs.size(), false);
        for (size_t s0 = 0; s0 < segs.size(); ++s0) {
            if (used[s0]) continue;
            std::vector<int> loop;
            int cur_edge = segs[s0][0];
            size_t cur_seg = s0;
            while (true) {
                used[cur_seg] = true;
                loop.push_back(cur_edge);
                int next_edge = segs[cur_seg][0] == cur_edge ? segs[cur_seg][1] : segs[cur_seg][0];
                int next_seg = -1;
                for (int cand : adj[next_edge])
                    if (!used[cand]) next_seg = cand;
                cur_edge = next_edge;
                if (next_seg < 0) break;
                cur_seg = static_cast<size_t>(next_seg);
            }
            if (loop.size() < 3) continue;

            // orientation: Newell normal vs inside->outside vote of cut edges
            std::vector<Corner3> pts;
            for (int e : loop) {
                Corner3 pa = corner_pos(kEdges[e].a), pb = corner_pos(kEdges[e].b);
                pts.push_back({(pa.x + pb.x) / 2, (pa.y + pb.y) / 2, (pa.z + pb.z) / 2});
            }
            Corner3 nrm{0, 0, 0};
            for (size_t i = 0; i < pts.size(); ++i) {
                const Corner3& p = pts[i];
                const Corner3& q = pts[(i + 1) % pts.size()];
                nrm.x += (p.y - q.y) * (p.z + q.z);
                nrm.y += (p.z - q.z) * (p.x + q.x);
                nrm.z += (p.x - q.x) * (p.y + q.y);
            }
            Corner3 vote{0, 0, 0};
            for (int e : loop) {
                int ci = inside(kEdges[e].a) ? kEdges[e].a : kEdges[e].b;
                int co = inside(kEdges[e].a) ? kEdges[e].b : kEdges[e].a;
                Corner3 pi = corner_pos(ci), po = corner_pos(co);
                vote.x += po.x - pi.x;
                vote.y += po.y - pi.y;
                vote.z += po.z - pi.z;
            }
            if (nrm.x * vote.x + nrm.y * vote.y + nrm.z * vote.z < 0)
                std::reverse(loop.begin(), loop.end());
            for (size_t i = 1; i + 1 < loop.size(); ++i)
                table.tris[mask].push_back({loop[0], loop[i], loop[i + 1]});
        }
    }
    return table;
}

const CaseTable& case_table() {
    static const CaseTable table = build_case_table();
    return table;
}

}  // namespace

TriMesh marching_cubes(const SdfGrid& grid, float iso) {
    const int r = grid.resolution;
    require(r >= 2, "marching_cubes: grid too small");
    bool has_inside = false, has_outside = false;
    for (float v : grid.values) {
        if (v < iso) has_inside = true;
        if (v >= iso) has_outside = true;
        if (has_inside && has_outside) break;
    }
    require(has_inside && has_outside,
            "marching_cubes: grid is single-signed, surface is empty");

    const auto& table = case_table();
    TriMesh mesh;
    std::unordered_map<int64_t, int> edge_vertex;  // global lattice edge -> vertex id

    auto vertex_on_edge = [&](int cx, int cy, int cz, int e) {
        const CubeEdge& ce = kEdges[e];
        int bx = cx + (ce.base & 1), by = cy + ((ce.base >> 1) & 1), bz = cz + ((ce.base >> 2) & 1);
        int64_t key = ((static_cast<int64_t>(bz) * r + by) * r + bx) * 3 + ce.axis;
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        int ax = cx + (ce.a & 1), ay = cy + ((ce.a >> 1) & 1), az = cz + ((ce.a >> 2) & 1);
        int ox = cx + (ce.b & 1), oy = cy + ((ce.b >> 1) & 1), oz = cz + ((ce.b >> 2) & 1);
        float va = grid.at(ax, ay, az), vb = grid.at(ox, oy, oz);
        float t = (iso - va) / (vb - va);
        Vec3 pa = grid.cell_center(ax, ay, az), pb = grid.cell_center(ox, oy, oz);
        int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pa + (pb - pa) * t);
        edge_vertex.emplace(key, id);
        return id;
    };

    for (int cz = 0; cz + 1 < r; ++cz)
        for (int cy = 0; cy + 1 < r; ++cy)
            for (int cx = 0; cx + 1 < r; ++cx) {
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    float v = grid.at(cx + (c & 1), cy + ((c >> 1) & 1), cz + ((c >> 2) & 1));
                    if (v < iso) mask |= 1 << c;
                }
                if (mask == 0 || mask == 255) continue;
                for (const auto& tri : table.tris[mask]) {
                    int v0 = vertex_on_edge(cx, cy, cz, tri[0]);
                    int v1 = vertex_on_edge(cx, cy, cz, tri[1]);
                    int v2 = vertex_on_edge(cx, cy, cz, tri[2]);
                    if (v0 == v1 || v1 == v2 || v0 == v2) continue;
                    Vec3 n = cross(mesh.vertices[v1] - mesh.vertices[v0],
                                   mesh.vertices[v2] - mesh.vertices[v0]);
                    float len = length(n);
                    if (len < 1e-12f) continue;  // degenerate sliver
                    mesh.faces.push_back({v0, v1, v2});
                    mesh.face_normals.push_back(n * (1.0f / len));
                }
            }
    return mesh;
}

double mesh_volume(const TriMesh& mesh) {
    double vol = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3 &a = mesh.vertices[f[0]], &b = mesh.vertices[f[1]], &c = mesh.vertices[f[2]];
        vol += static_cast<double>(dot(a, cross(b, c)));
    }
    return std::abs(vol) / 6.0;
}

double normal_variation_std(const TriMesh& mesh) {
    // double-precision normals recomputed from vertices; atan2 keeps small
    // angles well-conditioned where acos would lose digits
    struct D3 {
        double x, y, z;
    };
    std::vector<D3> normals(mesh.faces.size());
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec3 &a = mesh.vertices[f[0]], &b = mesh.vertices[f[1]], &c = mesh.vertices[f[2]];
        double ux = b.x - a.x, uy = b.y - a.y, uz = b.z - a.z;
        double vx = c.x - a.x, vy = c.y - a.y, vz = c.z - a.z;
        D3 n{uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx};
        double l = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
        if (l > 0) {
            n.x /= l;
            n.y /= l;
            n.z /= l;
        }
        normals[fi] = n;
    }
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(fi));
        }
    }
    std::vector<double> angles;
    for (const auto& [edge, fs] : edge_faces) {
        if (fs.size() != 2) continue;
        const D3 &n1 = normals[fs[0]], &n2 = normals[fs[1]];
        double d = n1.x * n2.x + n1.y * n2.y + n1.z * n2.z;
        double cx = n1.y * n2.z - n1.z * n2.y;
        double cy = n1.z * n2.x - n1.x * n2.z;
        double cz = n1.x * n2.y - n1.y * n2.x;
        angles.push_back(std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), d));
    }
    require(!angles.empty(), "normal_variation_std: mesh has no adjacent faces");
    double m = 0.0;
    for (double a : angles) m += a;
    m /= static_cast<double>(angles.size());
    double var = 0.0;
    for (double a : angles) var += (a - m) * (a - m);
    var /= static_cast<double>(angles.size());  // population variance
    return std::sqrt(var);
}

bool edge_manifold(const TriMesh& mesh) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (++edge_count[{std::min(a, b), std::max(a, b)}] > 2) return false;
        }
    return true;
}

void save_obj(const std::string& path, const TriMesh& mesh, bool with_normals) {
    std::ofstream os(path);
    require(os.good(), str("cannot open OBJ file for writing: ", path));
    char buf[128];
    for (const auto& v : mesh.vertices) {
        snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
        os << buf;
    }
    if (with_normals) {
        for (const auto& n : mesh.face_normals) {
            snprintf(buf, sizeof(buf), "vn %.6f %.6f %.6f\n", n.x, n.y, n.z);
            os << buf;
        }
    }
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        if (with_normals) {
            snprintf(buf, sizeof(buf), "f %d//%zu %d//%zu %d//%zu\n", f[0] + 1, i + 1, f[1] + 1,
                     i + 1, f[2] + 1, i + 1);
        } else {
            snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        os << buf;
    }
    require(os.good(), str("write failed for OBJ file: ", path));
}

}  // namespace af::geo
