#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actuforge/mesh.hpp"
#include "actuforge/render.hpp"
#include "actuforge/rng.hpp"
#include "actuforge/sdf.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using namespace af::geo;

namespace {
constexpr double kPi = 3.14159265358979323846;

SdfGrid sphere_grid(float r, int res, float extent = 1.0f) {
    return discretize(sdf_sphere(r), res, extent, 3.0f * extent / static_cast<float>(res));
}
}  // namespace

TEST_CASE("primitive SDFs are exact") {
    auto sph = sdf_sphere(1.0f);
    CHECK(sph({0, 0, 0}) == doctest::Approx(-1.0f));
    CHECK(sph({2, 0, 0}) == doctest::Approx(1.0f));

    auto box = sdf_box({1, 1, 1});
    CHECK(box({1, 1, 1}) == doctest::Approx(0.0f));       // corner
    CHECK(box({0, 0, 0}) == doctest::Approx(-1.0f));      // center
    CHECK(box({2, 1, 1}) == doctest::Approx(1.0f));       // face offset

    auto cyl = sdf_cylinder(0.5f, 1.0f);
    CHECK(cyl({0, 0, 0}) == doctest::Approx(-0.5f));
    CHECK(cyl({1.0f, 0, 0}) == doctest::Approx(0.5f));

    auto tor = sdf_torus(1.0f, 0.25f);
    CHECK(tor({1, 0, 0}) == doctest::Approx(-0.25f));
    CHECK(tor({0, 0, 0}) == doctest::Approx(0.75f));

    auto cap = sdf_capsule({0, 0, -0.5f}, {0, 0, 0.5f}, 0.25f);
    CHECK(cap({0, 0, 0}) == doctest::Approx(-0.25f));
    CHECK(cap({0, 0, 1.0f}) == doctest::Approx(0.25f));

    CHECK_THROWS_AS(sdf_sphere(-1.0f), std::runtime_error);
    CHECK_THROWS_AS(sdf_torus(1.0f, 0.0f), std::runtime_error);
}

TEST_CASE("csg operations") {
    auto a = sdf_sphere(2.0f);
    auto b = sdf_sphere(1.0f);

    auto u = csg_union(a, a);
    for (Vec3 p : {Vec3{0, 0, 0}, Vec3{1, 2, 3}, Vec3{0.5f, -0.25f, 0}})
        CHECK(u(p) == doctest::Approx(a(p)));  // idempotence

    auto hollow = csg_subtract(a, b);
    CHECK(hollow({0, 0, 0}) == doctest::Approx(1.0f));   // max(-2, +1)
    CHECK(hollow({1.5f, 0, 0}) == doctest::Approx(-0.5f));

    auto su = csg_smooth_union(a, b, 0.0f);
    for (Vec3 p : {Vec3{0, 0, 0}, Vec3{3, 0, 0}, Vec3{1.5f, 0.5f, 0}})
        CHECK(su(p) == doctest::Approx(std::min(a(p), b(p))));

    auto inter = csg_intersect(a, b);
    CHECK(inter({0, 0, 0}) == doctest::Approx(-1.0f));
}

TEST_CASE("discretize: samples, clamping, convergence") {
    float extent = 1.0f;
    auto g = discretize(sdf_sphere(0.4f), 32, extent, 3.0f / 32.0f);
    CHECK(g.at(16, 16, 16) < 0.0f);
    CHECK(g.at(0, 0, 0) == doctest::Approx(3.0f / 32.0f));  // corner clamped to +tau

    // tau-clamping preserves signs everywhere
    auto g_hi_tau = discretize(sdf_sphere(0.4f), 32, extent, 10.0f);
    for (size_t i = 0; i < g.values.size(); ++i)
        CHECK((g.values[i] <= 0.0f) == (g_hi_tau.values[i] <= 0.0f));

    CHECK_THROWS_AS(discretize(sdf_sphere(0.4f), 4, extent, 0.1f), std::runtime_error);

    // refinement shrinks trilinear reconstruction error roughly linearly
    auto err = [&](int res) {
        auto grid = discretize(sdf_sphere(0.35f), res, extent, 10.0f);
        af::Rng rng(42);
        double worst = 0.0;
        for (int i = 0; i < 2000; ++i) {
            Vec3 p{static_cast<float>(rng.uniform(-0.3, 0.3)),
                   static_cast<float>(rng.uniform(-0.3, 0.3)),
                   static_cast<float>(rng.uniform(-0.3, 0.3))};
            double analytic = length(p) - 0.35;
            worst = std::max(worst, std::abs(grid.sample(p) - analytic));
        }
        return worst;
    };
    CHECK(err(64) < 0.6 * err(32));
}

TEST_CASE("occupancy and volumetric IoU") {
    auto g = sphere_grid(0.25f, 64);
    auto occ = occupancy(g);
    double frac = static_cast<double>(occ.count()) / static_cast<double>(occ.bits.size());
    double analytic = kPi / 6.0 * std::pow(2.0 * 0.25, 3);  // sphere volume fraction
    CHECK(frac == doctest::Approx(analytic).epsilon(0.02));

    // idempotent re-threshold
    auto occ2 = occupancy(g);
    CHECK(occ.bits == occ2.bits);

    // all-positive grid -> empty
    auto pos = discretize(translate(sdf_sphere(0.2f), {10, 0, 0}), 16, 1.0f, 0.5f);
    CHECK(occupancy(pos).count() == 0);

    CHECK(volumetric_iou(occ, occ) == doctest::Approx(1.0));

    auto left = discretize(translate(sdf_sphere(0.15f), {-0.25f, 0, 0}), 64, 1.0f, 0.1f);
    auto right = discretize(translate(sdf_sphere(0.15f), {0.25f, 0, 0}), 64, 1.0f, 0.1f);
    CHECK(volumetric_iou(occupancy(left), occupancy(right)) == doctest::Approx(0.0));

    // both empty -> 1
    CHECK(volumetric_iou(occupancy(pos), occupancy(pos)) == doctest::Approx(1.0));

    // two cubes offset by half a side -> exactly 1/3 in the continuum
    auto c1 = discretize(sdf_box({0.26f, 0.26f, 0.26f}), 64, 2.0f, 0.2f);
    auto c2 = discretize(translate(sdf_box({0.26f, 0.26f, 0.26f}), {0.26f, 0, 0}), 64, 2.0f, 0.2f);
    CHECK(volumetric_iou(occupancy(c1), occupancy(c2)) == doctest::Approx(1.0 / 3.0).epsilon(0.06));

    OccupancyGrid wrong;
    wrong.resolution = 32;
    wrong.bits.assign(32 * 32 * 32, 0);
    CHECK_THROWS_WITH_AS(volumetric_iou(occ, wrong), doctest::Contains("mismatch"),
                         std::runtime_error);
}

TEST_CASE("IoU symmetry and erosion monotonicity") {
    auto a = occupancy(sphere_grid(0.3f, 32));
    auto b = occupancy(sphere_grid(0.25f, 32));
    CHECK(volumetric_iou(a, b) == doctest::Approx(volumetric_iou(b, a)));

    // eroding one operand (smaller sphere) reduces IoU monotonically
    auto c = occupancy(sphere_grid(0.2f, 32));
    CHECK(volumetric_iou(a, b) > volumetric_iou(a, c));
}

TEST_CASE("marching cubes: sphere volume, manifoldness, Euler characteristic") {
    float r = 0.35f;
    auto g = sphere_grid(r, 64);
    auto mesh = marching_cubes(g);
    REQUIRE(mesh.faces.size() > 100);

    double vol = mesh_volume(mesh);
    double analytic = 4.0 / 3.0 * kPi * std::pow(r, 3);
    CHECK(vol == doctest::Approx(analytic).epsilon(0.02));

    CHECK(edge_manifold(mesh));

    // closed genus-0 surface: V - E + F = 2, every edge on exactly 2 faces
    std::set<std::pair<int, int>> edges;
    for (auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k)
            edges.insert({std::min(f[k], f[(k + 1) % 3]), std::max(f[k], f[(k + 1) % 3])});
    std::set<int> used_vertices;
    for (auto& f : mesh.faces)
        for (int v : f) used_vertices.insert(v);
    long long euler = static_cast<long long>(used_vertices.size()) -
                      static_cast<long long>(edges.size()) +
                      static_cast<long long>(mesh.faces.size());
    CHECK(euler == 2);

    // unit normals pointing toward positive SDF (outward for a sphere)
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        CHECK(length(mesh.face_normals[i]) == doctest::Approx(1.0f).epsilon(1e-6));
        Vec3 centroid = (mesh.vertices[mesh.faces[i][0]] + mesh.vertices[mesh.faces[i][1]] +
                         mesh.vertices[mesh.faces[i][2]]) * (1.0f / 3.0f);
        CHECK(dot(mesh.face_normals[i], centroid) > 0.0f);
    }
}

TEST_CASE("marching cubes: torus Euler characteristic is 0") {
    auto f = sdf_torus(0.28f, 0.1f);
    auto g = discretize(f, 64, 1.0f, 3.0f / 64.0f);
    auto mesh = marching_cubes(g);
    std::set<std::pair<int, int>> edges;
    for (auto& fc : mesh.faces)
        for (int k = 0; k < 3; ++k)
            edges.insert({std::min(fc[k], fc[(k + 1) % 3]), std::max(fc[k], fc[(k + 1) % 3])});
    std::set<int> used;
    for (auto& fc : mesh.faces)
        for (int v : fc) used.insert(v);
    long long euler = static_cast<long long>(used.size()) - static_cast<long long>(edges.size()) +
                      static_cast<long long>(mesh.faces.size());
    CHECK(euler == 0);
    CHECK(edge_manifold(mesh));
    // analytic torus volume 2 pi^2 R r^2
    CHECK(mesh_volume(mesh) ==
          doctest::Approx(2.0 * kPi * kPi * 0.28 * 0.1 * 0.1).epsilon(0.03));
}

TEST_CASE("marching cubes: volume converges with order >= 1") {
    float r = 0.3f;
    double analytic = 4.0 / 3.0 * kPi * std::pow(r, 3);
    double e32 = std::abs(mesh_volume(marching_cubes(sphere_grid(r, 32))) - analytic);
    double e64 = std::abs(mesh_volume(marching_cubes(sphere_grid(r, 64))) - analytic);
    CHECK(e64 < e32 / 2.0 + 1e-6);
}

TEST_CASE("marching cubes: sign flip flips normals; single-sign errors") {
    auto g = sphere_grid(0.3f, 32);
    auto mesh = marching_cubes(g);
    auto neg = g;
    for (auto& v : neg.values) v = -v;
    auto flipped = marching_cubes(neg);
    REQUIRE(flipped.faces.size() == mesh.faces.size());
    // normals now point inward
    for (size_t i = 0; i < flipped.faces.size(); ++i) {
        Vec3 centroid = (flipped.vertices[flipped.faces[i][0]] +
                         flipped.vertices[flipped.faces[i][1]] +
                         flipped.vertices[flipped.faces[i][2]]) * (1.0f / 3.0f);
        CHECK(dot(flipped.face_normals[i], centroid) < 0.0f);
    }

    SdfGrid all_pos;
    all_pos.resolution = 8;
    all_pos.extent = 1.0f;
    all_pos.tau = 0.1f;
    all_pos.values.assign(512, 0.1f);
    CHECK_THROWS_WITH_AS(marching_cubes(all_pos), doctest::Contains("single-sign"),
                         std::runtime_error);
}

TEST_CASE("normal variation std: planar zero, cube right angles, refinement, rotation") {
    // planar grid of coplanar triangles
    TriMesh plane;
    int n = 4;
    for (int y = 0; y <= n; ++y)
        for (int x = 0; x <= n; ++x)
            plane.vertices.push_back({static_cast<float>(x), static_cast<float>(y), 0.0f});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            int v0 = y * (n + 1) + x, v1 = v0 + 1, v2 = v0 + n + 1, v3 = v2 + 1;
            plane.faces.push_back({v0, v1, v3});
            plane.faces.push_back({v0, v3, v2});
        }
    plane.face_normals.assign(plane.faces.size(), {0, 0, 1});
    CHECK(normal_variation_std(plane) == doctest::Approx(0.0).epsilon(1e-12));

    // axis-aligned cube: dihedral angles only 0 (same face) or pi/2
    TriMesh cube;
    cube.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    auto quad = [&](int a, int b, int c, int d) {
        cube.faces.push_back({a, b, c});
        cube.faces.push_back({a, c, d});
    };
    quad(0, 3, 2, 1);  // bottom, normal -z
    quad(4, 5, 6, 7);  // top
    quad(0, 1, 5, 4);  // front
    quad(2, 3, 7, 6);  // back
    quad(1, 2, 6, 5);  // right
    quad(3, 0, 4, 7);  // left
    for (auto& f : cube.faces) {
        Vec3 nv = normalize(cross(cube.vertices[f[1]] - cube.vertices[f[0]],
                                  cube.vertices[f[2]] - cube.vertices[f[0]]));
        cube.face_normals.push_back(nv);
    }
    // enumerate adjacencies: every angle must be 0 or pi/2
    std::map<std::pair<int, int>, std::vector<int>> ef;
    for (size_t fi = 0; fi < cube.faces.size(); ++fi)
        for (int k = 0; k < 3; ++k) {
            auto& f = cube.faces[fi];
            int a = f[k], b = f[(k + 1) % 3];
            ef[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(fi));
        }
    for (auto& [e, fs] : ef) {
        if (fs.size() != 2) continue;
        float d = dot(cube.face_normals[fs[0]], cube.face_normals[fs[1]]);
        bool zero_or_right = std::abs(d - 1.0f) < 1e-6f || std::abs(d) < 1e-6f;
        CHECK(zero_or_right);
    }
    CHECK(normal_variation_std(cube) > 0.0);

    // sphere refinement: higher resolution gives strictly smaller std
    double s32 = normal_variation_std(marching_cubes(sphere_grid(0.35f, 32)));
    double s64 = normal_variation_std(marching_cubes(sphere_grid(0.35f, 64)));
    CHECK(s64 < s32);

    // rigid rotation invariance
    auto mesh = marching_cubes(sphere_grid(0.3f, 32));
    double base = normal_variation_std(mesh);
    TriMesh rot = mesh;
    const double ca = std::cos(0.7), sa = std::sin(0.7), cb = std::cos(0.3), sb = std::sin(0.3);
    for (auto& v : rot.vertices) {
        double x = v.x * ca - v.y * sa, y = v.x * sa + v.y * ca, z = v.z;
        double x2 = x * cb - z * sb, z2 = x * sb + z * cb;
        v = {static_cast<float>(x2), static_cast<float>(y), static_cast<float>(z2)};
    }
    CHECK(std::abs(normal_variation_std(rot) - base) < 1e-6);

    // error path: no adjacent faces
    TriMesh lone;
    lone.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    lone.faces = {{0, 1, 2}};
    lone.face_normals = {{0, 0, 1}};
    CHECK_THROWS_WITH_AS(normal_variation_std(lone), doctest::Contains("adjacent"),
                         std::runtime_error);
}

TEST_CASE("render views: empty, symmetry, count, determinism") {
    SdfGrid empty;
    empty.resolution = 16;
    empty.extent = 1.0f;
    empty.tau = 0.2f;
    empty.values.assign(16 * 16 * 16, 0.2f);
    auto imgs = render_views(empty, 4, {30.0f, -30.0f}, 32);
    CHECK(imgs.size() == 8);
    for (auto& img : imgs)
        for (float p : img.pixels) CHECK(p == 0.0f);

    // sphere: rotational symmetry across azimuths (fine grid keeps the
    // trilinear reconstruction error below the shading tolerance)
    auto g = sphere_grid(0.35f, 128);
    auto views = render_views(g, 6, {30.0f}, 64);
    REQUIRE(views.size() == 6);
    float max_diff = 0.0f;
    for (size_t v = 1; v < views.size(); ++v)
        for (size_t i = 0; i < views[0].pixels.size(); ++i)
            max_diff = std::max(max_diff, std::abs(views[v].pixels[i] - views[0].pixels[i]));
    CHECK(max_diff < 1e-3f);

    auto views24 = render_views(g, 12, {30.0f, -30.0f}, 32);
    CHECK(views24.size() == 24);

    auto again = render_views(g, 6, {30.0f}, 64);
    for (size_t v = 0; v < views.size(); ++v) CHECK(views[v].pixels == again[v].pixels);

    CHECK_THROWS_AS(render_views(g, 0, {30.0f}, 32), std::runtime_error);
}

TEST_CASE("file round-trips: AFSD grid, OBJ, PGM") {
    auto g = sphere_grid(0.3f, 16);
    save_grid("t.afsd", g);
    auto g2 = load_grid("t.afsd");
    CHECK(g2.resolution == g.resolution);
    CHECK(g2.extent == g.extent);
    CHECK(g2.tau == g.tau);
    CHECK(g2.values == g.values);
    std::remove("t.afsd");

    auto mesh = marching_cubes(g);
    save_obj("t.obj", mesh);
    std::ifstream is("t.obj");
    std::string line;
    int v_count = 0, f_count = 0, vn_count = 0;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) v_count++;
        if (line.rfind("vn ", 0) == 0) vn_count++;
        if (line.rfind("f ", 0) == 0) f_count++;
    }
    CHECK(v_count == static_cast<int>(mesh.vertices.size()));
    CHECK(f_count == static_cast<int>(mesh.faces.size()));
    CHECK(vn_count == static_cast<int>(mesh.face_normals.size()));
    std::remove("t.obj");

    RenderImage img;
    img.width = 4;
    img.height = 2;
    img.pixels = {0.0f, 0.5f, 1.0f, 0.25f, 0.1f, 0.9f, 0.3f, 0.7f};
    save_pgm("t.pgm", img);
    std::ifstream ps("t.pgm", std::ios::binary);
    std::string header;
    std::getline(ps, header);
    CHECK(header == "P5");
    std::remove("t.pgm");
}
