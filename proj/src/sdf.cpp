#include "actuforge/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace af::geo {

SdfFn sdf_sphere(float radius) {
    require(radius > 0, str("sdf_sphere: radius must be positive, got ", radius));
    return [radius](Vec3 p) { return length(p) - radius; };
}

SdfFn sdf_box(Vec3 half) {
    require(half.x > 0 && half.y > 0 && half.z > 0, "sdf_box: half extents must be positive");
    return [half](Vec3 p) {
        Vec3 q{std::abs(p.x) - half.x, std::abs(p.y) - half.y, std::abs(p.z) - half.z};
        Vec3 qp{std::max(q.x, 0.0f), std::max(q.y, 0.0f), std::max(q.z, 0.0f)};
        return length(qp) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0f);
    };
}

SdfFn sdf_cylinder(float radius, float half_height) {
    require(radius > 0 && half_height > 0, "sdf_cylinder: dimensions must be positive");
    return [radius, half_height](Vec3 p) {
        float dr = std::sqrt(p.x * p.x + p.y * p.y) - radius;
        float dz = std::abs(p.z) - half_height;
        float outside = std::sqrt(std::max(dr, 0.0f) * std::max(dr, 0.0f) +
                                  std::max(dz, 0.0f) * std::max(dz, 0.0f));
        return std::min(std::max(dr, dz), 0.0f) + outside;
    };
}

SdfFn sdf_torus(float major, float minor) {
    require(major > 0 && minor > 0, "sdf_torus: radii must be positive");
    return [major, minor](Vec3 p) {
        float qr = std::sqrt(p.x * p.x + p.y * p.y) - major;
        return std::sqrt(qr * qr + p.z * p.z) - minor;
    };
}

SdfFn sdf_capsule(Vec3 a, Vec3 b, float radius) {
    require(radius > 0, "sdf_capsule: radius must be positive");
    return [a, b, radius](Vec3 p) {
        Vec3 pa = p - a, ba = b - a;
        float denom = dot(ba, ba);
        float h = denom > 0 ? std::clamp(dot(pa, ba) / denom, 0.0f, 1.0f) : 0.0f;
        return length(pa - ba * h) - radius;
    };
}

SdfFn translate(SdfFn f, Vec3 offset) {
    return [f = std::move(f), offset](Vec3 p) { return f(p - offset); };
}

SdfFn twist_z(SdfFn f, float rate) {
    return [f = std::move(f), rate](Vec3 p) {
        float ang = rate * p.z;
        float c = std::cos(ang), s = std::sin(ang);
        return f({c * p.x - s * p.y, s * p.x + c * p.y, p.z});
    };
}

SdfFn csg_union(SdfFn a, SdfFn b) {
    return [a = std::move(a), b = std::move(b)](Vec3 p) { return std::min(a(p), b(p)); };
}

SdfFn csg_intersect(SdfFn a, SdfFn b) {
    return [a = std::move(a), b = std::move(b)](Vec3 p) { return std::max(a(p), b(p)); };
}

SdfFn csg_subtract(SdfFn a, SdfFn b) {
    return [a = std::move(a), b = std::move(b)](Vec3 p) { return std::max(a(p), -b(p)); };
}

SdfFn csg_smooth_union(SdfFn a, SdfFn b, float k) {
    if (k <= 0) return csg_union(std::move(a), std::move(b));
    return [a = std::move(a), b = std::move(b), k](Vec3 p) {
        float da = a(p), db = b(p);
        float h = std::clamp(0.5f + 0.5f * (db - da) / k, 0.0f, 1.0f);
        return db + (da - db) * h - k * h * (1.0f - h);
    };
}

float SdfGrid::sample(Vec3 p) const {
    const float r = static_cast<float>(resolution);
    auto to_grid = [&](float c) {
        float g = (c / extent + 0.5f) * r - 0.5f;
        return std::clamp(g, 0.0f, r - 1.0f);
    };
    float gx = to_grid(p.x), gy = to_grid(p.y), gz = to_grid(p.z);
    int x0 = std::min(static_cast<int>(gx), resolution - 2);
    int y0 = std::min(static_cast<int>(gy), resolution - 2);
    int z0 = std::min(static_cast<int>(gz), resolution - 2);
    if (resolution == 1) return values[0];
    float tx = gx - x0, ty = gy - y0, tz = gz - z0;
    auto v = [&](int dx, int dy, int dz) { return at(x0 + dx, y0 + dy, z0 + dz); };
    float c00 = v(0, 0, 0) * (1 - tx) + v(1, 0, 0) * tx;
    float c10 = v(0, 1, 0) * (1 - tx) + v(1, 1, 0) * tx;
    float c01 = v(0, 0, 1) * (1 - tx) + v(1, 0, 1) * tx;
    float c11 = v(0, 1, 1) * (1 - tx) + v(1, 1, 1) * tx;
    float c0 = c00 * (1 - ty) + c10 * ty;
    float c1 = c01 * (1 - ty) + c11 * ty;
    return c0 * (1 - tz) + c1 * tz;
}

SdfGrid discretize(const SdfFn& f, int resolution, float extent, float tau) {
    require(resolution >= 8, str("discretize: resolution must be >= 8, got ", resolution));
    require(extent > 0 && tau > 0, "discretize: extent and tau must be positive");
    SdfGrid g;
    g.resolution = resolution;
    g.extent = extent;
    g.tau = tau;
    g.values.resize(static_cast<int64_t>(resolution) * resolution * resolution);
    for (int z = 0; z < resolution; ++z)
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x)
                g.at(x, y, z) = std::clamp(f(g.cell_center(x, y, z)), -tau, tau);
    return g;
}

int64_t OccupancyGrid::count() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

OccupancyGrid occupancy(const SdfGrid& g) {
    OccupancyGrid o;
    o.resolution = g.resolution;
    o.bits.resize(g.values.size());
    for (size_t i = 0; i < g.values.size(); ++i) o.bits[i] = g.values[i] <= 0.0f ? 1 : 0;
    return o;
}

double volumetric_iou(const OccupancyGrid& a, const OccupancyGrid& b) {
    require(a.resolution == b.resolution,
            str("volumetric_iou: resolution mismatch ", a.resolution, " vs ", b.resolution));
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    if (uni == 0) return 1.0;  // identical empties
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
constexpr char kMagic[4] = {'A', 'F', 'S', 'D'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_grid(const std::string& path, const SdfGrid& g) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), str("cannot open grid file for writing: ", path));
    os.write(kMagic, 4);
    uint32_t v = kVersion, r = static_cast<uint32_t>(g.resolution);
    os.write(reinterpret_cast<const char*>(&v), 4);
    os.write(reinterpret_cast<const char*>(&r), 4);
    os.write(reinterpret_cast<const char*>(&g.extent), 4);
    os.write(reinterpret_cast<const char*>(&g.tau), 4);
    os.write(reinterpret_cast<const char*>(g.values.data()),
             static_cast<std::streamsize>(g.values.size() * sizeof(float)));
    require(os.good(), str("write failed for grid file: ", path));
}

SdfGrid load_grid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), str("cannot open grid file: ", path));
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, kMagic, 4) == 0, str("not an AFSD grid file: ", path));
    uint32_t version = 0, res = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    require(version == kVersion, str("unsupported AFSD version ", version, " in ", path));
    is.read(reinterpret_cast<char*>(&res), 4);
    SdfGrid g;
    g.resolution = static_cast<int>(res);
    is.read(reinterpret_cast<char*>(&g.extent), 4);
    is.read(reinterpret_cast<char*>(&g.tau), 4);
    g.values.resize(static_cast<int64_t>(res) * res * res);
    is.read(reinterpret_cast<char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(float)));
    require(is.good(), str("truncated AFSD grid file: ", path));
    return g;
}

}  // namespace af::geo
