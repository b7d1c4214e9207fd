#include "actuforge/render.hpp"

#include <cmath>
#include <fstream>

namespace af::geo {

namespace {

constexpr float kPi = 3.14159265358979323846f;

struct Camera {
    Vec3 dir, right, up;  // orthonormal; dir points at the origin
};

Camera make_camera(float azimuth_deg, float elevation_deg) {
    float az = azimuth_deg * kPi / 180.0f;
    float el = elevation_deg * kPi / 180.0f;
    Vec3 eye{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    Camera c;
    c.dir = eye * -1.0f;
    Vec3 world_up{0, 0, 1};
    c.right = normalize(cross(c.dir, world_up));
    if (length(c.right) < 1e-6f) c.right = Vec3{0, 1, 0};  // looking straight up/down
    c.up = normalize(cross(c.right, c.dir));
    return c;
}

// slab test against the grid cube [-e/2, e/2]^3
bool ray_box(Vec3 o, Vec3 d, float half, float& t0, float& t1) {
    t0 = 0.0f;
    t1 = 1e30f;
    const float od[3] = {o.x, o.y, o.z};
    const float dd[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dd[a]) < 1e-12f) {
            if (od[a] < -half || od[a] > half) return false;
            continue;
        }
        float ta = (-half - od[a]) / dd[a];
        float tb = (half - od[a]) / dd[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace

std::vector<RenderImage> render_views(const SdfGrid& grid, int n_azimuth,
                                      const std::vector<float>& elevations_deg, int image_size) {
    require(n_azimuth >= 1, str("render_views: n_azimuth must be >= 1, got ", n_azimuth));
    const float half = grid.extent * 0.5f;
    const float window = grid.extent;
    const float cell = grid.cell_width();
    const float hit_eps = 1e-3f * cell;
    const int max_steps = 384;

    std::vector<RenderImage> images;
    images.reserve(static_cast<size_t>(n_azimuth) * elevations_deg.size());
    for (float el : elevations_deg) {
        for (int ai = 0; ai < n_azimuth; ++ai) {
            float az = 360.0f * static_cast<float>(ai) / static_cast<float>(n_azimuth);
            Camera cam = make_camera(az, el);
            RenderImage img;
            img.width = image_size;
            img.height = image_size;
            img.pixels.assign(static_cast<size_t>(image_size) * image_size, 0.0f);
            Vec3 start = cam.dir * (-grid.extent * 1.5f);
            for (int py = 0; py < image_size; ++py) {
                float v = (0.5f - (py + 0.5f) / static_cast<float>(image_size)) * window;
                for (int px = 0; px < image_size; ++px) {
                    float u = ((px + 0.5f) / static_cast<float>(image_size) - 0.5f) * window;
                    Vec3 origin = start + cam.right * u + cam.up * v;
                    float t0, t1;
                    if (!ray_box(origin, cam.dir, half, t0, t1)) continue;
                    float t = t0;
                    float t_prev = t0;
                    bool hit = false;
                    for (int it = 0; it < max_steps && t <= t1; ++it) {
                        Vec3 p = origin + cam.dir * t;
                        float d = grid.sample(p);
                        if (d < hit_eps) {
                            hit = true;
                            break;
                        }
                        t_prev = t;
                        t += std::max(d, 0.05f * cell);
                    }
                    if (!hit) continue;
                    // bisection against the zero crossing for a stable hit point
                    {
                        float lo = t_prev, hi = t;
                        for (int it = 0; it < 16; ++it) {
                            float mid = 0.5f * (lo + hi);
                            if (grid.sample(origin + cam.dir * mid) > 0.0f)
                                lo = mid;
                            else
                                hi = mid;
                        }
                        t = hi;
                    }
                    Vec3 p = origin + cam.dir * t;
                    float h = cell;
                    Vec3 n = normalize(Vec3{
                        grid.sample({p.x + h, p.y, p.z}) - grid.sample({p.x - h, p.y, p.z}),
                        grid.sample({p.x, p.y + h, p.z}) - grid.sample({p.x, p.y - h, p.z}),
                        grid.sample({p.x, p.y, p.z + h}) - grid.sample({p.x, p.y, p.z - h})});
                    float shade = std::max(0.0f, -dot(n, cam.dir));
                    img.pixels[static_cast<size_t>(py) * image_size + px] =
                        std::clamp(shade, 0.0f, 1.0f);
                }
            }
            images.push_back(std::move(img));
        }
    }
    return images;
}

void save_pgm(const std::string& path, const RenderImage& img) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), str("cannot open PGM file for writing: ", path));
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (float p : img.pixels) {
        unsigned char b = static_cast<unsigned char>(std::clamp(p, 0.0f, 1.0f) * 255.0f + 0.5f);
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
    require(os.good(), str("write failed for PGM file: ", path));
}

}  // namespace af::geo
