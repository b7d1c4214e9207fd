#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actuforge/dataset.hpp"
#include "actuforge/metrics.hpp"

#include <cstdio>

using namespace af::metrics;
namespace vq = af::vq;

namespace {

GaussianStats stats1d(double mu, double var) {
    GaussianStats s;
    s.mu = {mu};
    s.cov = {var};
    s.n = 100;
    return s;
}

std::vector<af::geo::SdfGrid> sphere_set(int n, float base_r, uint64_t seed) {
    af::Rng rng(seed);
    std::vector<af::geo::SdfGrid> out;
    for (int i = 0; i < n; ++i) {
        float r = base_r + static_cast<float>(rng.uniform(-0.03, 0.03));
        out.push_back(af::geo::discretize(af::geo::sdf_sphere(r), 32, 1.0f, 3.0f / 32.0f));
    }
    return out;
}

std::vector<af::geo::SdfGrid> box_set(int n, uint64_t seed) {
    af::Rng rng(seed);
    std::vector<af::geo::SdfGrid> out;
    for (int i = 0; i < n; ++i) {
        af::geo::Vec3 half{static_cast<float>(rng.uniform(0.1, 0.3)),
                           static_cast<float>(rng.uniform(0.1, 0.3)),
                           static_cast<float>(rng.uniform(0.1, 0.3))};
        out.push_back(af::geo::discretize(af::geo::sdf_box(half), 32, 1.0f, 3.0f / 32.0f));
    }
    return out;
}

vq::VqVaeModel tiny_vqvae(int res) {
    vq::VqVaeConfig cfg;
    cfg.resolution = res;
    cfg.tau = 3.0f / static_cast<float>(res);
    cfg.base_channels = 8;
    return vq::VqVaeModel(cfg, 77);
}

}  // namespace

TEST_CASE("gaussian_stats: hand case, zero covariance, permutation invariance, n<2") {
    auto s = gaussian_stats({{0.0}, {2.0}});
    CHECK(s.mu[0] == doctest::Approx(1.0));
    CHECK(s.cov[0] == doctest::Approx(2.0));  // 1/(n-1) normalization

    auto same = gaussian_stats({{3.0, -1.0}, {3.0, -1.0}, {3.0, -1.0}});
    for (double c : same.cov) CHECK(c == doctest::Approx(0.0));

    auto a = gaussian_stats({{1.0, 2.0}, {3.0, 1.0}, {-1.0, 0.5}});
    auto b = gaussian_stats({{3.0, 1.0}, {-1.0, 0.5}, {1.0, 2.0}});
    for (size_t i = 0; i < a.cov.size(); ++i) CHECK(a.cov[i] == doctest::Approx(b.cov[i]));
    for (size_t i = 0; i < a.mu.size(); ++i) CHECK(a.mu[i] == doctest::Approx(b.mu[i]));

    CHECK_THROWS_WITH_AS(gaussian_stats({{1.0}}), doctest::Contains("at least 2"),
                         std::runtime_error);
}

TEST_CASE("symmetric_eig: known spectrum and reconstruction") {
    std::vector<double> m{2, 1, 1, 2};
    std::vector<double> vec;
    auto vals = symmetric_eig(m, 2, &vec);
    CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-12));

    // A = V diag(vals) V^T
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0;
            for (int k = 0; k < 2; ++k) acc += vec[i * 2 + k] * vals[k] * vec[j * 2 + k];
            CHECK(acc == doctest::Approx(m[i * 2 + j]).epsilon(1e-10));
        }

    // larger random symmetric PSD matrix: eigendecomposition reconstructs it
    af::Rng rng(5);
    const int n = 24;
    std::vector<double> b(n * n);
    for (auto& x : b) x = rng.normal();
    std::vector<double> psd(n * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < n; ++k) acc += b[i * n + k] * b[j * n + k];
            psd[i * n + j] = acc;
        }
    std::vector<double> v2;
    auto vals2 = symmetric_eig(psd, n, &v2);
    for (double lv : vals2) CHECK(lv > -1e-9);
    double err = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < n; ++k) acc += v2[i * n + k] * vals2[k] * v2[j * n + k];
            err = std::max(err, std::abs(acc - psd[i * n + j]));
        }
    CHECK(err < 1e-9 * n);
}

TEST_CASE("frechet_distance: analytic 1-D cases, symmetry, self-distance") {
    CHECK(frechet_distance(stats1d(0, 1), stats1d(0, 1)) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(frechet_distance(stats1d(0, 1), stats1d(1, 1)) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(frechet_distance(stats1d(0, 1), stats1d(0, 4)) == doctest::Approx(1.0).epsilon(1e-8));

    auto d1 = frechet_distance(stats1d(0.3, 2.0), stats1d(-1.0, 0.5));
    auto d2 = frechet_distance(stats1d(-1.0, 0.5), stats1d(0.3, 2.0));
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));

    GaussianStats bad;
    bad.mu = {0, 0};
    bad.cov = {1, 0, 0, 1};
    bad.n = 10;
    CHECK_THROWS_WITH_AS(frechet_distance(stats1d(0, 1), bad), doctest::Contains("mismatch"),
                         std::runtime_error);
}

TEST_CASE("frechet_distance matches the diagonal closed form") {
    af::Rng rng(9);
    const int f = 6;
    GaussianStats r, g;
    r.n = g.n = 50;
    r.mu.resize(f);
    g.mu.resize(f);
    r.cov.assign(f * f, 0.0);
    g.cov.assign(f * f, 0.0);
    double expect = 0.0;
    for (int i = 0; i < f; ++i) {
        r.mu[i] = rng.uniform(-2, 2);
        g.mu[i] = rng.uniform(-2, 2);
        double vr = rng.uniform(0.2, 3.0), vg = rng.uniform(0.2, 3.0);
        r.cov[i * f + i] = vr;
        g.cov[i * f + i] = vg;
        double dm = r.mu[i] - g.mu[i];
        expect += dm * dm + vr + vg - 2.0 * std::sqrt(vr * vg);
    }
    CHECK(frechet_distance(r, g) == doctest::Approx(expect).epsilon(1e-8));

    // self distance stays 0 under diagonal conditioning
    CHECK(frechet_distance(r, r, 1e-6) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("rendered feature extractor: determinism and seed sensitivity") {
    RenderedExtractorConfig cfg;
    cfg.image_size = 32;
    RenderedFeatureExtractor ex1(cfg), ex2(cfg);
    af::geo::RenderImage img;
    img.width = img.height = 32;
    img.pixels.assign(32 * 32, 0.0f);
    for (int i = 0; i < 32 * 32; ++i) img.pixels[i] = static_cast<float>(i % 7) / 7.0f;
    auto f1 = ex1.extract(img);
    auto f2 = ex2.extract(img);
    CHECK(f1 == f2);
    CHECK(static_cast<int>(f1.size()) == cfg.feature_dim);

    RenderedExtractorConfig other = cfg;
    other.seed = 999;
    RenderedFeatureExtractor ex3(other);
    CHECK(ex3.extract(img) != f1);

    af::geo::RenderImage wrong;
    wrong.width = wrong.height = 16;
    wrong.pixels.assign(256, 0.0f);
    CHECK_THROWS_AS(ex1.extract(wrong), std::runtime_error);
}

TEST_CASE("rendered_fd: identity, symmetry, separation oracle, render floor") {
    RenderedExtractorConfig ecfg;
    ecfg.image_size = 32;
    RenderedFeatureExtractor ex(ecfg);
    ViewConfig views;
    views.n_azimuth = 4;
    views.image_size = 32;

    auto real = sphere_set(4, 0.3f, 1);
    CHECK(rendered_fd(real, real, ex, views) == doctest::Approx(0.0).epsilon(1e-6));

    auto gen = sphere_set(4, 0.3f, 2);
    auto ab = rendered_fd(real, gen, ex, views);
    auto ba = rendered_fd(gen, real, ex, views);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-9));

    // real actuators vs generic primitives separate far beyond split-half
    af::data::CorpusConfig cc;
    cc.seed = 3;
    auto act = af::data::build_actuator_corpus(false, cc);
    auto generic = af::data::build_generic_corpus(8, cc);
    std::vector<af::geo::SdfGrid> act_a(act.grids.begin(), act.grids.begin() + 6);
    std::vector<af::geo::SdfGrid> act_b(act.grids.begin() + 6, act.grids.end());
    std::vector<af::geo::SdfGrid> gen_set(generic.grids.begin(), generic.grids.begin() + 6);
    double split_half = rendered_fd(act_a, act_b, ex, views);
    double cross = rendered_fd(act_a, gen_set, ex, views);
    CHECK(cross > split_half);

    std::vector<af::geo::SdfGrid> single(real.begin(), real.begin() + 1);
    ViewConfig tiny;
    tiny.n_azimuth = 1;
    tiny.elevations = {30.0f};
    tiny.image_size = 32;
    CHECK_THROWS_WITH_AS(rendered_fd(single, single, ex, tiny), doctest::Contains("at least"),
                         std::runtime_error);
}

TEST_CASE("fd3d: identity, 64-cube feature dimension, degradation monotonicity") {
    auto enc32 = tiny_vqvae(32);
    auto real = sphere_set(8, 0.3f, 4);
    CHECK(fd3d(real, real, enc32) == doctest::Approx(0.0).epsilon(1e-6));

    // feature dim at 64^3 config: [3,16,16,16] pooled to [3,8,8,8] = 1536
    auto enc64 = tiny_vqvae(64);
    auto g64 = af::geo::discretize(af::geo::sdf_sphere(0.3f), 64, 1.0f, 3.0f / 64.0f);
    CHECK(fd3d_features(g64, enc64).size() == 1536);
    // and at the desk 32^3 config: [3,8,8,8] pooled to [3,4,4,4] = 192
    CHECK(fd3d_features(real[0], enc32).size() == 192);

    // blending the generated set from random shapes toward the real set
    // decreases fd3d monotonically
    auto random_shapes = box_set(8, 5);
    std::vector<af::geo::SdfGrid> half = random_shapes;
    for (int i = 0; i < 4; ++i) half[i] = real[i];
    double d_random = fd3d(real, random_shapes, enc32);
    double d_half = fd3d(real, half, enc32);
    double d_same = fd3d(real, real, enc32);
    CHECK(d_same < d_half);
    CHECK(d_half < d_random);
}

TEST_CASE("metric report: finite fields on a smoke run, JSON round-trip") {
    auto enc = tiny_vqvae(32);
    auto real = sphere_set(10, 0.32f, 6);
    auto gen = sphere_set(10, 0.28f, 7);
    RenderedExtractorConfig ecfg;
    ecfg.image_size = 32;
    ViewConfig views;
    views.n_azimuth = 2;
    views.image_size = 32;
    ArmLabel arm;
    arm.augmentation = true;
    arm.transfer = false;
    auto report = eval_report(real, gen, enc, ecfg, views, arm);
    CHECK(std::isfinite(report.normal_std));
    CHECK(std::isfinite(report.rendered_fd));
    CHECK(std::isfinite(report.fd3d));
    CHECK(report.normal_std >= 0.0);
    CHECK(report.rendered_fd >= 0.0);
    CHECK(report.fd3d >= 0.0);
    CHECK(report.real_count == 10);
    CHECK(report.empty_meshes == 0);

    save_report(report, "t_report.json");
    auto loaded = load_report("t_report.json");
    CHECK(loaded.normal_std == doctest::Approx(report.normal_std));
    CHECK(loaded.rendered_fd == doctest::Approx(report.rendered_fd));
    CHECK(loaded.fd3d == doctest::Approx(report.fd3d));
    REQUIRE(loaded.arm.has_value());
    CHECK(loaded.arm->augmentation == true);
    CHECK(loaded.arm->transfer == false);
    CHECK(loaded.views.n_azimuth == 2);
    std::remove("t_report.json");
}

TEST_CASE("metrics are deterministic given inputs and extractor seed") {
    auto enc = tiny_vqvae(32);
    auto real = sphere_set(3, 0.3f, 8);
    auto gen = box_set(3, 9);
    RenderedExtractorConfig ecfg;
    ecfg.image_size = 32;
    RenderedFeatureExtractor ex(ecfg);
    ViewConfig views;
    views.n_azimuth = 3;
    views.image_size = 32;
    CHECK(rendered_fd(real, gen, ex, views) == rendered_fd(real, gen, ex, views));
    CHECK(fd3d(real, gen, enc) == fd3d(real, gen, enc));
}
