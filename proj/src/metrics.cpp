#include "actuforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "actuforge/mesh.hpp"

namespace af::metrics {

using json = nlohmann::ordered_json;

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features) {
    require(features.size() >= 2,
            str("gaussian_stats: need at least 2 samples, got ", features.size()));
    const int n = static_cast<int>(features.size());
    const int f = static_cast<int>(features[0].size());
    for (const auto& row : features)
        require(static_cast<int>(row.size()) == f, "gaussian_stats: ragged feature rows");

    GaussianStats s;
    s.n = n;
    s.mu.assign(f, 0.0);
    for (const auto& row : features)
        for (int i = 0; i < f; ++i) s.mu[i] += row[i];
    for (int i = 0; i < f; ++i) s.mu[i] /= n;

    s.cov.assign(static_cast<size_t>(f) * f, 0.0);
    for (const auto& row : features)
        for (int i = 0; i < f; ++i) {
            double di = row[i] - s.mu[i];
            for (int j = i; j < f; ++j) s.cov[static_cast<size_t>(i) * f + j] += di * (row[j] - s.mu[j]);
        }
    for (int i = 0; i < f; ++i)
        for (int j = i; j < f; ++j) {
            double v = s.cov[static_cast<size_t>(i) * f + j] / (n - 1);
            s.cov[static_cast<size_t>(i) * f + j] = v;
            s.cov[static_cast<size_t>(j) * f + i] = v;  // symmetrized by construction
        }
    return s;
}

std::vector<double> symmetric_eig(const std::vector<double>& a_in, int n,
                                  std::vector<double>* vectors) {
    require(static_cast<int>(a_in.size()) == n * n, "symmetric_eig: size mismatch");
    std::vector<double> a = a_in;
    std::vector<double> v;
    if (vectors) {
        v.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    }
    auto at = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };

    double fro = 0.0;
    for (double x : a) fro += x * x;
    fro = std::sqrt(fro);
    const double tol = std::max(fro, 1.0) * 1e-14;

    const int max_sweeps = 100;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += 2.0 * at(i, j) * at(i, j);
        if (std::sqrt(off) <= tol) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (std::abs(apq) < tol / (n * n + 1.0)) continue;
                double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = at(i, p), aiq = at(i, q);
                    at(i, p) = c * aip - s * aiq;
                    at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = at(p, i), aqi = at(q, i);
                    at(p, i) = c * api - s * aqi;
                    at(q, i) = s * api + c * aqi;
                }
                if (vectors)
                    for (int i = 0; i < n; ++i) {
                        double vip = v[static_cast<size_t>(i) * n + p];
                        double viq = v[static_cast<size_t>(i) * n + q];
                        v[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
                        v[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
                    }
            }
    }
    require(sweep < max_sweeps, "symmetric_eig: Jacobi iteration did not converge");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = at(i, i);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] < diag[y]; });
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) values[i] = diag[order[i]];
    if (vectors) {
        vectors->assign(static_cast<size_t>(n) * n, 0.0);
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                (*vectors)[static_cast<size_t>(i) * n + k] = v[static_cast<size_t>(i) * n + order[k]];
    }
    return values;
}

namespace {

// clamp tiny negative eigenvalues of a PSD-by-construction matrix
double clamp_eig(double lambda, double scale) {
    if (lambda >= 0) return lambda;
    require(lambda > -1e-6 * std::max(scale, 1.0),
            str("frechet_distance: matrix has a significantly negative eigenvalue ", lambda));
    return 0.0;
}

void matmul_sq(const std::vector<double>& a, const std::vector<double>& b, std::vector<double>& c,
               int n) {
    c.assign(static_cast<size_t>(n) * n, 0.0);
    gemm(false, false, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
}

}  // namespace

double frechet_distance(const GaussianStats& r, const GaussianStats& g, double eps) {
    require(r.dim() == g.dim(),
            str("frechet_distance: dimension mismatch ", r.dim(), " vs ", g.dim()));
    require(eps >= 0, "frechet_distance: eps must be >= 0");
    const int n = r.dim();

    std::vector<double> cr = r.cov, cg = g.cov;
    for (int i = 0; i < n; ++i) {
        cr[static_cast<size_t>(i) * n + i] += eps;
        cg[static_cast<size_t>(i) * n + i] += eps;
    }

    double mean_term = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = r.mu[i] - g.mu[i];
        mean_term += d * d;
    }
    double tr_r = 0.0, tr_g = 0.0;
    for (int i = 0; i < n; ++i) {
        tr_r += cr[static_cast<size_t>(i) * n + i];
        tr_g += cg[static_cast<size_t>(i) * n + i];
    }

    // C_r^(1/2) via eigendecomposition
    std::vector<double> vec;
    auto vals = symmetric_eig(cr, n, &vec);
    double scale = std::max(std::abs(vals.front()), std::abs(vals.back()));
    std::vector<double> sqrt_cr(static_cast<size_t>(n) * n, 0.0);
    {
        std::vector<double> tmp(static_cast<size_t>(n) * n, 0.0);
        for (int k = 0; k < n; ++k) {
            double sq = std::sqrt(clamp_eig(vals[k], scale));
            for (int i = 0; i < n; ++i)
                tmp[static_cast<size_t>(i) * n + k] = vec[static_cast<size_t>(i) * n + k] * sq;
        }
        gemm(false, true, n, n, n, 1.0, tmp.data(), n, vec.data(), n, 0.0, sqrt_cr.data(), n);
    }

    // M = C_r^(1/2) C_g C_r^(1/2), symmetrized
    std::vector<double> m1, m;
    matmul_sq(sqrt_cr, cg, m1, n);
    matmul_sq(m1, sqrt_cr, m, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double avg = 0.5 * (m[static_cast<size_t>(i) * n + j] + m[static_cast<size_t>(j) * n + i]);
            m[static_cast<size_t>(i) * n + j] = avg;
            m[static_cast<size_t>(j) * n + i] = avg;
        }

    auto mvals = symmetric_eig(m, n, nullptr);
    double mscale = std::max(std::abs(mvals.front()), std::abs(mvals.back()));
    double tr_sqrt = 0.0;
    for (double lv : mvals) tr_sqrt += std::sqrt(clamp_eig(lv, mscale));

    double fd = mean_term + tr_r + tr_g - 2.0 * tr_sqrt;
    if (fd < 0) {
        require(fd > -1e-6 * std::max(1.0, tr_r + tr_g),
                str("frechet_distance: result is significantly negative: ", fd));
        fd = 0.0;
    }
    return fd;
}

RenderedFeatureExtractor::RenderedFeatureExtractor(const RenderedExtractorConfig& cfg_) : cfg(cfg_) {
    require(cfg.feature_dim >= 1, "rendered extractor: feature_dim must be positive");
    Rng rng(cfg.seed);
    c1 = Conv3dLayer("rfx.c1", 1, 8, 3, 2, 1, rng);
    c2 = Conv3dLayer("rfx.c2", 8, 16, 3, 2, 1, rng);
    c3 = Conv3dLayer("rfx.c3", 16, 32, 3, 2, 1, rng);
    c4 = Conv3dLayer("rfx.c4", 32, cfg.feature_dim, 3, 2, 1, rng);
}

std::vector<double> RenderedFeatureExtractor::extract(const geo::RenderImage& img) const {
    require(img.width == cfg.image_size && img.height == cfg.image_size,
            str("rendered extractor: image is ", img.width, "x", img.height, ", expected ",
                cfg.image_size));
    NoGradGuard ng;
    // zero-pad to odd extents so the stride-2 stages have integral outputs
    const int side = cfg.image_size | 1;
    std::vector<float> pix(static_cast<size_t>(side) * side, 0.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            pix[static_cast<size_t>(y) * side + x] = img.pixels[static_cast<size_t>(y) * img.width + x];
    Tensor x = Tensor::from({1, 1, side, side}, std::move(pix));
    Tensor h = silu(c1.forward(x));
    h = silu(c2.forward(h));
    h = silu(c3.forward(h));
    h = silu(c4.forward(h));
    const int f = h.shape()[0];
    const int64_t spatial = h.size() / f;
    std::vector<double> out(static_cast<size_t>(f), 0.0);
    for (int c = 0; c < f; ++c) {
        double acc = 0.0;
        for (int64_t i = 0; i < spatial; ++i) acc += h.values()[c * spatial + i];
        out[static_cast<size_t>(c)] = acc / static_cast<double>(spatial);
    }
    return out;
}

namespace {

std::vector<std::vector<double>> render_set_features(const std::vector<geo::SdfGrid>& grids,
                                                     const RenderedFeatureExtractor& extractor,
                                                     const ViewConfig& views) {
    std::vector<std::vector<double>> features;
    for (const auto& g : grids) {
        auto imgs = geo::render_views(g, views.n_azimuth, views.elevations, views.image_size);
        for (const auto& img : imgs) features.push_back(extractor.extract(img));
    }
    return features;
}

}  // namespace

double rendered_fd(const std::vector<geo::SdfGrid>& real, const std::vector<geo::SdfGrid>& gen,
                   const RenderedFeatureExtractor& extractor, const ViewConfig& views, double eps) {
    require(!real.empty() && !gen.empty(), "rendered_fd: both shape sets must be non-empty");
    const int min_renders = extractor.cfg.feature_dim / 4;
    for (auto [set, name] : {std::pair{&real, "real"}, std::pair{&gen, "gen"}}) {
        int total = static_cast<int>(set->size()) * views.views_per_shape();
        require(total >= min_renders,
                str("rendered_fd: ", name, " set yields ", total, " renders, need at least ",
                    min_renders, " for a stable covariance"));
    }
    auto fr = render_set_features(real, extractor, views);
    auto fg = render_set_features(gen, extractor, views);
    return frechet_distance(gaussian_stats(fr), gaussian_stats(fg), eps);
}

std::vector<double> fd3d_features(const geo::SdfGrid& grid, const vq::VqVaeModel& encoder) {
    NoGradGuard ng;
    Tensor pre = vq::encode(encoder, grid);
    Tensor pooled = avg_pool3d(pre, 2);
    return std::vector<double>(pooled.values().begin(), pooled.values().end());
}

double fd3d(const std::vector<geo::SdfGrid>& real, const std::vector<geo::SdfGrid>& gen,
            const vq::VqVaeModel& encoder, double eps) {
    require(!real.empty() && !gen.empty(), "fd3d: both shape sets must be non-empty");
    std::vector<std::vector<double>> fr, fg;
    for (const auto& g : real) fr.push_back(fd3d_features(g, encoder));
    for (const auto& g : gen) fg.push_back(fd3d_features(g, encoder));
    return frechet_distance(gaussian_stats(fr), gaussian_stats(fg), eps);
}

MetricReport eval_report(const std::vector<geo::SdfGrid>& real,
                         const std::vector<geo::SdfGrid>& gen, const vq::VqVaeModel& encoder,
                         const RenderedExtractorConfig& extractor_cfg, const ViewConfig& views,
                         std::optional<ArmLabel> arm, double eps) {
    MetricReport report;
    report.arm = arm;
    report.real_count = static_cast<int>(real.size());
    report.gen_count = static_cast<int>(gen.size());
    report.extractor = extractor_cfg;
    report.views = views;
    report.eps = eps;

    double std_acc = 0.0;
    int valid = 0;
    for (const auto& g : gen) {
        bool has_in = false, has_out = false;
        for (float v : g.values) {
            has_in = has_in || v < 0;
            has_out = has_out || v >= 0;
        }
        if (!has_in || !has_out) {
            report.empty_meshes++;
            continue;
        }
        std_acc += geo::normal_variation_std(geo::marching_cubes(g));
        ++valid;
    }
    report.normal_std = valid > 0 ? std_acc / valid : std::nan("");

    RenderedFeatureExtractor extractor(extractor_cfg);
    report.rendered_fd = rendered_fd(real, gen, extractor, views, eps);
    report.fd3d = fd3d(real, gen, encoder, eps);
    return report;
}

void save_report(const MetricReport& report, const std::string& path) {
    json arm = nullptr;
    if (report.arm)
        arm = json{{"augmentation", report.arm->augmentation}, {"transfer", report.arm->transfer}};
    json j{{"normal_std", report.normal_std},
           {"rendered_fd", report.rendered_fd},
           {"fd3d", report.fd3d},
           {"arm", arm},
           {"meta",
            json{{"real_count", report.real_count},
                 {"gen_count", report.gen_count},
                 {"empty_meshes", report.empty_meshes},
                 {"extractor_seed", report.extractor.seed},
                 {"feature_dim", report.extractor.feature_dim},
                 {"image_size", report.views.image_size},
                 {"n_azimuth", report.views.n_azimuth},
                 {"elevations", report.views.elevations},
                 {"eps", report.eps}}}};
    std::ofstream os(path);
    require(os.good(), str("cannot write report: ", path));
    os << j.dump(2) << "\n";
}

MetricReport load_report(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), str("cannot open report: ", path));
    json j = json::parse(is);
    MetricReport r;
    r.normal_std = j.at("normal_std").get<double>();
    r.rendered_fd = j.at("rendered_fd").get<double>();
    r.fd3d = j.at("fd3d").get<double>();
    if (!j.at("arm").is_null()) {
        ArmLabel a;
        a.augmentation = j.at("arm").at("augmentation").get<bool>();
        a.transfer = j.at("arm").at("transfer").get<bool>();
        r.arm = a;
    }
    const auto& m = j.at("meta");
    r.real_count = m.at("real_count").get<int>();
    r.gen_count = m.at("gen_count").get<int>();
    r.empty_meshes = m.at("empty_meshes").get<int>();
    r.extractor.seed = m.at("extractor_seed").get<uint64_t>();
    r.extractor.feature_dim = m.at("feature_dim").get<int>();
    r.views.image_size = m.at("image_size").get<int>();
    r.extractor.image_size = r.views.image_size;
    r.views.n_azimuth = m.at("n_azimuth").get<int>();
    r.views.elevations = m.at("elevations").get<std::vector<float>>();
    r.eps = m.at("eps").get<double>();
    return r;
}

}  // namespace af::metrics
