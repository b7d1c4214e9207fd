#include "actuforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace af::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string dof_name(Dof d) {
    switch (d) {
        case Dof::bend: return "bend";
        case Dof::extend: return "extend";
        case Dof::twist: return "twist";
    }
    fail("unreachable dof");
}

Dof dof_from_name(const std::string& s) {
    if (s == "bend") return Dof::bend;
    if (s == "extend") return Dof::extend;
    if (s == "twist") return Dof::twist;
    fail(str("unknown dof '", s, "'"));
}

void ActuatorSpec::validate() const {
    require(fold_count >= 1, str("ActuatorSpec: fold_count must be >= 1, got ", fold_count));
    require(body_length > 0 && body_radius > 0 && wall_thickness > 0 && fold_depth > 0,
            "ActuatorSpec: dimensions must be positive");
    require(wall_thickness < body_radius,
            str("ActuatorSpec: wall_thickness ", wall_thickness, " must be < body_radius ",
                body_radius));
    require(fold_depth < body_radius,
            str("ActuatorSpec: fold_depth ", fold_depth, " must be < body_radius ", body_radius));
    require(static_cast<float>(fold_count) * kMinFoldPitch <= body_length,
            str("ActuatorSpec: ", fold_count, " folds need body_length >= ",
                static_cast<float>(fold_count) * kMinFoldPitch, ", got ", body_length));
    require(body_length > 2.0f * body_radius,
            str("ActuatorSpec: body_length ", body_length, " must exceed the cap diameter ",
                2.0f * body_radius));
}

bool ActuatorSpec::same_geometry(const ActuatorSpec& o) const {
    return fold_count == o.fold_count && dof == o.dof && body_length == o.body_length &&
           body_radius == o.body_radius && wall_thickness == o.wall_thickness &&
           fold_depth == o.fold_depth && chamber == o.chamber;
}

geo::SdfFn actuator_sdf(const ActuatorSpec& spec, float twist_angle) {
    spec.validate();
    const float len = spec.body_length;
    const float rt = spec.body_radius;  // trunk radius; ridge crests reach rt + fold_depth
    const float hz = len * 0.5f - rt;   // capsule segment half-length

    geo::SdfFn body = geo::sdf_capsule({0, 0, -hz}, {0, 0, hz}, rt);

    const float blend = spec.wall_thickness * 0.5f;
    const float span = len - rt;  // ridge band along the axis
    for (int i = 0; i < spec.fold_count; ++i) {
        float zc = -span * 0.5f + (static_cast<float>(i) + 0.5f) * span /
                                      static_cast<float>(spec.fold_count);
        geo::SdfFn ridge = geo::translate(geo::sdf_torus(rt, spec.fold_depth), {0, 0, zc});
        if (spec.dof == Dof::bend) {
            // one-sided ridge: keep the x >= 0 half
            ridge = geo::csg_intersect(std::move(ridge), [](geo::Vec3 p) { return -p.x; });
        }
        body = geo::csg_smooth_union(std::move(body), std::move(ridge), blend);
    }

    if (twist_angle != 0.0f) body = geo::twist_z(std::move(body), twist_angle / len);

    if (spec.chamber) {
        float ri = spec.body_radius - spec.wall_thickness;
        float hzi = len * 0.5f - spec.wall_thickness - ri;
        if (hzi < 0) hzi = 0;
        body = geo::csg_subtract(std::move(body), geo::sdf_capsule({0, 0, -hzi}, {0, 0, hzi}, ri));
    }
    return body;
}

geo::SdfGrid build_actuator_sdf(const ActuatorSpec& spec, int resolution, float extent) {
    float twist = spec.dof == Dof::twist ? kDefaultTwistAngle : 0.0f;
    float tau = 3.0f * extent / static_cast<float>(resolution);
    return geo::discretize(actuator_sdf(spec, twist), resolution, extent, tau);
}

// ---------------------------------------------------------------------------
// text templates

namespace {

const char* kNumberWords[] = {"zero", "one", "two",    "three", "four",  "five",  "six",
                              "seven", "eight", "nine", "ten",   "eleven", "twelve"};

std::string number_word(int n) {
    require(n >= 0 && n <= 12, str("number_word: ", n, " out of supported range"));
    return kNumberWords[n];
}

std::string verb_s(Dof d) {
    switch (d) {
        case Dof::bend: return "bends";
        case Dof::extend: return "extends";
        case Dof::twist: return "twists";
    }
    fail("unreachable dof");
}

std::string gerund(Dof d) {
    switch (d) {
        case Dof::bend: return "bending";
        case Dof::extend: return "extending";
        case Dof::twist: return "twisting";
    }
    fail("unreachable dof");
}

}  // namespace

std::string describe(const ActuatorSpec& spec, uint64_t seed) {
    const std::string n = number_word(spec.fold_count);
    const std::string chamber_clause = spec.chamber ? " with a hollow pneumatic chamber" : "";
    Rng rng(seed * 2654435761u + 17);
    const char* adjectives[] = {"soft", "flexible", "compliant"};
    std::string adj = adjectives[rng.uniform_int(3)];
    switch (seed % 4) {
        case 0:
            return str("a ", adj, " pneumatic actuator with ", n, " folds that ", verb_s(spec.dof),
                       chamber_clause);
        case 1:
            return str("a bellows actuator with ", n, " folds designed for ", gerund(spec.dof),
                       chamber_clause);
        case 2:
            return str("a pneumatic ", adj, " robot actuator that ", verb_s(spec.dof), " and has ",
                       n, " folds", chamber_clause);
        default:
            return str("a ", gerund(spec.dof), " ", adj, " actuator built with ", n,
                       " folds of bellows", chamber_clause);
    }
}

// ---------------------------------------------------------------------------
// augmentation

std::vector<ActuatorSpec> augment(const std::vector<ActuatorSpec>& bases, const ParamSweep& sweep,
                                  int* skipped) {
    int skip_count = 0;
    if (sweep.empty()) {
        if (skipped) *skipped = 0;
        return bases;
    }
    // sentinel-padded value lists: empty dimension keeps the base value
    auto fold_vals = sweep.fold_count;
    auto len_vals = sweep.body_length;
    auto rad_vals = sweep.body_radius;
    auto wall_vals = sweep.wall_thickness;
    auto depth_vals = sweep.fold_depth;
    std::vector<int> chamber_vals;
    for (bool b : sweep.chamber) chamber_vals.push_back(b ? 1 : 0);
    const bool keep_fold = fold_vals.empty(), keep_len = len_vals.empty(),
               keep_rad = rad_vals.empty(), keep_wall = wall_vals.empty(),
               keep_depth = depth_vals.empty(), keep_chamber = chamber_vals.empty();
    if (keep_fold) fold_vals.push_back(0);
    if (keep_len) len_vals.push_back(0);
    if (keep_rad) rad_vals.push_back(0);
    if (keep_wall) wall_vals.push_back(0);
    if (keep_depth) depth_vals.push_back(0);
    if (keep_chamber) chamber_vals.push_back(0);

    std::vector<ActuatorSpec> out;
    for (const auto& base : bases)
        for (int fc : fold_vals)
            for (float bl : len_vals)
                for (float br : rad_vals)
                    for (float wt : wall_vals)
                        for (float fd : depth_vals)
                            for (int ch : chamber_vals) {
                                ActuatorSpec s = base;
                                if (!keep_fold) s.fold_count = fc;
                                if (!keep_len) s.body_length = bl;
                                if (!keep_rad) s.body_radius = br;
                                if (!keep_wall) s.wall_thickness = wt;
                                if (!keep_depth) s.fold_depth = fd;
                                if (!keep_chamber) s.chamber = ch != 0;
                                try {
                                    s.validate();
                                } catch (const std::runtime_error&) {
                                    ++skip_count;
                                    continue;
                                }
                                bool dup = false;
                                for (const auto& prev : out)
                                    if (prev.same_geometry(s)) {
                                        dup = true;
                                        break;
                                    }
                                if (!dup) out.push_back(s);
                            }
    if (skipped) *skipped = skip_count;
    return out;
}

// ---------------------------------------------------------------------------
// shape oracles

std::vector<double> axial_radius_profile(const geo::SdfGrid& g) {
    const int r = g.resolution;
    const float cell = g.cell_width();
    std::vector<double> profile(r, 0.0);
    for (int z = 0; z < r; ++z) {
        double area = 0.0;  // sub-voxel soft occupancy, in cell^2 units
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x) {
                float w = 0.5f - g.at(x, y, z) / cell;
                area += std::clamp(w, 0.0f, 1.0f);
            }
        profile[z] = std::sqrt(area / 3.14159265358979323846);
    }
    return profile;
}

int count_folds(const geo::SdfGrid& g) {
    auto p = axial_radius_profile(g);
    const int n = static_cast<int>(p.size());

    double max_r = *std::max_element(p.begin(), p.end());
    if (max_r <= 0.5) return 0;  // effectively empty

    // central band where the body lives
    int lo = 0, hi = n - 1;
    while (lo < n && p[lo] < 0.5 * max_r) ++lo;
    while (hi >= 0 && p[hi] < 0.5 * max_r) --hi;
    if (hi - lo < 2) return 0;
    // trim the monotone end-cap taper so band extrema reflect ridge modulation
    while (lo + 1 <= hi && p[lo + 1] > p[lo]) ++lo;
    while (hi - 1 >= lo && p[hi - 1] > p[hi]) --hi;
    if (hi - lo < 1) return 1;  // single crest

    double band_min = p[lo], band_max = p[lo];
    for (int i = lo; i <= hi; ++i) {
        band_min = std::min(band_min, p[i]);
        band_max = std::max(band_max, p[i]);
    }
    double range = band_max - band_min;
    if (range < 0.05 * max_r) return 0;  // no discernible ridge modulation

    // hysteresis counting of crest crossings
    const double thr_hi = band_min + 0.6 * range;
    const double thr_lo = band_min + 0.4 * range;
    int count = 0;
    bool armed = true;
    for (int i = lo; i <= hi; ++i) {
        if (armed && p[i] >= thr_hi) {
            ++count;
            armed = false;
        } else if (!armed && p[i] <= thr_lo) {
            armed = true;
        }
    }
    return count;
}

bool is_one_sided(const geo::SdfGrid& g) {
    const int r = g.resolution;
    const double cx = (r - 1) * 0.5;
    int occupied_slices = 0, asym_slices = 0;
    for (int z = 0; z < r; ++z) {
        double max_pos = -1e9, max_neg = -1e9;
        bool any = false;
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x)
                if (g.at(x, y, z) <= 0.0f) {
                    any = true;
                    max_pos = std::max(max_pos, static_cast<double>(x) - cx);
                    max_neg = std::max(max_neg, cx - static_cast<double>(x));
                }
        if (!any) continue;
        ++occupied_slices;
        if (max_pos - max_neg >= 1.0) ++asym_slices;  // >= 1 cell of +x overhang
    }
    if (occupied_slices == 0) return false;
    return static_cast<double>(asym_slices) / occupied_slices > 0.15;
}

// ---------------------------------------------------------------------------
// corpora

std::vector<ActuatorSpec> base_actuator_specs() {
    std::vector<ActuatorSpec> bases;
    auto make = [](int folds, Dof dof) {
        ActuatorSpec s;
        s.fold_count = folds;
        s.dof = dof;
        s.body_length = 0.52f + 0.052f * static_cast<float>(folds);
        s.body_radius = 0.13f;
        s.wall_thickness = 0.05f;
        s.fold_depth = 0.05f;
        s.chamber = false;
        return s;
    };
    for (int f = 2; f <= 6; ++f) bases.push_back(make(f, Dof::bend));
    for (int f = 2; f <= 6; ++f) bases.push_back(make(f, Dof::extend));
    bases.push_back(make(3, Dof::twist));
    bases.push_back(make(5, Dof::twist));
    return bases;
}

namespace {

std::vector<std::string> assign_splits(size_t n, double ratio, Rng rng) {
    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    size_t train_n = static_cast<size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    std::vector<std::string> split(n, "val");
    for (size_t i = 0; i < train_n; ++i) split[idx[i]] = "train";
    return split;
}

std::string entry_id(const char* prefix, size_t i) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%s_%04zu", prefix, i);
    return buf;
}

}  // namespace

Dataset build_actuator_corpus(bool augmented, const CorpusConfig& cfg, int* skipped) {
    auto specs = base_actuator_specs();
    if (augmented) {
        ParamSweep sweep;
        sweep.body_radius = {0.115f, 0.13f, 0.145f};
        sweep.fold_depth = {0.042f, 0.052f};
        specs = augment(specs, sweep, skipped);
    } else if (skipped) {
        *skipped = 0;
    }

    Dataset ds;
    ds.manifest.seed = cfg.seed;
    ds.manifest.resolution = cfg.resolution;
    ds.manifest.extent = cfg.extent;
    ds.manifest.tau = 3.0f * cfg.extent / static_cast<float>(cfg.resolution);
    Rng rng(cfg.seed);
    auto splits = assign_splits(specs.size(), cfg.split_ratio, rng.fork(1));
    for (size_t i = 0; i < specs.size(); ++i) {
        ActuatorSpec spec = specs[i];
        spec.seed = cfg.seed ^ (0x5851f42d4c957f2dull * (i + 1));
        DatasetEntry e;
        e.id = entry_id("act", i);
        e.spec = spec;
        e.text = describe(spec, cfg.seed + i);
        e.grid_path = str("grids/", e.id, ".afsd");
        e.split = splits[i];
        ds.manifest.entries.push_back(std::move(e));
        ds.grids.push_back(build_actuator_sdf(spec, cfg.resolution, cfg.extent));
    }
    return ds;
}

Dataset build_generic_corpus(int n, const CorpusConfig& cfg) {
    require(n >= 1, str("build_generic_corpus: n must be >= 1, got ", n));
    Dataset ds;
    ds.manifest.seed = cfg.seed;
    ds.manifest.resolution = cfg.resolution;
    ds.manifest.extent = cfg.extent;
    ds.manifest.tau = 3.0f * cfg.extent / static_cast<float>(cfg.resolution);
    Rng root(cfg.seed);
    auto splits = assign_splits(static_cast<size_t>(n), cfg.split_ratio, root.fork(1));
    Rng rng = root.fork(2);

    const char* kind_names[] = {"sphere", "box", "cylinder", "torus", "capsule"};
    for (int i = 0; i < n; ++i) {
        int parts = 1 + rng.uniform_int(4);
        geo::SdfFn shape;
        std::vector<std::string> used, cut;
        for (int k = 0; k < parts; ++k) {
            int kind = rng.uniform_int(5);
            geo::SdfFn prim;
            switch (kind) {
                case 0: prim = geo::sdf_sphere(static_cast<float>(rng.uniform(0.14, 0.24))); break;
                case 1:
                    prim = geo::sdf_box({static_cast<float>(rng.uniform(0.10, 0.20)),
                                         static_cast<float>(rng.uniform(0.10, 0.20)),
                                         static_cast<float>(rng.uniform(0.10, 0.20))});
                    break;
                case 2:
                    prim = geo::sdf_cylinder(static_cast<float>(rng.uniform(0.08, 0.16)),
                                             static_cast<float>(rng.uniform(0.12, 0.22)));
                    break;
                case 3:
                    prim = geo::sdf_torus(static_cast<float>(rng.uniform(0.14, 0.22)),
                                          static_cast<float>(rng.uniform(0.04, 0.08)));
                    break;
                default:
                    prim = geo::sdf_capsule({0, 0, static_cast<float>(rng.uniform(-0.25, -0.05))},
                                            {0, 0, static_cast<float>(rng.uniform(0.05, 0.25))},
                                            static_cast<float>(rng.uniform(0.08, 0.15)));
            }
            if (k == 0) {
                shape = std::move(prim);
                used.push_back(kind_names[kind]);
                continue;
            }
            geo::Vec3 off{static_cast<float>(rng.uniform(-0.16, 0.16)),
                          static_cast<float>(rng.uniform(-0.16, 0.16)),
                          static_cast<float>(rng.uniform(-0.16, 0.16))};
            prim = geo::translate(std::move(prim), off);
            if (rng.uniform() < 0.3) {
                shape = geo::csg_subtract(std::move(shape), std::move(prim));
                cut.push_back(kind_names[kind]);
            } else {
                shape = geo::csg_union(std::move(shape), std::move(prim));
                used.push_back(kind_names[kind]);
            }
        }

        std::string text;
        if (used.size() == 1) {
            text = str("a solid ", used[0]);
        } else {
            text = str("a compound solid of a ", used[0]);
            for (size_t k = 1; k < used.size(); ++k) text += str(" and a ", used[k]);
        }
        if (!cut.empty()) text += str(" with a ", cut[0], " cut out");

        DatasetEntry e;
        e.id = entry_id("gen", static_cast<size_t>(i));
        e.text = text;
        e.grid_path = str("grids/", e.id, ".afsd");
        e.split = splits[static_cast<size_t>(i)];
        ds.manifest.entries.push_back(std::move(e));
        ds.grids.push_back(geo::discretize(shape, cfg.resolution, cfg.extent, ds.manifest.tau));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// persistence

bool DatasetEntry::operator==(const DatasetEntry& o) const {
    auto spec_eq = [&] {
        if (spec.has_value() != o.spec.has_value()) return false;
        if (!spec) return true;
        return spec->same_geometry(*o.spec) && spec->seed == o.spec->seed;
    };
    return id == o.id && text == o.text && grid_path == o.grid_path && checksum == o.checksum &&
           split == o.split && spec_eq();
}

bool DatasetManifest::operator==(const DatasetManifest& o) const {
    return seed == o.seed && resolution == o.resolution && extent == o.extent && tau == o.tau &&
           entries == o.entries;
}

std::vector<int> DatasetManifest::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

namespace {

json spec_to_json(const ActuatorSpec& s) {
    return json{{"folds", s.fold_count},
                {"dof", dof_name(s.dof)},
                {"length", s.body_length},
                {"radius", s.body_radius},
                {"wall", s.wall_thickness},
                {"depth", s.fold_depth},
                {"chamber", s.chamber},
                {"seed", s.seed}};
}

ActuatorSpec spec_from_json(const json& j) {
    ActuatorSpec s;
    s.fold_count = j.at("folds").get<int>();
    s.dof = dof_from_name(j.at("dof").get<std::string>());
    s.body_length = j.at("length").get<float>();
    s.body_radius = j.at("radius").get<float>();
    s.wall_thickness = j.at("wall").get<float>();
    s.fold_depth = j.at("depth").get<float>();
    s.chamber = j.at("chamber").get<bool>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

std::string file_checksum(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), str("cannot read file for checksum: ", path));
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace

void save_dataset(Dataset& ds, const std::string& dir) {
    require(ds.manifest.entries.size() == ds.grids.size(),
            "save_dataset: manifest and grid list are out of sync");
    fs::create_directories(fs::path(dir) / "grids");
    json entries = json::array();
    for (size_t i = 0; i < ds.manifest.entries.size(); ++i) {
        auto& e = ds.manifest.entries[i];
        std::string grid_file = (fs::path(dir) / e.grid_path).string();
        geo::save_grid(grid_file, ds.grids[i]);
        e.checksum = file_checksum(grid_file);
        json je{{"id", e.id},
                {"spec", e.spec ? spec_to_json(*e.spec) : json(nullptr)},
                {"text", e.text},
                {"grid", e.grid_path},
                {"checksum", e.checksum},
                {"split", e.split}};
        entries.push_back(std::move(je));
    }
    json manifest{{"format", "actuforge-dataset"},
                  {"version", 1},
                  {"seed", ds.manifest.seed},
                  {"resolution", ds.manifest.resolution},
                  {"extent", ds.manifest.extent},
                  {"tau", ds.manifest.tau},
                  {"entries", std::move(entries)}};
    std::ofstream os(fs::path(dir) / "manifest.json");
    require(os.good(), str("cannot write manifest in ", dir));
    os << manifest.dump(2) << "\n";
    require(os.good(), str("write failed for manifest in ", dir));
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    require(is.good(), str("cannot open manifest in ", dir));
    json manifest = json::parse(is);
    require(manifest.at("format") == "actuforge-dataset", str("not a dataset manifest: ", dir));
    require(manifest.at("version") == 1,
            str("unsupported dataset version ", manifest.at("version").dump(), " in ", dir));
    Dataset ds;
    ds.manifest.seed = manifest.at("seed").get<uint64_t>();
    ds.manifest.resolution = manifest.at("resolution").get<int>();
    ds.manifest.extent = manifest.at("extent").get<float>();
    ds.manifest.tau = manifest.at("tau").get<float>();
    for (const auto& je : manifest.at("entries")) {
        DatasetEntry e;
        e.id = je.at("id").get<std::string>();
        if (!je.at("spec").is_null()) e.spec = spec_from_json(je.at("spec"));
        e.text = je.at("text").get<std::string>();
        e.grid_path = je.at("grid").get<std::string>();
        e.checksum = je.at("checksum").get<std::string>();
        e.split = je.at("split").get<std::string>();
        std::string grid_file = (fs::path(dir) / e.grid_path).string();
        std::string actual = file_checksum(grid_file);
        require(actual == e.checksum,
                str("checksum mismatch for entry ", e.id, ": manifest has ", e.checksum,
                    ", file has ", actual));
        ds.grids.push_back(geo::load_grid(grid_file));
        ds.manifest.entries.push_back(std::move(e));
    }
    return ds;
}

}  // namespace af::data
