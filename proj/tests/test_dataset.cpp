#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actuforge/dataset.hpp"
#include "actuforge/mesh.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace af::data;
namespace fs = std::filesystem;

namespace {
ActuatorSpec default_spec(int folds, Dof dof) {
    ActuatorSpec s;
    s.fold_count = folds;
    s.dof = dof;
    s.body_length = 0.52f + 0.052f * static_cast<float>(folds);
    s.body_radius = 0.13f;
    s.wall_thickness = 0.05f;
    s.fold_depth = 0.05f;
    return s;
}
}  // namespace

TEST_CASE("fold oracle recovers fold counts for all base specs") {
    for (const auto& spec : base_actuator_specs()) {
        auto g = build_actuator_sdf(spec, 32);
        INFO("folds=", spec.fold_count, " dof=", dof_name(spec.dof));
        CHECK(count_folds(g) == spec.fold_count);
    }
}

TEST_CASE("fold oracle recovers fold counts across the augmented corpus") {
    CorpusConfig cfg;
    cfg.seed = 11;
    auto ds = build_actuator_corpus(true, cfg);
    REQUIRE(ds.manifest.entries.size() >= 72);
    for (size_t i = 0; i < ds.grids.size(); ++i) {
        const auto& spec = *ds.manifest.entries[i].spec;
        INFO(ds.manifest.entries[i].id, " folds=", spec.fold_count, " dof=", dof_name(spec.dof),
             " r=", spec.body_radius, " d=", spec.fold_depth);
        CHECK(count_folds(ds.grids[i]) == spec.fold_count);
    }
}

TEST_CASE("bend actuators are one-sided, extend actuators are not") {
    auto bend = build_actuator_sdf(default_spec(4, Dof::bend), 32);
    auto ext = build_actuator_sdf(default_spec(4, Dof::extend), 32);
    CHECK(is_one_sided(bend));
    CHECK_FALSE(is_one_sided(ext));
}

TEST_CASE("chamber reduces volume; twist(0) equals extend bit-exactly") {
    auto spec = default_spec(4, Dof::extend);
    auto solid = build_actuator_sdf(spec, 32);
    auto hollow_spec = spec;
    hollow_spec.chamber = true;
    auto hollow = build_actuator_sdf(hollow_spec, 32);
    CHECK(af::geo::occupancy(hollow).count() < af::geo::occupancy(solid).count());

    auto twist_spec = spec;
    twist_spec.dof = Dof::twist;
    float tau = 3.0f / 32.0f;
    auto a = af::geo::discretize(actuator_sdf(spec, 0.0f), 32, 1.0f, tau);
    auto b = af::geo::discretize(actuator_sdf(twist_spec, 0.0f), 32, 1.0f, tau);
    CHECK(a.values == b.values);

    // the actual twist changes the grid
    auto c = af::geo::discretize(actuator_sdf(twist_spec, kDefaultTwistAngle), 32, 1.0f, tau);
    CHECK(c.values != b.values);
}

TEST_CASE("actuator shapes are watertight at dataset resolution") {
    for (auto folds : {2, 6}) {
        auto g = build_actuator_sdf(default_spec(folds, Dof::extend), 32);
        // zero level set must not touch the grid boundary
        int r = g.resolution;
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
                CHECK(g.at(a, b, 0) > 0);
                CHECK(g.at(a, b, r - 1) > 0);
                CHECK(g.at(a, 0, b) > 0);
                CHECK(g.at(a, r - 1, b) > 0);
                CHECK(g.at(0, a, b) > 0);
                CHECK(g.at(r - 1, a, b) > 0);
            }
    }
}

TEST_CASE("spec invariants") {
    auto ok = default_spec(4, Dof::extend);
    CHECK_NOTHROW(ok.validate());

    auto bad_wall = ok;
    bad_wall.wall_thickness = 0.2f;
    CHECK_THROWS_WITH_AS(bad_wall.validate(), doctest::Contains("wall_thickness"),
                         std::runtime_error);

    auto bad_depth = ok;
    bad_depth.fold_depth = 0.2f;
    CHECK_THROWS_AS(bad_depth.validate(), std::runtime_error);

    auto bad_pitch = ok;
    bad_pitch.fold_count = 12;
    CHECK_THROWS_WITH_AS(bad_pitch.validate(), doctest::Contains("folds"), std::runtime_error);
}

TEST_CASE("describe: template contract, determinism, rotation") {
    auto spec = default_spec(4, Dof::bend);
    for (uint64_t seed = 0; seed < 8; ++seed) {
        auto text = describe(spec, seed);
        INFO(text);
        CHECK(text.find("four folds") != std::string::npos);
        CHECK(text.find("bend") != std::string::npos);
    }
    CHECK(describe(spec, 3) == describe(spec, 3));

    // consecutive seeds rotate through templates
    std::set<std::string> texts;
    for (uint64_t seed = 0; seed < 4; ++seed) texts.insert(describe(spec, seed));
    CHECK(texts.size() == 4);

    auto hollow = spec;
    hollow.chamber = true;
    CHECK(describe(hollow, 0).find("chamber") != std::string::npos);
}

TEST_CASE("augment: product bound, empty sweep, invariant filtering") {
    std::vector<ActuatorSpec> bases;
    for (int i = 0; i < 5; ++i) {
        auto s = default_spec(3, Dof::extend);
        s.body_radius = 0.12f + 0.005f * static_cast<float>(i);
        bases.push_back(s);
    }
    ParamSweep sweep;
    sweep.fold_count = {2, 3, 4, 5};
    sweep.body_length = {0.62f, 0.72f, 0.82f};
    int skipped = 0;
    auto out = augment(bases, sweep, &skipped);
    CHECK(out.size() <= 60);
    CHECK(out.size() + static_cast<size_t>(skipped) >= 60 - 0);  // dedupe-free sweep here
    for (auto& s : out) CHECK_NOTHROW(s.validate());

    ParamSweep empty;
    auto same = augment(bases, empty, &skipped);
    CHECK(same.size() == bases.size());
    CHECK(skipped == 0);

    // a sweep with invariant-violating combinations reports skips
    ParamSweep bad;
    bad.fold_count = {2, 9};
    bad.body_length = {0.62f};
    augment(bases, bad, &skipped);
    CHECK(skipped > 0);

    // duplicates removed: two identical bases collapse
    std::vector<ActuatorSpec> dupes{bases[0], bases[0]};
    ParamSweep fd;
    fd.fold_depth = {0.045f, 0.055f};
    auto dedup = augment(dupes, fd, &skipped);
    CHECK(dedup.size() == 2);
}

TEST_CASE("augmented corpus has at least 72 unique pairs; no-augment has 12") {
    CorpusConfig cfg;
    cfg.seed = 5;
    int skipped = -1;
    auto aug = build_actuator_corpus(true, cfg, &skipped);
    CHECK(aug.manifest.entries.size() >= 72);
    CHECK(skipped == 0);
    auto base = build_actuator_corpus(false, cfg);
    CHECK(base.manifest.entries.size() == 12);

    // texts mention fold count and dof consistently with the spec
    for (const auto& e : aug.manifest.entries) {
        const auto& s = *e.spec;
        const char* words[] = {"",    "one", "two",   "three", "four", "five",
                               "six", "seven", "eight", "nine",  "ten"};
        CHECK(e.text.find(words[s.fold_count]) != std::string::npos);
        std::string dofword = dof_name(s.dof);
        CHECK(e.text.find(dofword.substr(0, 4)) != std::string::npos);
    }
}

TEST_CASE("generic corpus: determinism, non-empty surfaces, distribution gap") {
    CorpusConfig cfg;
    cfg.seed = 123;
    auto a = build_generic_corpus(40, cfg);
    auto b = build_generic_corpus(40, cfg);
    REQUIRE(a.manifest.entries.size() == 40);
    for (size_t i = 0; i < a.grids.size(); ++i) {
        CHECK(a.grids[i].values == b.grids[i].values);
        CHECK(a.manifest.entries[i].text == b.manifest.entries[i].text);
        bool has_in = false, has_out = false;
        for (float v : a.grids[i].values) {
            has_in = has_in || v < 0;
            has_out = has_out || v >= 0;
        }
        CHECK(has_in);
        CHECK(has_out);
    }

    // occupancy statistics differ from the actuator corpus by far more than 10%
    auto act = build_actuator_corpus(false, cfg);
    auto mean_occ = [](const Dataset& ds) {
        double acc = 0;
        for (const auto& g : ds.grids) {
            auto o = af::geo::occupancy(g);
            acc += static_cast<double>(o.count()) / static_cast<double>(o.bits.size());
        }
        return acc / static_cast<double>(ds.grids.size());
    };
    double gen_occ = mean_occ(a), act_occ = mean_occ(act);
    CHECK(std::abs(gen_occ - act_occ) / std::max(gen_occ, act_occ) > 0.10);
}

TEST_CASE("dataset save/load round-trip, checksum error, split arithmetic") {
    CorpusConfig cfg;
    cfg.seed = 77;
    auto ds = build_generic_corpus(10, cfg);
    std::string dir = "tmp_ds_test";
    save_dataset(ds, dir);
    auto loaded = load_dataset(dir);
    CHECK(loaded.manifest == ds.manifest);
    REQUIRE(loaded.grids.size() == ds.grids.size());
    for (size_t i = 0; i < ds.grids.size(); ++i) CHECK(loaded.grids[i].values == ds.grids[i].values);

    // corrupt one grid file -> checksum error naming the entry id
    {
        std::fstream f(fs::path(dir) / ds.manifest.entries[3].grid_path,
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        char junk = 0x5A;
        f.write(&junk, 1);
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains(ds.manifest.entries[3].id.c_str()),
                         std::runtime_error);
    fs::remove_all(dir);

    // split ratio 0.9 on 70 entries -> 63 train / 7 val
    auto ds70 = build_generic_corpus(70, cfg);
    int train = 0, val = 0;
    for (auto& e : ds70.manifest.entries) (e.split == "train" ? train : val)++;
    CHECK(train == 63);
    CHECK(val == 7);
}

TEST_CASE("corpus generation is a pure function of its config") {
    CorpusConfig cfg;
    cfg.seed = 42;
    auto a = build_actuator_corpus(true, cfg);
    auto b = build_actuator_corpus(true, cfg);
    REQUIRE(a.manifest.entries.size() == b.manifest.entries.size());
    for (size_t i = 0; i < a.grids.size(); ++i) {
        CHECK(a.grids[i].values == b.grids[i].values);
        CHECK(a.manifest.entries[i].text == b.manifest.entries[i].text);
        CHECK(a.manifest.entries[i].split == b.manifest.entries[i].split);
    }
}
