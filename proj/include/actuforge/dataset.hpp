#pragma once

#include <optional>
#include <string>
#include <vector>

#include "actuforge/rng.hpp"
#include "actuforge/sdf.hpp"

// Procedural soft pneumatic actuator dataset: parametric bellows shapes with
// templated text descriptions, parameter-sweep augmentation, a generic
// CSG-primitive corpus for pretraining, and manifest persistence.

namespace af::data {

enum class Dof { bend, extend, twist };

std::string dof_name(Dof d);
Dof dof_from_name(const std::string& s);

// smallest admissible fold spacing along the body axis (model units)
inline constexpr float kMinFoldPitch = 0.085f;

struct ActuatorSpec {
    int fold_count = 4;
    Dof dof = Dof::extend;
    float body_length = 0.7f;
    float body_radius = 0.16f;
    float wall_thickness = 0.05f;
    float fold_depth = 0.05f;
    bool chamber = false;
    uint64_t seed = 0;

    void validate() const;  // throws on invariant violations
    bool same_geometry(const ActuatorSpec& o) const;  // ignores seed
};

// Bellows body: capsule trunk smooth-unioned with evenly spaced torus ridges.
// bend: ridges on one side only; extend: full rings; twist: helical coordinate
// twist applied before evaluation. chamber subtracts an inner capsule.
// twist_angle is the total twist over the body length (radians); pass 0 to get
// the untwisted ring geometry regardless of dof.
geo::SdfFn actuator_sdf(const ActuatorSpec& spec, float twist_angle);

// dispatches on spec.dof (twist uses the default total angle below)
inline constexpr float kDefaultTwistAngle = 1.0471975511965976f;  // 60 degrees

geo::SdfGrid build_actuator_sdf(const ActuatorSpec& spec, int resolution, float extent = 1.0f);

// one of the sentence templates filled with number words and dof verbs;
// deterministic in (spec, seed), template index rotates with the seed
std::string describe(const ActuatorSpec& spec, uint64_t seed);

// Cartesian product of base specs with sweep values (absolute overrides);
// invariant-violating combinations are skipped and counted, duplicates removed.
struct ParamSweep {
    std::vector<int> fold_count;
    std::vector<float> body_length;
    std::vector<float> body_radius;
    std::vector<float> wall_thickness;
    std::vector<float> fold_depth;
    std::vector<bool> chamber;

    bool empty() const {
        return fold_count.empty() && body_length.empty() && body_radius.empty() &&
               wall_thickness.empty() && fold_depth.empty() && chamber.empty();
    }
};

std::vector<ActuatorSpec> augment(const std::vector<ActuatorSpec>& bases, const ParamSweep& sweep,
                                  int* skipped = nullptr);

// ---------------------------------------------------------------------------
// shape oracles (used for dataset invariants and for grading generated shapes)

// effective radius per z slice from sub-voxel soft occupancy
std::vector<double> axial_radius_profile(const geo::SdfGrid& g);

// bellows ridge count via hysteresis peak counting on the radius profile;
// returns 0 for shapes without a discernible ridge pattern
int count_folds(const geo::SdfGrid& g);

// bend-type detector: occupied extent asymmetry along +x vs -x
bool is_one_sided(const geo::SdfGrid& g);

// ---------------------------------------------------------------------------
// dataset persistence

struct DatasetEntry {
    std::string id;
    std::optional<ActuatorSpec> spec;  // absent for generic corpus entries
    std::string text;
    std::string grid_path;  // relative to the dataset directory
    std::string checksum;   // fnv1a-64 of the grid file bytes, hex
    std::string split;      // "train" or "val"

    bool operator==(const DatasetEntry&) const;
};

struct DatasetManifest {
    uint64_t seed = 0;
    int resolution = 0;
    float extent = 1.0f;
    float tau = 0.0f;
    std::vector<DatasetEntry> entries;

    bool operator==(const DatasetManifest&) const;
    std::vector<int> split_indices(const std::string& split) const;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<geo::SdfGrid> grids;  // parallel to manifest.entries
};

struct CorpusConfig {
    int resolution = 32;
    float extent = 1.0f;
    uint64_t seed = 0;
    double split_ratio = 0.9;
};

std::vector<ActuatorSpec> base_actuator_specs();
Dataset build_actuator_corpus(bool augmented, const CorpusConfig& cfg, int* skipped = nullptr);
Dataset build_generic_corpus(int n, const CorpusConfig& cfg);

void save_dataset(Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace af::data
