#include "actuforge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "actuforge/mesh.hpp"

namespace af::pipe {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

Arm parse_arm(const std::string& text) {
    auto truthy = [](const std::string& v) {
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        fail(str("arm: cannot parse boolean '", v, "'"));
    };
    Arm arm;
    bool saw_aug = false, saw_tl = false;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        size_t eq = part.find('=');
        require(eq != std::string::npos, str("arm: expected key=value, got '", part, "'"));
        std::string key = part.substr(0, eq), val = part.substr(eq + 1);
        if (key == "aug" || key == "augment" || key == "augmentation") {
            arm.augmentation = truthy(val);
            saw_aug = true;
        } else if (key == "tl" || key == "transfer") {
            arm.transfer = truthy(val);
            saw_tl = true;
        } else {
            fail(str("arm: unknown key '", key, "'"));
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    require(saw_aug && saw_tl, str("arm: need both aug= and transfer=, got '", text, "'"));
    return arm;
}

std::string data_dir(const RunConfig& cfg, const std::string& which) {
    return (fs::path(cfg.output_dir) / "data" / which).string();
}

std::string arm_dir(const RunConfig& cfg, const Arm& arm) {
    return (fs::path(cfg.output_dir) / "arms" / arm.id()).string();
}

namespace {

uint64_t derive_seed(const RunConfig& cfg, uint64_t tag) { return Rng(cfg.seed).fork(tag).seed(); }

data::CorpusConfig corpus_cfg(const RunConfig& cfg, uint64_t seed) {
    data::CorpusConfig cc;
    cc.resolution = cfg.resolution;
    cc.extent = 1.0f;
    cc.seed = seed;
    cc.split_ratio = cfg.dataset.split_ratio;
    return cc;
}

data::Dataset load_required_dataset(const RunConfig& cfg, const std::string& which) {
    std::string dir = data_dir(cfg, which);
    require(fs::exists(fs::path(dir) / "manifest.json"),
            str("missing prerequisite: dataset '", which, "' not found at ", dir,
                " (run gen-data first)"));
    return data::load_dataset(dir);
}

vq::VqVaeConfig vqvae_cfg(const RunConfig& cfg) {
    vq::VqVaeConfig vc;
    vc.resolution = cfg.resolution;
    vc.extent = 1.0f;
    vc.tau = 3.0f / static_cast<float>(cfg.resolution);
    vc.base_channels = cfg.vqvae.base_channels;
    vc.latent_dim = cfg.vqvae.latent_dim;
    vc.codebook_size = cfg.vqvae.codebook_size;
    vc.beta = cfg.vqvae.beta;
    return vc;
}

// reference encoder trained on the generic corpus only; shared by the
// transfer arms as their pretraining init and by fd3d as the fixed feature
// encoder (the arms must be measured with one encoder to be comparable)
vq::VqVaeModel ensure_ref_encoder(const RunConfig& cfg) {
    std::string prefix = (fs::path(cfg.output_dir) / "ref_encoder").string();
    if (fs::exists(prefix + ".aftn") && fs::exists(prefix + ".json"))
        return vq::load_vqvae(prefix);
    auto generic = load_required_dataset(cfg, "generic");
    vq::VqVaeModel model(vqvae_cfg(cfg), derive_seed(cfg, 900));
    vq::VqTrainConfig tc;
    tc.epochs = cfg.vqvae.pretrain_epochs;
    tc.lr = cfg.vqvae.lr;
    tc.batch = cfg.vqvae.batch;
    tc.seed = derive_seed(cfg, 901);
    tc.log_path = prefix + "_log.ndjson";
    tc.phase = "pretrain";
    std::error_code ec;
    fs::remove(tc.log_path, ec);
    train_vqvae(model, generic, tc);
    save_vqvae(model, prefix);
    return model;
}

std::string hash8(const std::string& text) {
    return hex64(fnv1a64(text.data(), text.size())).substr(0, 8);
}

metrics::RenderedExtractorConfig extractor_cfg(const RunConfig& cfg) {
    metrics::RenderedExtractorConfig ec;
    ec.seed = cfg.eval.extractor_seed;
    ec.feature_dim = cfg.eval.feature_dim;
    ec.image_size = cfg.eval.image_size;
    return ec;
}

metrics::ViewConfig view_cfg(const RunConfig& cfg) {
    metrics::ViewConfig vc;
    vc.n_azimuth = cfg.eval.n_azimuth;
    vc.elevations = cfg.eval.elevations;
    vc.image_size = cfg.eval.image_size;
    return vc;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);

    int skipped = 0;
    auto base = data::build_actuator_corpus(false, corpus_cfg(cfg, derive_seed(cfg, 1)));
    data::save_dataset(base, data_dir(cfg, "base"));
    std::printf("gen-data: base corpus %zu entries\n", base.manifest.entries.size());

    if (cfg.dataset.augment) {
        auto aug = data::build_actuator_corpus(true, corpus_cfg(cfg, derive_seed(cfg, 2)), &skipped);
        data::save_dataset(aug, data_dir(cfg, "actuators"));
        std::printf("gen-data: augmented corpus %zu entries (%d sweep combinations skipped)\n",
                    aug.manifest.entries.size(), skipped);
    }

    auto generic = data::build_generic_corpus(cfg.dataset.generic_count,
                                              corpus_cfg(cfg, derive_seed(cfg, 3)));
    data::save_dataset(generic, data_dir(cfg, "generic"));
    std::printf("gen-data: generic corpus %zu entries\n", generic.manifest.entries.size());

    // fixed prompt list for sampling and evaluation
    auto prompts = default_prompts(cfg, cfg.sampler.count, derive_seed(cfg, 4));
    std::ofstream os(fs::path(cfg.output_dir) / "prompts.txt");
    require(os.good(), "gen-data: cannot write prompts.txt");
    for (const auto& p : prompts) os << p << "\n";
}

double cmd_train_vqvae(const RunConfig& cfg, const Arm& arm) {
    auto corpus = load_required_dataset(cfg, arm.augmentation ? "actuators" : "base");
    std::string dir = arm_dir(cfg, arm);
    fs::create_directories(dir);
    std::string log = (fs::path(dir) / "vqvae_log.ndjson").string();
    std::error_code ec;
    fs::remove(log, ec);

    vq::VqVaeModel model(vqvae_cfg(cfg), derive_seed(cfg, 10));
    if (arm.transfer) {
        auto ref = ensure_ref_encoder(cfg);
        auto src = ref.parameters();
        auto dst = model.parameters();
        for (size_t i = 0; i < dst.size(); ++i) dst[i]->value.values() = src[i]->value.values();
        // mark the pretraining phase in this arm's log
        std::ofstream marker(log, std::ios::app);
        marker << json{{"phase", "pretrain"},
                       {"note", "initialized from ref_encoder (generic corpus)"},
                       {"epochs", cfg.vqvae.pretrain_epochs}}
                      .dump()
               << "\n";
    }

    vq::VqTrainConfig tc;
    tc.epochs = cfg.vqvae.epochs;
    tc.lr = cfg.vqvae.lr;
    tc.batch = cfg.vqvae.batch;
    tc.seed = derive_seed(cfg, 11 + (arm.augmentation ? 1 : 0) * 2 + (arm.transfer ? 1 : 0));
    tc.log_path = log;
    tc.phase = arm.transfer ? "finetune" : "train";
    train_vqvae(model, corpus, tc);
    save_vqvae(model, (fs::path(dir) / "vqvae").string());

    // shared benchmark: validation split of the augmented corpus
    auto bench = load_required_dataset(cfg, cfg.dataset.augment ? "actuators" : "base");
    double val_iou = vq::reconstruction_iou(model, bench, "val");
    std::ofstream os(fs::path(dir) / "vqvae_summary.json");
    os << json{{"arm", arm.id()},
               {"augmentation", arm.augmentation},
               {"transfer", arm.transfer},
               {"val_iou", val_iou}}
              .dump(2)
       << "\n";
    std::printf("train-vqvae[%s]: benchmark val IoU %.4f\n", arm.id().c_str(), val_iou);
    return val_iou;
}

void cmd_train_ldm(const RunConfig& cfg, const Arm& arm) {
    std::string dir = arm_dir(cfg, arm);
    std::string vq_prefix = (fs::path(dir) / "vqvae").string();
    require(fs::exists(vq_prefix + ".aftn"),
            str("missing prerequisite: VQ-VAE checkpoint ", vq_prefix,
                ".aftn (run train-vqvae for this arm first)"));
    auto vqvae = vq::load_vqvae(vq_prefix);
    auto corpus = load_required_dataset(cfg, arm.augmentation ? "actuators" : "base");

    std::string log = (fs::path(dir) / "ldm_log.ndjson").string();
    std::error_code ec;
    fs::remove(log, ec);

    diff::LdmTrainConfig tc;
    tc.epochs = cfg.diffusion.epochs;
    tc.lr = cfg.diffusion.lr;
    tc.batch = cfg.diffusion.batch;
    tc.seed = derive_seed(cfg, 20 + (arm.augmentation ? 1 : 0) * 2 + (arm.transfer ? 1 : 0));
    tc.cond_drop_p = cfg.diffusion.cond_drop_p;
    tc.timesteps = cfg.diffusion.timesteps;
    tc.beta_start = cfg.diffusion.beta_start;
    tc.beta_end = cfg.diffusion.beta_end;
    tc.base_channels = cfg.diffusion.base_channels;
    tc.log_path = log;
    auto ldm = diff::train_ldm(vqvae, corpus, tc);
    diff::save_ldm(ldm, (fs::path(dir) / "ldm").string());
    std::printf("train-ldm[%s]: done\n", arm.id().c_str());
}

std::vector<std::string> cmd_sample(const RunConfig& cfg, const Arm& arm,
                                    const std::vector<std::string>& prompts, uint64_t seed_base,
                                    const std::string& subdir) {
    std::string dir = arm_dir(cfg, arm);
    std::string vq_prefix = (fs::path(dir) / "vqvae").string();
    std::string ldm_prefix = (fs::path(dir) / "ldm").string();
    require(fs::exists(vq_prefix + ".aftn"),
            str("missing prerequisite: VQ-VAE checkpoint ", vq_prefix, ".aftn"));
    require(fs::exists(ldm_prefix + ".aftn"),
            str("missing prerequisite: denoiser checkpoint ", ldm_prefix, ".aftn"));
    auto vqvae = vq::load_vqvae(vq_prefix);
    auto ldm = diff::load_ldm(ldm_prefix);

    fs::path out = fs::path(dir) / subdir;
    fs::create_directories(out);
    std::vector<std::string> grid_paths;
    for (size_t i = 0; i < prompts.size(); ++i) {
        // unknown tokens warn but do not abort
        for (const auto& tok : text::split_tokens(prompts[i]))
            if (!ldm.vocab.token_to_id.count(tok))
                std::fprintf(stderr, "sample: token '%s' not in vocabulary, mapped to UNK\n",
                             tok.c_str());
        diff::SamplerConfig sc;
        sc.steps = cfg.sampler.steps;
        sc.guidance_scale = cfg.sampler.guidance;
        sc.seed = seed_base + i;
        auto grid = diff::sample_shape(ldm, vqvae, prompts[i], sc);

        std::string stem = str(hash8(prompts[i]), "_s", i);
        std::string grid_path = (out / (stem + ".afsd")).string();
        geo::save_grid(grid_path, grid);
        grid_paths.push_back(grid_path);

        bool has_in = false, has_out = false;
        for (float v : grid.values) {
            has_in = has_in || v < 0;
            has_out = has_out || v >= 0;
        }
        if (has_in && has_out) {
            geo::save_obj((out / (stem + ".obj")).string(), geo::marching_cubes(grid));
        } else {
            std::fprintf(stderr, "sample: %s has no surface, OBJ skipped\n", stem.c_str());
        }
    }
    return grid_paths;
}

metrics::MetricReport cmd_eval_single(const RunConfig& cfg, const std::string& gen_dir,
                                      std::optional<metrics::ArmLabel> arm) {
    auto real = load_required_dataset(cfg, cfg.dataset.augment ? "actuators" : "base");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(gen_dir))
        if (entry.path().extension() == ".afsd") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    require(!files.empty(), str("eval: no .afsd grids found in ", gen_dir));
    std::vector<geo::SdfGrid> gen;
    for (const auto& f : files) gen.push_back(geo::load_grid(f));

    auto encoder = ensure_ref_encoder(cfg);
    return metrics::eval_report(real.grids, gen, encoder, extractor_cfg(cfg), view_cfg(cfg), arm,
                                cfg.eval.eps);
}

std::string render_comparison_table(const std::vector<ComparisonRow>& rows) {
    auto find = [&](bool aug, bool tl) -> const ComparisonRow* {
        for (const auto& r : rows)
            if (r.arm.augmentation == aug && r.arm.transfer == tl) return &r;
        return nullptr;
    };
    const std::pair<bool, bool> order[4] = {{false, false}, {false, true}, {true, false}, {true, true}};
    std::ostringstream os;
    auto row = [&](const std::string& label, auto getter, const char* fmt) {
        os << str(label);
        os << std::string(20 - label.size(), ' ');
        for (auto [aug, tl] : order) {
            const ComparisonRow* r = find(aug, tl);
            char buf[32];
            if (r && r->present) {
                snprintf(buf, sizeof(buf), fmt, getter(*r));
                os << str(std::string(10 - std::min<size_t>(10, strlen(buf)), ' '), buf);
            } else {
                os << "        --";
            }
        }
        os << "\n";
    };
    os << "Data Augmentation           no        no       yes       yes\n";
    os << "Transfer Learning           no       yes        no       yes\n";
    row("Val IoU", [](const ComparisonRow& r) { return r.val_iou; }, "%.4f");
    row("Normal std", [](const ComparisonRow& r) { return r.report.normal_std; }, "%.4f");
    row("RFID (gen)", [](const ComparisonRow& r) { return r.report.rendered_fd; }, "%.3f");
    row("3D FD", [](const ComparisonRow& r) { return r.report.fd3d; }, "%.3f");
    return os.str();
}

bool cmd_eval_compare(const RunConfig& cfg, std::vector<ComparisonRow>* rows_out) {
    std::vector<ComparisonRow> rows;
    bool all_finite = true;
    for (const auto& arm : kArms) {
        ComparisonRow row;
        row.arm = arm;
        std::string dir = arm_dir(cfg, arm);
        std::string samples = (fs::path(dir) / "samples").string();
        std::string summary = (fs::path(dir) / "vqvae_summary.json").string();
        if (fs::exists(samples) && fs::exists(summary)) {
            std::ifstream is(summary);
            json sj = json::parse(is);
            row.val_iou = sj.at("val_iou").get<double>();
            metrics::ArmLabel label;
            label.augmentation = arm.augmentation;
            label.transfer = arm.transfer;
            row.report = cmd_eval_single(cfg, samples, label);
            row.present = true;
            metrics::save_report(row.report, (fs::path(dir) / "report.json").string());
            all_finite = all_finite && std::isfinite(row.report.normal_std) &&
                         std::isfinite(row.report.rendered_fd) && std::isfinite(row.report.fd3d);
        } else {
            row.present = false;
            all_finite = false;
        }
        rows.push_back(std::move(row));
    }

    std::string table = render_comparison_table(rows);
    fs::create_directories(fs::path(cfg.output_dir) / "eval");
    std::ofstream os(fs::path(cfg.output_dir) / "eval" / "comparison.txt");
    os << table;
    json cj = json::array();
    for (const auto& r : rows) {
        if (!r.present) {
            cj.push_back(json{{"arm", r.arm.id()}, {"present", false}});
            continue;
        }
        cj.push_back(json{{"arm", r.arm.id()},
                          {"present", true},
                          {"augmentation", r.arm.augmentation},
                          {"transfer", r.arm.transfer},
                          {"val_iou", r.val_iou},
                          {"normal_std", r.report.normal_std},
                          {"rendered_fd", r.report.rendered_fd},
                          {"fd3d", r.report.fd3d}});
    }
    std::ofstream js(fs::path(cfg.output_dir) / "eval" / "comparison.json");
    js << cj.dump(2) << "\n";
    std::fputs(table.c_str(), stdout);
    if (rows_out) *rows_out = std::move(rows);
    return all_finite;
}

bool cmd_ablation(const RunConfig& cfg) {
    if (!fs::exists(fs::path(data_dir(cfg, "base")) / "manifest.json")) cmd_gen_data(cfg);

    std::vector<std::string> prompts = default_prompts(cfg, cfg.sampler.count, derive_seed(cfg, 4));
    for (const auto& arm : kArms) {
        std::string dir = arm_dir(cfg, arm);
        if (!fs::exists(fs::path(dir) / "vqvae.aftn")) cmd_train_vqvae(cfg, arm);
        if (!fs::exists(fs::path(dir) / "ldm.aftn")) cmd_train_ldm(cfg, arm);
        if (!fs::exists(fs::path(dir) / "samples")) cmd_sample(cfg, arm, prompts, derive_seed(cfg, 40));
    }
    return cmd_eval_compare(cfg);
}

std::vector<std::string> default_prompts(const RunConfig& cfg, int count, uint64_t seed) {
    (void)cfg;
    Rng rng(seed);
    std::vector<std::string> prompts;
    for (int i = 0; i < count; ++i) {
        data::ActuatorSpec spec;
        spec.fold_count = 2 + rng.uniform_int(5);
        int dof = rng.uniform_int(3);
        spec.dof = dof == 0 ? data::Dof::bend : dof == 1 ? data::Dof::extend : data::Dof::twist;
        prompts.push_back(data::describe(spec, seed + static_cast<uint64_t>(i)));
    }
    return prompts;
}

}  // namespace af::pipe
