#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actuforge/pipeline.hpp"

#include <filesystem>
#include <fstream>

using namespace af::pipe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

RunConfig micro_config(const std::string& out) {
    RunConfig cfg = RunConfig::from_json_text(R"({
        "seed": 7,
        "resolution": 16,
        "output_dir": ")" + out + R"(",
        "dataset": {"augment": false, "generic_count": 6},
        "vqvae": {"epochs": 8, "pretrain_epochs": 2, "batch": 2},
        "diffusion": {"epochs": 40, "timesteps": 50, "base_channels": 8, "batch": 4},
        "sampler": {"steps": 25, "guidance": 2.0, "count": 2},
        "eval": {"n_azimuth": 2, "image_size": 32, "feature_dim": 16}
    })");
    return cfg;
}

}  // namespace

TEST_CASE("config: defaults, unknown keys, mandatory seed") {
    auto cfg = RunConfig::from_json_text(R"({"seed": 5})");
    CHECK(cfg.seed == 5);
    CHECK(cfg.resolution == 32);
    CHECK(cfg.vqvae.beta == doctest::Approx(0.25f));
    CHECK(cfg.diffusion.timesteps == 400);
    CHECK(cfg.sampler.guidance == doctest::Approx(3.0f));
    CHECK(cfg.eval.elevations == std::vector<float>{30.0f, -30.0f});

    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"seed":1,"bogus":2})"),
                         doctest::Contains("unknown key 'bogus'"), std::runtime_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"seed":1,"vqvae":{"depth":3}})"),
                         doctest::Contains("unknown key 'depth'"), std::runtime_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"resolution":32})"),
                         doctest::Contains("mandatory"), std::runtime_error);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"seed":1,"resolution":17})"), std::runtime_error);

    // round-trip through text keeps the values
    auto cfg2 = RunConfig::from_json_text(cfg.to_json_text());
    CHECK(cfg2.seed == cfg.seed);
    CHECK(cfg2.vqvae.epochs == cfg.vqvae.epochs);
    CHECK(cfg2.eval.eps == cfg.eval.eps);
}

TEST_CASE("parse_arm formats") {
    auto a = parse_arm("aug=true,transfer=false");
    CHECK(a.augmentation);
    CHECK_FALSE(a.transfer);
    auto b = parse_arm("aug=0,tl=1");
    CHECK_FALSE(b.augmentation);
    CHECK(b.transfer);
    CHECK(b.id() == "aug0_tl1");
    CHECK_THROWS_AS(parse_arm("aug=true"), std::runtime_error);
    CHECK_THROWS_AS(parse_arm("aug=true,transfer=maybe"), std::runtime_error);
    CHECK_THROWS_AS(parse_arm("x=1,transfer=0"), std::runtime_error);
}

TEST_CASE("gen-data: reruns are byte-identical; no-augment emits only bases") {
    auto cfg = micro_config("tmp_cli_a");
    cmd_gen_data(cfg);
    auto cfg_b = cfg;
    cfg_b.output_dir = "tmp_cli_b";
    cmd_gen_data(cfg_b);

    CHECK(slurp("tmp_cli_a/data/base/manifest.json") == slurp("tmp_cli_b/data/base/manifest.json"));
    CHECK(slurp("tmp_cli_a/data/generic/manifest.json") ==
          slurp("tmp_cli_b/data/generic/manifest.json"));
    CHECK(slurp("tmp_cli_a/prompts.txt") == slurp("tmp_cli_b/prompts.txt"));
    // spot-check one grid byte-for-byte
    CHECK(slurp("tmp_cli_a/data/base/grids/act_0000.afsd") ==
          slurp("tmp_cli_b/data/base/grids/act_0000.afsd"));

    CHECK_FALSE(fs::exists("tmp_cli_a/data/actuators"));  // augment=false
    auto base = af::data::load_dataset("tmp_cli_a/data/base");
    CHECK(base.manifest.entries.size() == 12);

    fs::remove_all("tmp_cli_b");

    auto cfg_aug = cfg;
    cfg_aug.dataset.augment = true;
    cfg_aug.output_dir = "tmp_cli_aug";
    cmd_gen_data(cfg_aug);
    auto aug = af::data::load_dataset("tmp_cli_aug/data/actuators");
    CHECK(aug.manifest.entries.size() >= 72);
    fs::remove_all("tmp_cli_aug");
    fs::remove_all("tmp_cli_a");
}

TEST_CASE("default_prompts: deterministic, fold/dof words present") {
    RunConfig cfg = RunConfig::from_json_text(R"({"seed": 3})");
    auto p1 = default_prompts(cfg, 10, 99);
    auto p2 = default_prompts(cfg, 10, 99);
    CHECK(p1 == p2);
    CHECK(p1.size() == 10);
    for (const auto& p : p1) CHECK(p.find("folds") != std::string::npos);
}

TEST_CASE("comparison table renders gaps for missing arms") {
    std::vector<ComparisonRow> rows;
    ComparisonRow r;
    r.arm = Arm{true, true};
    r.present = true;
    r.val_iou = 0.8123;
    r.report.normal_std = 0.15;
    r.report.rendered_fd = 42.5;
    r.report.fd3d = 3.25;
    rows.push_back(r);
    auto table = render_comparison_table(rows);
    CHECK(table.find("Data Augmentation") != std::string::npos);
    CHECK(table.find("Transfer Learning") != std::string::npos);
    CHECK(table.find("0.8123") != std::string::npos);
    CHECK(table.find("--") != std::string::npos);  // three missing arms
    CHECK(table.find("Normal std") != std::string::npos);
    CHECK(table.find("RFID (gen)") != std::string::npos);
    CHECK(table.find("3D FD") != std::string::npos);
}

TEST_CASE("micro pipeline: train, sample, eval single arm end to end") {
    auto cfg = micro_config("tmp_cli_pipe");
    fs::remove_all(cfg.output_dir);
    cmd_gen_data(cfg);
    Arm arm{false, false};

    double iou = cmd_train_vqvae(cfg, arm);
    CHECK(iou >= 0.0);
    CHECK(fs::exists("tmp_cli_pipe/arms/aug0_tl0/vqvae.aftn"));
    CHECK(fs::exists("tmp_cli_pipe/arms/aug0_tl0/vqvae_log.ndjson"));

    // ldm requires the vqvae checkpoint; a missing arm errors by name
    CHECK_THROWS_WITH_AS(cmd_train_ldm(cfg, Arm{true, true}), doctest::Contains("prerequisite"),
                         std::runtime_error);

    cmd_train_ldm(cfg, arm);
    CHECK(fs::exists("tmp_cli_pipe/arms/aug0_tl0/ldm.aftn"));

    auto prompts = default_prompts(cfg, 2, 5);
    auto paths = cmd_sample(cfg, arm, prompts, 1234);
    REQUIRE(paths.size() == 2);
    for (const auto& p : paths) CHECK(fs::exists(p));

    // deterministic resampling produces byte-identical grids
    auto paths2 = cmd_sample(cfg, arm, prompts, 1234, "samples2");
    CHECK(slurp(paths[0]) == slurp(paths2[0]));
    CHECK(slurp(paths[1]) == slurp(paths2[1]));

    auto report = cmd_eval_single(cfg, "tmp_cli_pipe/arms/aug0_tl0/samples", std::nullopt);
    CHECK(std::isfinite(report.normal_std));
    CHECK(std::isfinite(report.rendered_fd));
    CHECK(std::isfinite(report.fd3d));

    // transfer arm reuses the reference encoder and logs the pretrain phase
    double iou_tl = cmd_train_vqvae(cfg, Arm{false, true});
    CHECK(iou_tl >= 0.0);
    auto log = slurp("tmp_cli_pipe/arms/aug0_tl1/vqvae_log.ndjson");
    CHECK(log.find("pretrain") != std::string::npos);
    CHECK(log.find("finetune") != std::string::npos);

    fs::remove_all(cfg.output_dir);
}
