#include "actuforge/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace af::pipe {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items())
        require(allowed.count(key) > 0, str("config: unknown key '", key, "' in ", where));
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    check_keys(j, {"seed", "resolution", "output_dir", "dataset", "vqvae", "diffusion", "sampler",
                   "eval"},
               "top level");
    require(j.contains("seed"), "config: 'seed' is mandatory");

    RunConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("resolution")) c.resolution = j.at("resolution").get<int>();
    require(c.resolution >= 8 && c.resolution % 4 == 0,
            str("config: resolution must be >= 8 and divisible by 4, got ", c.resolution));
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, {"augment", "generic_count", "split_ratio"}, "dataset");
        if (d.contains("augment")) c.dataset.augment = d.at("augment").get<bool>();
        if (d.contains("generic_count")) c.dataset.generic_count = d.at("generic_count").get<int>();
        if (d.contains("split_ratio")) c.dataset.split_ratio = d.at("split_ratio").get<double>();
    }
    if (j.contains("vqvae")) {
        const auto& v = j.at("vqvae");
        check_keys(v,
                   {"base_channels", "codebook_size", "latent_dim", "beta", "epochs",
                    "pretrain_epochs", "lr", "batch"},
                   "vqvae");
        if (v.contains("base_channels")) c.vqvae.base_channels = v.at("base_channels").get<int>();
        if (v.contains("codebook_size")) c.vqvae.codebook_size = v.at("codebook_size").get<int>();
        if (v.contains("latent_dim")) c.vqvae.latent_dim = v.at("latent_dim").get<int>();
        if (v.contains("beta")) c.vqvae.beta = v.at("beta").get<float>();
        if (v.contains("epochs")) c.vqvae.epochs = v.at("epochs").get<int>();
        if (v.contains("pretrain_epochs")) c.vqvae.pretrain_epochs = v.at("pretrain_epochs").get<int>();
        if (v.contains("lr")) c.vqvae.lr = v.at("lr").get<float>();
        if (v.contains("batch")) c.vqvae.batch = v.at("batch").get<int>();
    }
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        check_keys(d,
                   {"timesteps", "beta_start", "beta_end", "epochs", "lr", "batch", "cond_drop_p",
                    "base_channels"},
                   "diffusion");
        if (d.contains("timesteps")) c.diffusion.timesteps = d.at("timesteps").get<int>();
        if (d.contains("beta_start")) c.diffusion.beta_start = d.at("beta_start").get<double>();
        if (d.contains("beta_end")) c.diffusion.beta_end = d.at("beta_end").get<double>();
        if (d.contains("epochs")) c.diffusion.epochs = d.at("epochs").get<int>();
        if (d.contains("lr")) c.diffusion.lr = d.at("lr").get<float>();
        if (d.contains("batch")) c.diffusion.batch = d.at("batch").get<int>();
        if (d.contains("cond_drop_p")) c.diffusion.cond_drop_p = d.at("cond_drop_p").get<float>();
        if (d.contains("base_channels")) c.diffusion.base_channels = d.at("base_channels").get<int>();
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        check_keys(s, {"steps", "guidance", "count"}, "sampler");
        if (s.contains("steps")) c.sampler.steps = s.at("steps").get<int>();
        if (s.contains("guidance")) c.sampler.guidance = s.at("guidance").get<float>();
        if (s.contains("count")) c.sampler.count = s.at("count").get<int>();
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e,
                   {"n_azimuth", "elevations", "image_size", "extractor_seed", "feature_dim", "eps"},
                   "eval");
        if (e.contains("n_azimuth")) c.eval.n_azimuth = e.at("n_azimuth").get<int>();
        if (e.contains("elevations")) c.eval.elevations = e.at("elevations").get<std::vector<float>>();
        if (e.contains("image_size")) c.eval.image_size = e.at("image_size").get<int>();
        if (e.contains("extractor_seed")) c.eval.extractor_seed = e.at("extractor_seed").get<uint64_t>();
        if (e.contains("feature_dim")) c.eval.feature_dim = e.at("feature_dim").get<int>();
        if (e.contains("eps")) c.eval.eps = e.at("eps").get<double>();
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), str("cannot open config file: ", path));
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
    json j{{"seed", seed},
           {"resolution", resolution},
           {"output_dir", output_dir},
           {"dataset",
            json{{"augment", dataset.augment},
                 {"generic_count", dataset.generic_count},
                 {"split_ratio", dataset.split_ratio}}},
           {"vqvae",
            json{{"base_channels", vqvae.base_channels},
                 {"codebook_size", vqvae.codebook_size},
                 {"latent_dim", vqvae.latent_dim},
                 {"beta", vqvae.beta},
                 {"epochs", vqvae.epochs},
                 {"pretrain_epochs", vqvae.pretrain_epochs},
                 {"lr", vqvae.lr},
                 {"batch", vqvae.batch}}},
           {"diffusion",
            json{{"timesteps", diffusion.timesteps},
                 {"beta_start", diffusion.beta_start},
                 {"beta_end", diffusion.beta_end},
                 {"epochs", diffusion.epochs},
                 {"lr", diffusion.lr},
                 {"batch", diffusion.batch},
                 {"cond_drop_p", diffusion.cond_drop_p},
                 {"base_channels", diffusion.base_channels}}},
           {"sampler",
            json{{"steps", sampler.steps},
                 {"guidance", sampler.guidance},
                 {"count", sampler.count}}},
           {"eval",
            json{{"n_azimuth", eval.n_azimuth},
                 {"elevations", eval.elevations},
                 {"image_size", eval.image_size},
                 {"extractor_seed", eval.extractor_seed},
                 {"feature_dim", eval.feature_dim},
                 {"eps", eval.eps}}}};
    return j.dump(2);
}

}  // namespace af::pipe
