#include "actuforge/diffusion.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "actuforge/checkpoint.hpp"

namespace af::diff {

using json = nlohmann::ordered_json;

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    require(steps >= 1, str("make_schedule: need at least one step, got ", steps));
    require(beta_start > 0 && beta_start <= beta_end && beta_end < 1,
            str("make_schedule: need 0 < beta_start <= beta_end < 1, got [", beta_start, ", ",
                beta_end, "]"));
    NoiseSchedule s;
    s.steps = steps;
    s.beta.assign(steps + 1, 0.0);
    s.alpha.assign(steps + 1, 1.0);
    s.alpha_bar.assign(steps + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
        double frac = steps > 1 ? static_cast<double>(t - 1) / static_cast<double>(steps - 1) : 0.0;
        s.beta[t] = beta_start + frac * (beta_end - beta_start);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

std::vector<float> q_sample(const std::vector<float>& z0, int t, const std::vector<float>& eps,
                            const NoiseSchedule& s) {
    require(t >= 1 && t <= s.steps, str("q_sample: t=", t, " outside [1,", s.steps, "]"));
    require(z0.size() == eps.size(), "q_sample: z0 and eps sizes differ");
    float a = static_cast<float>(std::sqrt(s.alpha_bar[t]));
    float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bar[t]));
    std::vector<float> out(z0.size());
    for (size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor timestep_embedding(int t, int dim) {
    require(dim % 2 == 0, "timestep_embedding: dim must be even");
    int half = dim / 2;
    std::vector<float> v(static_cast<size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                               static_cast<double>(half - 1));
        v[static_cast<size_t>(i)] = static_cast<float>(std::sin(t * freq));
        v[static_cast<size_t>(half + i)] = static_cast<float>(std::cos(t * freq));
    }
    return Tensor::from({1, dim}, std::move(v));
}

UNet3d::UNet3d(const UNetConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    Rng rng(seed);
    const int b = cfg.base_channels, d = cfg.latent_dim, g = cfg.groups, e = cfg.embed_dim;
    time_l1 = Linear("unet.time_l1", e, e, rng);
    time_l2 = Linear("unet.time_l2", e, e, rng);
    in_conv = Conv3dLayer("unet.in", d, b, 3, 1, 1, rng);
    down_r1 = ResBlock3d("unet.down_r1", b, b, g, e, rng, true);
    down1 = Conv3dLayer("unet.down1", b, 2 * b, 2, 2, 0, rng);
    down_r2 = ResBlock3d("unet.down_r2", 2 * b, 2 * b, g, e, rng, true);
    down2 = Conv3dLayer("unet.down2", 2 * b, 2 * b, 2, 2, 0, rng);
    mid = ResBlock3d("unet.mid", 2 * b, 2 * b, g, e, rng, true);
    up1 = ConvTranspose3dLayer("unet.up1", 2 * b, 2 * b, 2, 2, 0, rng);
    up_r1 = ResBlock3d("unet.up_r1", 4 * b, 2 * b, g, e, rng, true);
    up2 = ConvTranspose3dLayer("unet.up2", 2 * b, b, 2, 2, 0, rng);
    up_r2 = ResBlock3d("unet.up_r2", 2 * b, b, g, e, rng, true);
    out_norm = GroupNormLayer("unet.out_norm", b, g);
    out_conv = Conv3dLayer("unet.out", b, d, 3, 1, 1, rng);
    // zero-initialized output head: the first prediction is exactly zero,
    // which stabilizes early eps-training
    std::fill(out_conv.w.value.values().begin(), out_conv.w.value.values().end(), 0.0f);
}

Tensor UNet3d::forward(const Tensor& z_t, int t, const Tensor& cond) const {
    const int s = cfg.latent_extent;
    require(z_t.shape() == Shape{cfg.latent_dim, s, s, s},
            str("unet: latent shape ", shape_str(z_t.shape()), " does not match config"));
    require(cond.shape() == Shape{1, cfg.embed_dim},
            str("unet: conditioning shape ", shape_str(cond.shape()), " must be [1,",
                cfg.embed_dim, "]"));
    Tensor t_emb = time_l2.forward(silu(time_l1.forward(timestep_embedding(t, cfg.embed_dim))));
    Tensor c = add(t_emb, cond);

    Tensor h0 = in_conv.forward(z_t);
    Tensor h1 = down_r1.forward(h0, &c);
    Tensor h2 = down_r2.forward(down1.forward(h1), &c);
    Tensor h3 = mid.forward(down2.forward(h2), &c);
    Tensor u1 = up_r1.forward(concat_channels(up1.forward(h3), h2), &c);
    Tensor u2 = up_r2.forward(concat_channels(up2.forward(u1), h1), &c);
    return out_conv.forward(silu(out_norm.forward(u2)));
}

std::vector<Parameter*> UNet3d::parameters() {
    std::vector<Parameter*> ps;
    time_l1.collect(ps);
    time_l2.collect(ps);
    in_conv.collect(ps);
    down_r1.collect(ps);
    down1.collect(ps);
    down_r2.collect(ps);
    down2.collect(ps);
    mid.collect(ps);
    up1.collect(ps);
    up_r1.collect(ps);
    up2.collect(ps);
    up_r2.collect(ps);
    out_norm.collect(ps);
    out_conv.collect(ps);
    return ps;
}

namespace {

void append_log(const std::string& path, const std::string& line) {
    if (path.empty()) return;
    std::ofstream os(path, std::ios::app);
    require(os.good(), str("cannot append to log: ", path));
    os << line << "\n";
}

std::vector<int> all_pad_ids() { return std::vector<int>(text::kMaxSeqLen, text::Vocabulary::kPad); }

}  // namespace

LdmModel train_ldm(const vq::VqVaeModel& vqvae, const data::Dataset& ds,
                   const LdmTrainConfig& cfg, std::vector<LdmEpochStats>* history) {
    require(!ds.manifest.entries.empty(), "train_ldm: dataset is empty");
    auto train_idx = ds.manifest.split_indices("train");
    require(!train_idx.empty(), "train_ldm: train split is empty");

    const int d = vqvae.cfg.latent_dim;
    const int s = vqvae.cfg.latent_extent();
    const int64_t sites = static_cast<int64_t>(s) * s * s;

    // frozen VQ-VAE: encode the train split once, no gradients
    std::vector<std::vector<float>> latents;
    {
        NoGradGuard ng;
        for (int i : train_idx) latents.push_back(vq::encode(vqvae, ds.grids[i]).values());
    }

    LdmModel model;
    model.schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);

    // per-channel standardization over the train latents
    model.latent_mu.assign(d, 0.0f);
    model.latent_sigma.assign(d, 1.0f);
    for (int c = 0; c < d; ++c) {
        double m = 0.0;
        for (auto& z : latents)
            for (int64_t i = 0; i < sites; ++i) m += z[c * sites + i];
        m /= static_cast<double>(latents.size() * sites);
        double var = 0.0;
        for (auto& z : latents)
            for (int64_t i = 0; i < sites; ++i) {
                double diff = z[c * sites + i] - m;
                var += diff * diff;
            }
        var /= static_cast<double>(latents.size() * sites);
        model.latent_mu[c] = static_cast<float>(m);
        model.latent_sigma[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    }
    for (auto& z : latents)
        for (int c = 0; c < d; ++c)
            for (int64_t i = 0; i < sites; ++i)
                z[c * sites + i] = (z[c * sites + i] - model.latent_mu[c]) / model.latent_sigma[c];

    // vocabulary and tokenized texts
    std::vector<std::string> texts;
    for (const auto& e : ds.manifest.entries) texts.push_back(e.text);
    model.vocab = text::Vocabulary::build(texts);
    std::vector<std::vector<int>> token_ids;
    for (int i : train_idx)
        token_ids.push_back(text::tokenize(model.vocab, ds.manifest.entries[i].text));

    Rng rng(cfg.seed);
    text::TextEncoderConfig tcfg;
    tcfg.vocab_size = model.vocab.size();
    tcfg.embed_dim = 64;
    Rng text_rng = rng.fork(1);
    model.text_encoder = text::TextEncoder(tcfg, text_rng);
    UNetConfig ucfg;
    ucfg.latent_dim = d;
    ucfg.latent_extent = s;
    ucfg.base_channels = cfg.base_channels;
    ucfg.embed_dim = tcfg.embed_dim;
    model.unet = UNet3d(ucfg, rng.fork(2).seed());

    auto params = model.unet.parameters();
    for (auto* p : model.text_encoder.parameters()) params.push_back(p);
    AdamConfig adam;
    adam.lr = cfg.lr;

    const auto pad_ids = all_pad_ids();
    const Shape latent_shape{d, s, s, s};
    const int n = static_cast<int>(latents.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng erng = rng.fork(100 + epoch);
        erng.shuffle(order);
        double ep_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += cfg.batch) {
            int stop = std::min(n, start + cfg.batch);
            Tensor total;
            for (int bi = start; bi < stop; ++bi) {
                int idx = order[bi];
                int t = 1 + erng.uniform_int(model.schedule.steps);
                std::vector<float> eps(latents[idx].size());
                for (auto& x : eps) x = erng.normalf();
                auto zt = q_sample(latents[idx], t, eps, model.schedule);
                bool drop = erng.uniform() < cfg.cond_drop_p;
                Tensor cond = model.text_encoder.forward(drop ? pad_ids : token_ids[idx]);
                Tensor pred = model.unet.forward(Tensor::from(latent_shape, std::move(zt)), t, cond);
                Tensor diff = sub(pred, Tensor::from(latent_shape, std::move(eps)));
                Tensor loss_i = mean(mul(diff, diff));
                total = total.defined() ? add(total, loss_i) : loss_i;
            }
            Tensor loss = scale(total, 1.0f / static_cast<float>(stop - start));
            double lv = loss.item();
            require(std::isfinite(lv), str("train_ldm: non-finite loss ", lv, " at epoch ", epoch,
                                           ", batch ", batches, "; aborting"));
            zero_grads(params);
            backward(loss);
            adam_step(params, adam);
            ep_loss += lv;
            ++batches;
        }
        LdmEpochStats st{epoch, ep_loss / std::max(1, batches)};
        if (history) history->push_back(st);
        append_log(cfg.log_path, json{{"phase", cfg.phase}, {"epoch", epoch}, {"loss", st.loss}}.dump());
    }
    return model;
}

geo::SdfGrid sample_shape(const LdmModel& ldm, const vq::VqVaeModel& vqvae,
                          const std::string& prompt, const SamplerConfig& sampler) {
    NoGradGuard ng;
    const auto& sched = ldm.schedule;
    const int d = vqvae.cfg.latent_dim;
    const int s = vqvae.cfg.latent_extent();
    const int64_t sites = static_cast<int64_t>(s) * s * s;
    const Shape latent_shape{d, s, s, s};
    const float gs = sampler.guidance_scale;
    require(gs >= 0.0f, str("sample: guidance scale must be >= 0, got ", gs));

    int nsteps = sampler.steps <= 0 ? sched.steps : sampler.steps;
    require(nsteps <= sched.steps, str("sample: steps ", nsteps, " exceed schedule T=", sched.steps));
    // strictly decreasing timestep subset from T to 1
    std::vector<int> ts(nsteps);
    for (int i = 0; i < nsteps; ++i) {
        double frac = nsteps > 1 ? static_cast<double>(i) / static_cast<double>(nsteps - 1) : 0.0;
        ts[i] = static_cast<int>(std::lround(sched.steps - frac * (sched.steps - 1)));
    }

    Tensor cond = ldm.text_encoder.forward(text::tokenize(ldm.vocab, prompt));
    Tensor uncond = ldm.text_encoder.forward(all_pad_ids());

    Rng rng(sampler.seed);
    std::vector<float> z(static_cast<size_t>(d) * sites);
    for (auto& x : z) x = rng.normalf();

    for (int i = 0; i < nsteps; ++i) {
        int t = ts[i];
        int t_prev = i + 1 < nsteps ? ts[i + 1] : 0;
        Tensor zt = Tensor::from(latent_shape, z);

        std::vector<float> eps;
        if (gs == 0.0f) {
            eps = ldm.unet.forward(zt, t, uncond).values();
        } else if (gs == 1.0f) {
            eps = ldm.unet.forward(zt, t, cond).values();
        } else {
            auto ec = ldm.unet.forward(zt, t, cond).values();
            auto eu = ldm.unet.forward(zt, t, uncond).values();
            eps.resize(ec.size());
            for (size_t j = 0; j < eps.size(); ++j) eps[j] = eu[j] + gs * (ec[j] - eu[j]);
        }

        double abar_t = sched.alpha_bar[t];
        double abar_prev = sched.alpha_bar[t_prev];
        double alpha_ts = abar_t / abar_prev;
        double inv_sqrt_abar = 1.0 / std::sqrt(abar_t);
        double sqrt_one_minus = std::sqrt(1.0 - abar_t);
        double post_var = (1.0 - alpha_ts) * (1.0 - abar_prev) / (1.0 - abar_t);
        double sigma = std::sqrt(std::max(0.0, post_var));
        double c_zt = std::sqrt(alpha_ts) * (1.0 - abar_prev) / (1.0 - abar_t);
        double c_z0 = std::sqrt(abar_prev) * (1.0 - alpha_ts) / (1.0 - abar_t);

        for (size_t j = 0; j < z.size(); ++j) {
            double z0_hat = (z[j] - sqrt_one_minus * eps[j]) * inv_sqrt_abar;
            double mean = c_zt * z[j] + c_z0 * z0_hat;
            double noise = t_prev > 0 ? rng.normal() : 0.0;
            z[j] = static_cast<float>(mean + sigma * noise);
        }
    }

    // de-standardize, quantize through the codebook, decode
    for (int c = 0; c < d; ++c)
        for (int64_t i = 0; i < sites; ++i)
            z[c * sites + i] = z[c * sites + i] * ldm.latent_sigma[c] + ldm.latent_mu[c];
    Tensor z0 = Tensor::from(latent_shape, std::move(z));
    auto lc = vq::quantize(z0, vqvae.codebook);
    return vq::decode(vqvae, lc.quantized);
}

void save_ldm(LdmModel& model, const std::string& prefix) {
    auto params = model.unet.parameters();
    for (auto* p : model.text_encoder.parameters()) params.push_back(p);
    save_parameters(prefix + ".aftn", params);

    json vocab_j = json::object();
    for (const auto& [tok, id] : model.vocab.token_to_id) vocab_j[tok] = id;
    json j{{"kind", "ldm"},
           {"timesteps", model.schedule.steps},
           {"beta_start", model.schedule.beta[1]},
           {"beta_end", model.schedule.beta[model.schedule.steps]},
           {"latent_dim", model.unet.cfg.latent_dim},
           {"latent_extent", model.unet.cfg.latent_extent},
           {"base_channels", model.unet.cfg.base_channels},
           {"embed_dim", model.unet.cfg.embed_dim},
           {"token_dim", model.text_encoder.cfg.token_dim},
           {"latent_mu", model.latent_mu},
           {"latent_sigma", model.latent_sigma},
           {"vocab", std::move(vocab_j)}};
    std::ofstream os(prefix + ".json");
    require(os.good(), str("cannot write ldm sidecar: ", prefix, ".json"));
    os << j.dump(2) << "\n";
}

LdmModel load_ldm(const std::string& prefix) {
    std::ifstream is(prefix + ".json");
    require(is.good(), str("cannot open ldm sidecar: ", prefix, ".json"));
    json j = json::parse(is);
    require(j.at("kind") == "ldm", str("not an ldm checkpoint sidecar: ", prefix, ".json"));
    LdmModel model;
    model.schedule = make_schedule(j.at("timesteps").get<int>(), j.at("beta_start").get<double>(),
                                   j.at("beta_end").get<double>());
    for (auto& [tok, id] : j.at("vocab").items()) {
        if (tok == "<pad>" || tok == "<unk>") continue;
        model.vocab.token_to_id.emplace(tok, id.get<int>());
    }
    model.latent_mu = j.at("latent_mu").get<std::vector<float>>();
    model.latent_sigma = j.at("latent_sigma").get<std::vector<float>>();

    Rng rng(0);
    text::TextEncoderConfig tcfg;
    tcfg.vocab_size = model.vocab.size();
    tcfg.token_dim = j.at("token_dim").get<int>();
    tcfg.embed_dim = j.at("embed_dim").get<int>();
    model.text_encoder = text::TextEncoder(tcfg, rng);
    UNetConfig ucfg;
    ucfg.latent_dim = j.at("latent_dim").get<int>();
    ucfg.latent_extent = j.at("latent_extent").get<int>();
    ucfg.base_channels = j.at("base_channels").get<int>();
    ucfg.embed_dim = tcfg.embed_dim;
    model.unet = UNet3d(ucfg, 0);

    auto params = model.unet.parameters();
    for (auto* p : model.text_encoder.parameters()) params.push_back(p);
    load_parameters(prefix + ".aftn", params);
    return model;
}

}  // namespace af::diff
