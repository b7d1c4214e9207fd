#include "actuforge/vqvae.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "actuforge/checkpoint.hpp"

namespace af::vq {

using json = nlohmann::ordered_json;

VqVaeModel::VqVaeModel(const VqVaeConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    require(cfg.resolution % 4 == 0, str("vqvae: resolution must be divisible by 4, got ",
                                         cfg.resolution));
    require(cfg.codebook_size >= 2, str("vqvae: codebook needs K >= 2, got ", cfg.codebook_size));
    Rng rng(seed);
    const int c = cfg.base_channels, d = cfg.latent_dim, g = cfg.groups;
    enc_in = Conv3dLayer("enc_in", 1, c, 3, 1, 1, rng);
    enc_down1 = Conv3dLayer("enc_down1", c, 2 * c, 4, 2, 1, rng);
    enc_res1 = ResBlock3d("enc_res1", 2 * c, 2 * c, g, 0, rng);
    enc_down2 = Conv3dLayer("enc_down2", 2 * c, 4 * c, 4, 2, 1, rng);
    enc_res2 = ResBlock3d("enc_res2", 4 * c, 4 * c, g, 0, rng);
    enc_norm = GroupNormLayer("enc_norm", 4 * c, g);
    enc_out = Conv3dLayer("enc_out", 4 * c, d, 3, 1, 1, rng);

    dec_in = Conv3dLayer("dec_in", d, 4 * c, 3, 1, 1, rng);
    dec_res1 = ResBlock3d("dec_res1", 4 * c, 4 * c, g, 0, rng);
    dec_up1 = ConvTranspose3dLayer("dec_up1", 4 * c, 2 * c, 2, 2, 0, rng);
    dec_res2 = ResBlock3d("dec_res2", 2 * c, 2 * c, g, 0, rng);
    dec_up2 = ConvTranspose3dLayer("dec_up2", 2 * c, c, 2, 2, 0, rng);
    dec_out = Conv3dLayer("dec_out", c, 1, 3, 1, 1, rng);

    codebook = Parameter("codebook", init_normal({cfg.codebook_size, d}, 0.5f, rng));
}

std::vector<Parameter*> VqVaeModel::parameters() {
    std::vector<Parameter*> ps;
    enc_in.collect(ps);
    enc_down1.collect(ps);
    enc_res1.collect(ps);
    enc_down2.collect(ps);
    enc_res2.collect(ps);
    enc_norm.collect(ps);
    enc_out.collect(ps);
    dec_in.collect(ps);
    dec_res1.collect(ps);
    dec_up1.collect(ps);
    dec_res2.collect(ps);
    dec_up2.collect(ps);
    dec_out.collect(ps);
    ps.push_back(&codebook);
    return ps;
}

Tensor VqVaeModel::encode_tensor(const Tensor& x) const {
    require(x.shape() == Shape{1, cfg.resolution, cfg.resolution, cfg.resolution},
            str("vqvae encode: input shape ", shape_str(x.shape()), " does not match model resolution ",
                cfg.resolution));
    Tensor h = silu(enc_in.forward(x));
    h = enc_down1.forward(h);
    h = enc_res1.forward(h);
    h = enc_down2.forward(h);
    h = enc_res2.forward(h);
    h = silu(enc_norm.forward(h));
    return enc_out.forward(h);
}

Tensor VqVaeModel::decode_tensor(const Tensor& zq) const {
    const int s = cfg.latent_extent();
    require(zq.shape() == Shape{cfg.latent_dim, s, s, s},
            str("vqvae decode: latent shape ", shape_str(zq.shape()), " does not match config [",
                cfg.latent_dim, ",", s, ",", s, ",", s, "]"));
    Tensor h = dec_in.forward(zq);
    h = dec_res1.forward(h);
    h = dec_up1.forward(h);
    h = dec_res2.forward(h);
    h = silu(dec_up2.forward(h));
    return tanh_op(dec_out.forward(h));
}

Tensor VqVaeModel::grid_to_tensor(const geo::SdfGrid& g) const {
    require(g.resolution == cfg.resolution,
            str("vqvae: grid resolution ", g.resolution, " does not match model resolution ",
                cfg.resolution));
    std::vector<float> vals(g.values.size());
    float inv = 1.0f / cfg.tau;
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = g.values[i] * inv;
    return Tensor::from({1, cfg.resolution, cfg.resolution, cfg.resolution}, std::move(vals));
}

geo::SdfGrid VqVaeModel::tensor_to_grid(const Tensor& y) const {
    geo::SdfGrid g;
    g.resolution = cfg.resolution;
    g.extent = cfg.extent;
    g.tau = cfg.tau;
    g.values.resize(y.values().size());
    for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = y.values()[i] * cfg.tau;
    return g;
}

LatentCode quantize(const Tensor& pre_quant, const Parameter& codebook) {
    const auto& shape = pre_quant.shape();
    require(shape.size() == 4, str("quantize: expected rank-4 latent, got ", shape_str(shape)));
    const int d = shape[0];
    require(codebook.value.shape().size() == 2 && codebook.value.shape()[1] == d,
            str("quantize: codebook width ", shape_str(codebook.value.shape()),
                " does not match latent dim ", d));
    const int k = codebook.value.shape()[0];
    const int64_t n = pre_quant.size() / d;

    LatentCode lc;
    lc.pre_quant = pre_quant;
    lc.indices.resize(n);
    const auto& zv = pre_quant.values();
    const auto& cb = codebook.value.values();
    for (int64_t site = 0; site < n; ++site) {
        int best = 0;
        double best_d = 1e300;
        for (int row = 0; row < k; ++row) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) {
                double diff = static_cast<double>(zv[c * n + site]) - cb[row * d + c];
                acc += diff * diff;
            }
            if (acc < best_d) {  // strict keeps the lowest index on ties
                best_d = acc;
                best = row;
            }
        }
        lc.indices[site] = best;
    }

    lc.selected = gather_rows(codebook.value, lc.indices);          // [n, d]
    Tensor e_grid = reshape(transpose2d(lc.selected), shape);       // [d,s,s,s]
    // straight-through: values of e_grid, gradient of pre_quant
    lc.quantized = add(pre_quant, detach(sub(e_grid, pre_quant)));
    return lc;
}

Tensor vq_loss(const Tensor& x, const Tensor& xhat, const Tensor& pre_quant,
               const Tensor& selected, float beta) {
    require(x.shape() == xhat.shape(),
            str("vq_loss: x and xhat shapes differ: ", shape_str(x.shape()), " vs ",
                shape_str(xhat.shape())));
    const int d = pre_quant.shape()[0];
    const int64_t n = pre_quant.size() / d;
    require(selected.shape() == Shape{static_cast<int>(n), d},
            str("vq_loss: selected rows shape ", shape_str(selected.shape()), " inconsistent with latent"));

    Tensor rdiff = sub(x, xhat);
    Tensor recon = mean(mul(rdiff, rdiff));

    Tensor z_rows = transpose2d(reshape(pre_quant, {d, static_cast<int>(n)}));  // [n, d]
    float inv_n = 1.0f / static_cast<float>(n);

    Tensor cb_diff = sub(detach(z_rows), selected);   // codebook pulled toward sg[z_e]
    Tensor cb_term = scale(sum(mul(cb_diff, cb_diff)), inv_n);

    Tensor cm_diff = sub(z_rows, detach(selected));   // encoder committed to sg[e]
    Tensor commit = scale(sum(mul(cm_diff, cm_diff)), inv_n * beta);

    return add(add(recon, cb_term), commit);
}

Tensor encode(const VqVaeModel& model, const geo::SdfGrid& grid) {
    return model.encode_tensor(model.grid_to_tensor(grid));
}

geo::SdfGrid decode(const VqVaeModel& model, const Tensor& quantized) {
    return model.tensor_to_grid(model.decode_tensor(quantized));
}

geo::SdfGrid reconstruct(const VqVaeModel& model, const geo::SdfGrid& grid) {
    NoGradGuard ng;
    Tensor pre = encode(model, grid);
    LatentCode lc = quantize(pre, model.codebook);
    return decode(model, lc.quantized);
}

namespace {

void append_log(const std::string& path, const std::string& line) {
    if (path.empty()) return;
    std::ofstream os(path, std::ios::app);
    require(os.good(), str("cannot append to log: ", path));
    os << line << "\n";
}

}  // namespace

std::vector<VqEpochStats> train_vqvae(VqVaeModel& model, const data::Dataset& ds,
                                      const VqTrainConfig& cfg) {
    require(!ds.manifest.entries.empty(), "train_vqvae: dataset is empty");
    auto train_idx = ds.manifest.split_indices("train");
    auto val_idx = ds.manifest.split_indices("val");
    require(!train_idx.empty(), "train_vqvae: train split is empty");

    auto params = model.parameters();
    AdamConfig adam;
    adam.lr = cfg.lr;
    Rng rng(cfg.seed);
    const int k = model.cfg.codebook_size;
    const int d = model.cfg.latent_dim;

    std::vector<VqEpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = train_idx;
        rng.fork(1000 + epoch).shuffle(order);

        std::vector<int> usage(k, 0);
        std::vector<std::vector<float>> stash;  // pre-quant latents of the last batch
        double ep_recon = 0.0, ep_vq = 0.0;
        int batches = 0;

        for (size_t start = 0; start < order.size(); start += cfg.batch) {
            size_t stop = std::min(order.size(), start + cfg.batch);
            Tensor total;
            double batch_recon = 0.0;
            stash.clear();
            for (size_t bi = start; bi < stop; ++bi) {
                Tensor x = model.grid_to_tensor(ds.grids[order[bi]]);
                Tensor pre = model.encode_tensor(x);
                LatentCode lc = quantize(pre, model.codebook);
                for (int idx : lc.indices) usage[idx]++;
                Tensor xhat = model.decode_tensor(lc.quantized);
                Tensor loss_i = vq_loss(x, xhat, pre, lc.selected, model.cfg.beta);
                total = total.defined() ? add(total, loss_i) : loss_i;
                {
                    Tensor rd = sub(x, xhat);
                    batch_recon += mean(mul(rd, rd)).item();
                }
                stash.push_back(lc.pre_quant.values());
            }
            Tensor loss = scale(total, 1.0f / static_cast<float>(stop - start));
            double lv = loss.item();
            require(std::isfinite(lv), str("train_vqvae: non-finite loss ", lv, " at epoch ",
                                           epoch, ", batch ", batches, "; aborting"));
            zero_grads(params);
            backward(loss);
            adam_step(params, adam);
            ep_recon += batch_recon / static_cast<double>(stop - start);
            ep_vq += lv - batch_recon / static_cast<double>(stop - start);
            ++batches;
        }

        // refresh codebook rows unused for the whole epoch from random encoder
        // outputs of the last batch (latent layout is [d, s^3])
        int refreshed = 0;
        if (!stash.empty()) {
            const int64_t sites = static_cast<int64_t>(stash[0].size()) / d;
            Rng refresh_rng = rng.fork(5000 + epoch);
            auto& cb = model.codebook.value.values();
            for (int row = 0; row < k; ++row) {
                if (usage[row] > 0) continue;
                int sample = refresh_rng.uniform_int(static_cast<int>(stash.size()));
                int site = refresh_rng.uniform_int(static_cast<int>(sites));
                for (int c = 0; c < d; ++c)
                    cb[static_cast<size_t>(row) * d + c] =
                        stash[sample][static_cast<size_t>(c) * sites + site];
                ++refreshed;
            }
        }

        VqEpochStats st;
        st.epoch = epoch;
        st.recon_mse = ep_recon / std::max(1, batches);
        st.vq_term = ep_vq / std::max(1, batches);
        st.dead_refreshed = refreshed;
        st.val_iou = val_idx.empty() ? 0.0 : reconstruction_iou(model, ds, "val");
        history.push_back(st);

        append_log(cfg.log_path,
                   json{{"phase", cfg.phase},
                        {"epoch", epoch},
                        {"recon_mse", st.recon_mse},
                        {"vq_term", st.vq_term},
                        {"val_iou", st.val_iou},
                        {"dead_refreshed", st.dead_refreshed}}
                       .dump());
    }
    return history;
}

double reconstruction_iou(const VqVaeModel& model, const data::Dataset& ds,
                          const std::string& split) {
    auto idx = ds.manifest.split_indices(split);
    require(!idx.empty(), str("reconstruction_iou: split '", split, "' is empty"));
    double acc = 0.0;
    for (int i : idx) {
        geo::SdfGrid rec = reconstruct(model, ds.grids[i]);
        acc += geo::volumetric_iou(geo::occupancy(rec), geo::occupancy(ds.grids[i]));
    }
    return acc / static_cast<double>(idx.size());
}

void save_vqvae(VqVaeModel& model, const std::string& prefix) {
    auto params = model.parameters();
    save_parameters(prefix + ".aftn", params);
    json j{{"kind", "vqvae"},
           {"resolution", model.cfg.resolution},
           {"extent", model.cfg.extent},
           {"tau", model.cfg.tau},
           {"base_channels", model.cfg.base_channels},
           {"latent_dim", model.cfg.latent_dim},
           {"codebook_size", model.cfg.codebook_size},
           {"beta", model.cfg.beta},
           {"groups", model.cfg.groups}};
    std::ofstream os(prefix + ".json");
    require(os.good(), str("cannot write vqvae sidecar: ", prefix, ".json"));
    os << j.dump(2) << "\n";
}

VqVaeModel load_vqvae(const std::string& prefix) {
    std::ifstream is(prefix + ".json");
    require(is.good(), str("cannot open vqvae sidecar: ", prefix, ".json"));
    json j = json::parse(is);
    require(j.at("kind") == "vqvae", str("not a vqvae checkpoint sidecar: ", prefix, ".json"));
    VqVaeConfig cfg;
    cfg.resolution = j.at("resolution").get<int>();
    cfg.extent = j.at("extent").get<float>();
    cfg.tau = j.at("tau").get<float>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.latent_dim = j.at("latent_dim").get<int>();
    cfg.codebook_size = j.at("codebook_size").get<int>();
    cfg.beta = j.at("beta").get<float>();
    cfg.groups = j.at("groups").get<int>();
    VqVaeModel model(cfg, 0);
    auto params = model.parameters();
    load_parameters(prefix + ".aftn", params);
    return model;
}

}  // namespace af::vq
