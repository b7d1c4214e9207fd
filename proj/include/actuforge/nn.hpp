#pragma once

#include <string>
#include <vector>

#include "actuforge/rng.hpp"
#include "actuforge/tensor.hpp"

// Float layer library on top of the tensor engine. Layers own Parameters and
// expose collect() so models can enumerate them for the optimizer and for
// checkpointing.

namespace af {

inline Tensor init_normal(Shape shape, float stddev, Rng& rng) {
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = rng.normalf() * stddev;
    return Tensor::from(std::move(shape), std::move(v));
}

struct Linear {
    Parameter w, b;
    int in = 0, out = 0;

    Linear() = default;
    Linear(const std::string& name, int in_dim, int out_dim, Rng& rng)
        : w(name + ".w", init_normal({in_dim, out_dim}, 1.0f / std::sqrt(static_cast<float>(in_dim)), rng)),
          b(name + ".b", Tensor::zeros({out_dim})),
          in(in_dim), out(out_dim) {}

    // x [n, in] -> [n, out]
    Tensor forward(const Tensor& x) const { return add_row_bias(matmul(x, w.value), b.value); }

    void collect(std::vector<Parameter*>& ps) {
        ps.push_back(&w);
        ps.push_back(&b);
    }
};

struct Conv3dLayer {
    Parameter w, b;
    int stride = 1, pad = 0;

    Conv3dLayer() = default;
    Conv3dLayer(const std::string& name, int c_in, int c_out, int k, int stride_, int pad_, Rng& rng)
        : w(name + ".w", init_normal({c_out, c_in, k, k, k},
                                     1.0f / std::sqrt(static_cast<float>(c_in * k * k * k)), rng)),
          b(name + ".b", Tensor::zeros({c_out})),
          stride(stride_), pad(pad_) {}

    Tensor forward(const Tensor& x) const {
        return add_channel_bias(conv3d(x, w.value, stride, pad), b.value);
    }

    void collect(std::vector<Parameter*>& ps) {
        ps.push_back(&w);
        ps.push_back(&b);
    }
};

struct ConvTranspose3dLayer {
    Parameter w, b;
    int stride = 1, pad = 0;

    ConvTranspose3dLayer() = default;
    ConvTranspose3dLayer(const std::string& name, int c_in, int c_out, int k, int stride_, int pad_,
                         Rng& rng)
        : w(name + ".w", init_normal({c_in, c_out, k, k, k},
                                     1.0f / std::sqrt(static_cast<float>(c_in * k * k * k)), rng)),
          b(name + ".b", Tensor::zeros({c_out})),
          stride(stride_), pad(pad_) {}

    Tensor forward(const Tensor& x) const {
        return add_channel_bias(conv_transpose3d(x, w.value, stride, pad), b.value);
    }

    void collect(std::vector<Parameter*>& ps) {
        ps.push_back(&w);
        ps.push_back(&b);
    }
};

struct GroupNormLayer {
    Parameter gamma, beta;
    int groups = 8;
    float eps = 1e-5f;

    GroupNormLayer() = default;
    GroupNormLayer(const std::string& name, int channels, int groups_)
        : gamma(name + ".gamma", Tensor::full({channels}, 1.0f)),
          beta(name + ".beta", Tensor::zeros({channels})),
          groups(groups_) {}

    Tensor forward(const Tensor& x) const {
        return channel_affine(group_norm(x, groups, eps), gamma.value, beta.value);
    }

    void collect(std::vector<Parameter*>& ps) {
        ps.push_back(&gamma);
        ps.push_back(&beta);
    }
};

// GN -> SiLU -> conv -> GN -> SiLU -> conv, residual. Optional FiLM
// conditioning (per-channel scale/shift from an embedding) after the first
// norm; optional 1x1 skip projection when channel counts change.
struct ResBlock3d {
    GroupNormLayer n1, n2;
    Conv3dLayer c1, c2;
    Conv3dLayer skip;
    Linear film_scale, film_shift;
    bool has_skip = false, has_film = false;
    int c_out = 0;

    ResBlock3d() = default;
    ResBlock3d(const std::string& name, int in_c, int out_c, int groups, int cond_dim, Rng& rng,
               bool zero_init_last = false)
        : n1(name + ".n1", in_c, groups),
          n2(name + ".n2", out_c, groups),
          c1(name + ".c1", in_c, out_c, 3, 1, 1, rng),
          c2(name + ".c2", out_c, out_c, 3, 1, 1, rng),
          c_out(out_c) {
        if (zero_init_last)
            std::fill(c2.w.value.values().begin(), c2.w.value.values().end(), 0.0f);
        if (in_c != out_c) {
            skip = Conv3dLayer(name + ".skip", in_c, out_c, 1, 1, 0, rng);
            has_skip = true;
        }
        if (cond_dim > 0) {
            film_scale = Linear(name + ".film_scale", cond_dim, in_c, rng);
            film_shift = Linear(name + ".film_shift", cond_dim, in_c, rng);
            has_film = true;
        }
    }

    Tensor forward(const Tensor& x, const Tensor* cond = nullptr) const {
        Tensor h = n1.forward(x);
        if (has_film && cond) {
            int in_c = x.shape()[0];
            Tensor sc = add(reshape(film_scale.forward(*cond), {in_c}), Tensor::full({in_c}, 1.0f));
            Tensor sh = reshape(film_shift.forward(*cond), {in_c});
            h = channel_affine(h, sc, sh);
        }
        h = c1.forward(silu(h));
        h = c2.forward(silu(n2.forward(h)));
        Tensor res = has_skip ? skip.forward(x) : x;
        return add(h, res);
    }

    void collect(std::vector<Parameter*>& ps) {
        n1.collect(ps);
        n2.collect(ps);
        c1.collect(ps);
        c2.collect(ps);
        if (has_skip) skip.collect(ps);
        if (has_film) {
            film_scale.collect(ps);
            film_shift.collect(ps);
        }
    }
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

inline void zero_grads(std::vector<Parameter*>& ps) {
    for (auto* p : ps) p->value.zero_grad();
}

inline void adam_step(std::vector<Parameter*>& ps, const AdamConfig& cfg) {
    adam_step(ps, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
}

}  // namespace af
