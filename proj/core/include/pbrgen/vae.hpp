#pragma once

// Small convolutional VAE. Two or three stride-2 stages squeeze the image
// into a low-resolution latent with a configurable channel count; the decoder
// mirrors them with nearest-neighbour upsamples. No output activation: the
// decoder regresses raw channel values, including the [-1,1] bump range.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbrgen/errors.hpp"
#include "pbrgen/image.hpp"
#include "pbrgen/nets.hpp"
#include "pbrgen/rng.hpp"
#include "pbrgen/tensor.hpp"

namespace pbrgen {

struct VaeConfig {
    int in_channels = 8;
    int latent_channels = 14; // material default; 5 when standing in for an rgb codec
    int factor = 4;           // spatial downsample, 2 or 4
    double kl_weight = 1e-4;

    void validate() const {
        if (in_channels <= 0) throw ConfigError("vae: in channels must be positive");
        if (latent_channels < 1) throw ConfigError("vae: latent channels must be >= 1");
        if (factor != 2 && factor != 4)
            throw ConfigError("vae: downsample factor must be 2 or 4, got " +
                              std::to_string(factor));
        if (!(kl_weight >= 0.0)) throw ConfigError("vae: kl weight must be >= 0");
    }
};

template <class S>
struct VaeT {
    VaeConfig cfg;

    ConvLayer<S> e1; // in -> 32, stride 2
    GroupNormLayer<S> en1;
    ConvLayer<S> e2; // 32 -> 64, stride 2 (factor 4 only)
    GroupNormLayer<S> en2;
    ConvLayer<S> e_head; // widest -> 2 * latent (mean rows, then log-variance rows)

    ConvLayer<S> d0; // latent -> widest
    GroupNormLayer<S> dn0;
    ConvLayer<S> d1; // 64 -> 32 (factor 4 only)
    GroupNormLayer<S> dn1;
    ConvLayer<S> d_out; // 32 -> in, no activation

    VaeT() = default;

    VaeT(VaeConfig c, Rng& rng, const std::string& prefix = "vae.") : cfg(c) {
        cfg.validate();
        const int w1 = 32, w2 = 64, groups = 8;
        const int deep = cfg.factor == 4 ? w2 : w1;
        e1 = ConvLayer<S>(prefix + "e1", cfg.in_channels, w1, 3, rng, 2, 1);
        en1 = GroupNormLayer<S>(prefix + "en1", w1, groups);
        if (cfg.factor == 4) {
            e2 = ConvLayer<S>(prefix + "e2", w1, w2, 3, rng, 2, 1);
            en2 = GroupNormLayer<S>(prefix + "en2", w2, groups);
        }
        e_head = ConvLayer<S>(prefix + "e_head", deep, 2 * cfg.latent_channels, 3, rng);
        d0 = ConvLayer<S>(prefix + "d0", cfg.latent_channels, deep, 3, rng);
        dn0 = GroupNormLayer<S>(prefix + "dn0", deep, groups);
        if (cfg.factor == 4) {
            d1 = ConvLayer<S>(prefix + "d1", w2, w1, 3, rng);
            dn1 = GroupNormLayer<S>(prefix + "dn1", w1, groups);
        }
        d_out = ConvLayer<S>(prefix + "d_out", w1, cfg.in_channels, 3, rng);
    }

    // x [N, in, H, W] with H and W divisible by the factor
    // -> (mean, log-variance), each [N, latent, H/f, W/f].
    std::pair<TensorT<S>, TensorT<S>> encode(const TensorT<S>& x) const {
        if (x.shape().size() != 4 || x.dim(1) != cfg.in_channels)
            throw TensorError("vae: input " + shape_str(x.shape()) + " wants " +
                              std::to_string(cfg.in_channels) + " channels");
        if (x.dim(2) % cfg.factor || x.dim(3) % cfg.factor)
            throw TensorError("vae: spatial dims " + shape_str(x.shape()) +
                              " not divisible by factor " + std::to_string(cfg.factor));
        auto h = silu(en1(e1(x)));
        if (cfg.factor == 4) h = silu(en2(e2(h)));
        auto mu_lv = e_head(h);
        const int L = cfg.latent_channels;
        return {slice_ch(mu_lv, 0, L), slice_ch(mu_lv, L, 2 * L)};
    }

    // z = mean + exp(logvar / 2) * eps, eps standard normal.
    TensorT<S> reparameterize(const TensorT<S>& mu, const TensorT<S>& logvar, Rng& rng) const {
        auto eps = TensorT<S>::zeros(mu.shape());
        for (auto& v : eps.data()) v = S(rng.normal());
        return add(mu, mul(exp_t(scale(logvar, S(0.5))), eps));
    }

    TensorT<S> decode(const TensorT<S>& z) const {
        if (z.shape().size() != 4 || z.dim(1) != cfg.latent_channels)
            throw TensorError("vae: latent " + shape_str(z.shape()) + " wants " +
                              std::to_string(cfg.latent_channels) + " channels");
        auto h = upsample2x(silu(dn0(d0(z))));
        if (cfg.factor == 4) h = upsample2x(silu(dn1(d1(h))));
        return d_out(h);
    }

    std::vector<TensorT<S>> params() const {
        std::vector<TensorT<S>> ps;
        e1.collect(ps);
        en1.collect(ps);
        if (cfg.factor == 4) {
            e2.collect(ps);
            en2.collect(ps);
        }
        e_head.collect(ps);
        d0.collect(ps);
        dn0.collect(ps);
        if (cfg.factor == 4) {
            d1.collect(ps);
            dn1.collect(ps);
        }
        d_out.collect(ps);
        return ps;
    }
};

// Mean reconstruction MSE plus kl_weight times the mean per-element KL to the
// standard normal, 0.5 * (mu^2 + e^lv - 1 - lv). Both terms are >= 0.
template <class S>
TensorT<S> vae_loss(const TensorT<S>& x, const TensorT<S>& recon, const TensorT<S>& mu,
                    const TensorT<S>& logvar, S kl_weight) {
    auto rec = mse(recon, x);
    auto kl = scale(mean_all(sub(add(mul(mu, mu), exp_t(logvar)), add_scalar(logvar, S(1)))),
                    S(0.5));
    return add(rec, scale(kl, kl_weight));
}

// The KL term alone; exposed so loops can log it next to the total.
template <class S>
TensorT<S> vae_kl(const TensorT<S>& mu, const TensorT<S>& logvar) {
    return scale(mean_all(sub(add(mul(mu, mu), exp_t(logvar)), add_scalar(logvar, S(1)))),
                 S(0.5));
}

// Peak signal-to-noise ratio in dB against a unit signal range. Identical
// images give +infinity.
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw MetricError("psnr: image shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    acc /= double(a.data.size());
    return -10.0 * std::log10(acc);
}

using Vae = VaeT<float>;

} // namespace pbrgen
