#pragma once

// Two denoisers joined at the hip: a frozen prompt-conditioned RGB net and a
// trainable material net walk their programs in lockstep, and at every paired
// tap site a small trainable layer reads the concatenation of both hidden
// states and hands residual deltas back to one or both branches. All the
// coupling layers start at exact zero, so a fresh assembly leaves the frozen
// branch bit-identical to running it alone.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbrgen/checkpoint.hpp"
#include "pbrgen/diffusion.hpp"
#include "pbrgen/errors.hpp"
#include "pbrgen/image.hpp"
#include "pbrgen/nets.hpp"
#include "pbrgen/rng.hpp"
#include "pbrgen/shading.hpp"
#include "pbrgen/tensor.hpp"

namespace pbrgen {

constexpr int kMaterialChannels = 8; // albedo 3, roughness 1, metallic 1, bump 3
constexpr int kRgbChannels = 3;
constexpr int kCondChannels = 4; // screen-space normals 3, foreground mask 1

enum class CommVariant { linear_zero, mlp4, global_attention };
enum class WiringMode { bidirectional, one_way, clockwise };

inline const char* comm_variant_name(CommVariant v) {
    switch (v) {
    case CommVariant::linear_zero: return "linear_zero";
    case CommVariant::mlp4: return "mlp4";
    default: return "global_attention";
    }
}

inline CommVariant comm_variant_from_string(const std::string& s) {
    if (s == "linear_zero") return CommVariant::linear_zero;
    if (s == "mlp4") return CommVariant::mlp4;
    if (s == "global_attention") return CommVariant::global_attention;
    throw ConfigError("unknown communication layer variant '" + s + "'");
}

inline const char* wiring_name(WiringMode m) {
    switch (m) {
    case WiringMode::bidirectional: return "bidirectional";
    case WiringMode::one_way: return "one_way";
    default: return "clockwise";
    }
}

inline WiringMode wiring_from_string(const std::string& s) {
    if (s == "bidirectional") return WiringMode::bidirectional;
    if (s == "one_way") return WiringMode::one_way;
    if (s == "clockwise") return WiringMode::clockwise;
    throw ConfigError("unknown wiring mode '" + s + "'");
}

// Which split halves of a comm layer's output actually land, per wiring.
// one_way never touches the frozen branch; clockwise sends encoder and mid
// deltas to the material branch and decoder deltas back to the rgb branch.
inline bool wiring_sends_to_rgb(WiringMode w, TapKind k) {
    return w == WiringMode::bidirectional ||
           (w == WiringMode::clockwise && k == TapKind::decoder);
}

inline bool wiring_sends_to_pbr(WiringMode w, TapKind k) {
    return w == WiringMode::bidirectional || w == WiringMode::one_way ||
           (w == WiringMode::clockwise && k != TapKind::decoder);
}

// Per-site coupling layer: reads [N, 2C, H, W] (both branch states stacked),
// emits a delta of the same shape. Every variant ends in a zero-initialized
// layer, so a fresh one outputs exact zeros for any input.
template <class S>
struct CommLayerT {
    CommVariant variant = CommVariant::linear_zero;
    int channels = 0; // C per branch; the layer maps 2C -> 2C

    ConvLayer<S> lin; // linear_zero: one 1x1 conv, zero weights

    std::vector<LinearLayer<S>> hidden; // mlp4: 4 per-position linears
    std::vector<LayerNormLayer<S>> norms;
    LinearLayer<S> out; // zero at init

    LayerNormLayer<S> attn_norm; // global_attention
    LinearLayer<S> qkv;
    LinearLayer<S> proj; // zero at init

    CommLayerT() = default;

    CommLayerT(const std::string& name, CommVariant var, int c_each, Rng& rng)
        : variant(var), channels(c_each) {
        const int c2 = 2 * c_each;
        switch (variant) {
        case CommVariant::linear_zero:
            lin = ConvLayer<S>(name + ".lin", c2, c2, 1, rng, 1, 0, true);
            break;
        case CommVariant::mlp4:
            for (int i = 0; i < 4; ++i) {
                hidden.emplace_back(name + ".h" + std::to_string(i), c2, c2, rng);
                norms.emplace_back(name + ".n" + std::to_string(i), c2);
            }
            out = LinearLayer<S>(name + ".out", c2, c2, rng, true);
            break;
        case CommVariant::global_attention:
            attn_norm = LayerNormLayer<S>(name + ".norm", c2);
            qkv = LinearLayer<S>(name + ".qkv", c2, 3 * c2, rng);
            proj = LinearLayer<S>(name + ".proj", c2, c2, rng, true);
            break;
        }
    }

    TensorT<S> operator()(const TensorT<S>& x) const {
        const int H = x.dim(2), W = x.dim(3);
        const int c2 = 2 * channels;
        switch (variant) {
        case CommVariant::linear_zero: return lin(x);
        case CommVariant::mlp4: {
            auto seq = nchw_to_ntc(x);
            for (size_t i = 0; i < hidden.size(); ++i) seq = silu(norms[i](hidden[i](seq)));
            return ntc_to_nchw(out(seq), H, W);
        }
        default: { // one attention pass across all positions, no residual
            auto h = attn_norm(nchw_to_ntc(x));
            auto q3 = qkv(h);
            auto q = slice_last(q3, 0, c2);
            auto k = slice_last(q3, c2, 2 * c2);
            auto v = slice_last(q3, 2 * c2, 3 * c2);
            auto att = softmax_last(scale(bmm_nt(q, k), S(1.0 / std::sqrt(double(c2)))));
            return ntc_to_nchw(proj(bmm(att, v)), H, W);
        }
        }
    }

    void collect(std::vector<TensorT<S>>& ps) const {
        switch (variant) {
        case CommVariant::linear_zero: lin.collect(ps); break;
        case CommVariant::mlp4:
            for (size_t i = 0; i < hidden.size(); ++i) {
                hidden[i].collect(ps);
                norms[i].collect(ps);
            }
            out.collect(ps);
            break;
        case CommVariant::global_attention:
            attn_norm.collect(ps);
            qkv.collect(ps);
            proj.collect(ps);
            break;
        }
    }
};

struct DualConfig {
    UNetConfig shape; // base/mults/attn/embed/groups template for both branches
    int rgb_channels = kRgbChannels;      // rgb branch denoises this many, in == out
    int pbr_channels = kMaterialChannels; // material branch output; input adds cond
    int cond_channels = kCondChannels;
    bool pbr_prompt = false; // material-branch cross-attention (rgb always has it)
    CommVariant variant = CommVariant::linear_zero;
    WiringMode wiring = WiringMode::bidirectional;
};

// The assembly. rgb parameters are frozen at construction (their gradient
// flags drop), pbr and comm parameters train. Parameter names carry "rgb.",
// "pbr." and "commN." prefixes, so the three sets stay disjoint in
// checkpoints and the frozen set is hashable on its own.
template <class S>
struct DualBranchModelT {
    DualConfig cfg;
    UNetT<S> rgb;
    UNetT<S> pbr;
    std::vector<CommLayerT<S>> comm; // one per tap site, paired by index

    DualBranchModelT() = default;

    DualBranchModelT(DualConfig c, Rng& rng) : cfg(std::move(c)) {
        UNetConfig rc = cfg.shape;
        rc.in_channels = rc.out_channels = cfg.rgb_channels;
        rc.prompt_attention = true;
        rgb = UNetT<S>(rc, rng, "rgb.");

        UNetConfig pc = cfg.shape;
        pc.in_channels = cfg.pbr_channels + cfg.cond_channels;
        pc.out_channels = cfg.pbr_channels;
        pc.prompt_attention = cfg.pbr_prompt;
        pbr = UNetT<S>(pc, rng, "pbr.");

        if (rgb.sites.size() != pbr.sites.size())
            throw ConfigError("dual: branches disagree on tap site count");
        comm.reserve(rgb.sites.size());
        for (size_t i = 0; i < rgb.sites.size(); ++i) {
            if (rgb.sites[i].channels != pbr.sites[i].channels)
                throw ConfigError("dual: tap '" + rgb.sites[i].name +
                                  "' width differs between branches");
            comm.emplace_back("comm" + std::to_string(i), cfg.variant, rgb.sites[i].channels,
                              rng);
        }
        freeze_rgb();
    }

    void freeze_rgb() {
        for (auto& p : rgb.params()) p.node()->requires_grad = false;
    }

    std::vector<TensorT<S>> trainable_params() const {
        auto ps = pbr.params();
        for (const auto& cl : comm) cl.collect(ps);
        return ps;
    }

    std::vector<TensorT<S>> frozen_params() const { return rgb.params(); }

    std::vector<TensorT<S>> all_params() const {
        auto ps = rgb.params();
        auto t = trainable_params();
        ps.insert(ps.end(), t.begin(), t.end());
        return ps;
    }

    // Loads pretrained weights into the frozen branch ("rgb.*" rows).
    void load_rgb_base(const Checkpoint& ck) {
        auto ps = rgb.params();
        load_params(ck, ps);
    }
};

// One interleaved denoising pass. Both branches advance to each paired tap
// site; the site's comm layer reads concat(rgb_state, pbr_state) and its
// output splits into an rgb half and a pbr half, added residually where the
// wiring allows. The material branch input is concat(z_pbr, cond) where cond
// is screen-space normals plus mask; the prompt always reaches the rgb
// branch and reaches the material branch only when its flag is on.
template <class S>
std::pair<TensorT<S>, TensorT<S>> dual_forward(const DualBranchModelT<S>& m,
                                               const TensorT<S>& z_rgb, const TensorT<S>& z_pbr,
                                               const TensorT<S>& cond, const std::vector<int>& t,
                                               const std::vector<int>& prompt,
                                               const TensorT<S>* prompt_embed = nullptr) {
    if (m.rgb.sites.size() != m.pbr.sites.size() || m.comm.size() != m.rgb.sites.size())
        throw TensorError("dual: tap site count mismatch (" + std::to_string(m.rgb.sites.size()) +
                          " rgb, " + std::to_string(m.pbr.sites.size()) + " pbr, " +
                          std::to_string(m.comm.size()) + " comm)");
    if (z_rgb.shape().size() != 4 || z_pbr.shape().size() != 4 || z_rgb.dim(0) != z_pbr.dim(0) ||
        z_rgb.dim(2) != z_pbr.dim(2) || z_rgb.dim(3) != z_pbr.dim(3))
        throw TensorError("dual: branch inputs " + shape_str(z_rgb.shape()) + " vs " +
                          shape_str(z_pbr.shape()) + " must share batch and spatial dims");

    auto run_r = m.rgb.begin(z_rgb, t, &prompt);
    auto run_p = m.pbr.begin(concat_ch(z_pbr, cond), t,
                             m.pbr.cfg.prompt_attention ? &prompt : nullptr);
    if (prompt_embed) {
        // Raw conditioning sequence instead of the table rows; this is how
        // blended prompts enter, since blends live between embedding rows.
        const std::vector<int> want = {z_rgb.dim(0), m.rgb.cfg.prompt_len, m.rgb.cfg.embed};
        if (prompt_embed->shape() != want)
            throw TensorError("dual: prompt embedding " + shape_str(prompt_embed->shape()) +
                              ", expected " + shape_str(want));
        run_r.prompt_seq = *prompt_embed;
        if (m.pbr.cfg.prompt_attention) run_p.prompt_seq = *prompt_embed;
    }
    for (size_t i = 0; i < m.comm.size(); ++i) {
        run_r.advance();
        run_p.advance();
        const int c = m.rgb.sites[i].channels;
        const TapKind kind = m.rgb.sites[i].kind;
        auto delta = m.comm[i](concat_ch(run_r.state, run_p.state));
        if (wiring_sends_to_rgb(m.cfg.wiring, kind)) run_r.inject(slice_ch(delta, 0, c));
        if (wiring_sends_to_pbr(m.cfg.wiring, kind)) run_p.inject(slice_ch(delta, c, 2 * c));
    }
    run_r.advance();
    run_p.advance();
    return {run_r.state, run_p.state};
}

using DualBranchModel = DualBranchModelT<float>;
using CommLayer = CommLayerT<float>;

struct JointSample {
    Image rgb;      // [0,1], background left as sampled (black when projected)
    PbrStack stack; // clamped, bump renormalized on foreground, background zero
};

// Ancestral sampling of both chains at shared timesteps. For the first k
// steps the rgb x0-estimate is multiplied by the conditioning mask before
// re-noising, which locks the composition early; k = 0 never touches the
// mask, k = T projects every step. The returned material stack mirrors the
// dataset convention: background pixels are zero, foreground scalars clamp
// to [0,1], and the bump field is pushed off the horizon (z >= 0.05) then
// renormalized, so it always passes stack validation.
// Optional overrides, used by the latent interpolation tool: explicit initial
// noise per branch (unit-variance, branch-shaped) and a raw prompt sequence
// that bypasses the embedding lookup.
struct SampleOverride {
    const std::vector<float>* init_rgb = nullptr;
    const std::vector<float>* init_pbr = nullptr;
    const Tensor* prompt_embed = nullptr;
};

inline JointSample sample_joint(const DualBranchModel& m, const Image& cond,
                                const std::array<int, 3>& prompt,
                                const DiffusionSchedule& schedule, Rng& rng,
                                int mask_projection_steps,
                                const SampleOverride& ov = {}) {
    const int T = schedule.T;
    if (mask_projection_steps < 0 || mask_projection_steps > T)
        throw DiffusionError("sample: mask projection steps " +
                             std::to_string(mask_projection_steps) + " outside [0, " +
                             std::to_string(T) + "]");
    const int rgbC = m.cfg.rgb_channels;
    const int pbrC = m.cfg.pbr_channels;
    if (rgbC != kRgbChannels || pbrC != kMaterialChannels)
        throw ConfigError("sample: pixel-space sampler wants " + std::to_string(kRgbChannels) +
                          " rgb + " + std::to_string(kMaterialChannels) + " material channels");
    if (cond.channels != m.cfg.cond_channels)
        throw TensorError("sample: conditioning has " + std::to_string(cond.channels) +
                          " channels, model wants " + std::to_string(m.cfg.cond_channels));

    const int H = cond.height, W = cond.width;
    const size_t hw = size_t(H) * W;
    Rng r_rgb = rng.fork("rgb");
    Rng r_pbr = rng.fork("pbr");
    std::vector<float> zr(size_t(rgbC) * hw), zp(size_t(pbrC) * hw);
    if (ov.init_rgb) {
        if (ov.init_rgb->size() != zr.size())
            throw TensorError("sample: rgb init noise has " + std::to_string(ov.init_rgb->size()) +
                              " values, expected " + std::to_string(zr.size()));
        zr = *ov.init_rgb;
    } else {
        for (auto& v : zr) v = float(r_rgb.normal());
    }
    if (ov.init_pbr) {
        if (ov.init_pbr->size() != zp.size())
            throw TensorError("sample: pbr init noise has " + std::to_string(ov.init_pbr->size()) +
                              " values, expected " + std::to_string(zp.size()));
        zp = *ov.init_pbr;
    } else {
        for (auto& v : zp) v = float(r_pbr.normal());
    }

    const std::vector<int> pr = {prompt[0], prompt[1], prompt[2]};
    const auto cond_t = Tensor::from_data({1, cond.channels, H, W}, cond.data);
    const float* mask = cond.data.data() + size_t(cond.channels - 1) * hw;

    for (int t = T; t >= 1; --t) {
        auto zr_t = Tensor::from_data({1, rgbC, H, W}, zr);
        auto zp_t = Tensor::from_data({1, pbrC, H, W}, zp);
        auto [pred_r, pred_p] = dual_forward(m, zr_t, zp_t, cond_t, {t}, pr, ov.prompt_embed);
        auto x0 = predict_x0(pred_r.data(), zr, t, schedule);
        if (t > T - mask_projection_steps)
            for (int c = 0; c < rgbC; ++c)
                for (size_t i = 0; i < hw; ++i) x0[size_t(c) * hw + i] *= mask[i];
        zr = ddpm_step_from_x0(x0, zr, t, schedule, &r_rgb);
        zp = ddpm_step(pred_p.data(), zp, t, schedule, &r_pbr);
    }

    auto clamp01 = [](float v) { return std::min(1.0f, std::max(0.0f, v)); };
    JointSample res;
    res.rgb = Image(rgbC, H, W);
    for (size_t i = 0; i < res.rgb.data.size(); ++i) res.rgb.data[i] = clamp01(zr[i]);

    Image chans(kMaterialChannels, H, W);
    for (size_t i = 0; i < hw; ++i) {
        if (mask[i] <= 0.5f) continue; // background stays zero, like the dataset
        for (int c = 0; c < 5; ++c) chans.data[size_t(c) * hw + i] = clamp01(zp[size_t(c) * hw + i]);
        double bx = zp[5 * hw + i];
        double by = zp[6 * hw + i];
        double bz = std::max(double(zp[7 * hw + i]), 0.05);
        const double nrm = std::sqrt(bx * bx + by * by + bz * bz);
        if (!std::isfinite(nrm) || nrm < 1e-6) {
            bx = 0.0;
            by = 0.0;
            bz = 1.0;
        } else {
            bx /= nrm;
            by /= nrm;
            bz /= nrm;
        }
        chans.data[5 * hw + i] = float(bx);
        chans.data[6 * hw + i] = float(by);
        chans.data[7 * hw + i] = float(bz);
    }
    res.stack = PbrStack::from_channels(chans);
    return res;
}

// The rgb branch's embedding rows for one prompt, flattened [len * embed].
// Blending these per token and feeding the result back through the
// SampleOverride walks the conditioning space between two prompts.
inline std::vector<float> prompt_embedding(const DualBranchModel& m,
                                           const std::array<int, 3>& p) {
    const auto& tb = m.rgb.prompt_embed.table;
    if (!tb.defined()) throw ConfigError("prompt embedding: rgb branch has no prompt table");
    const int V = tb.dim(0), D = tb.dim(1);
    std::vector<float> out(size_t(m.rgb.cfg.prompt_len) * size_t(D));
    for (int j = 0; j < m.rgb.cfg.prompt_len; ++j) {
        if (p[size_t(j)] < 0 || p[size_t(j)] >= V)
            throw TensorError("prompt embedding: id " + std::to_string(p[size_t(j)]) +
                              " outside vocab " + std::to_string(V));
        std::copy_n(tb.data().data() + size_t(p[size_t(j)]) * size_t(D), size_t(D),
                    out.begin() + size_t(j) * size_t(D));
    }
    return out;
}

// Single-network baseline: the pretrained prompt-conditioned net with its
// first and last convs re-sized for material (+ optional rgb) output plus
// geometry conditioning, everything trainable. Keeps the base network's
// parameter prefix so pretrained interior weights transfer by name; only the
// resized in/out convs start fresh.
template <class S>
UNetT<S> build_finetune_baseline(UNetConfig shape, bool with_rgb_output, Rng& rng,
                                 const Checkpoint* base = nullptr) {
    shape.out_channels = with_rgb_output ? kMaterialChannels + kRgbChannels : kMaterialChannels;
    shape.in_channels = shape.out_channels + kCondChannels;
    shape.prompt_attention = true;
    UNetT<S> net(shape, rng, "rgb.");
    if (base) {
        auto ps = net.params();
        copy_matching_params(*base, ps);
    }
    return net;
}

// Triplet packing for running a 3-channel autoencoder over material maps:
// (albedo), (metallic, roughness, zeros), (bump). The zero channel pads the
// scalar pair up to three channels.
inline std::vector<Image> stack_to_triplets(const PbrStack& s) {
    std::vector<Image> t;
    t.push_back(s.albedo);
    t.push_back(concat_channels(concat_channels(s.metallic, s.roughness),
                                Image(1, s.height(), s.width())));
    t.push_back(s.bump);
    return t;
}

// Inverse of stack_to_triplets; drops the pad channel.
inline PbrStack triplets_to_stack(const std::vector<Image>& t) {
    if (t.size() != 3 || t[0].channels != 3 || t[1].channels != 3 || t[2].channels != 3)
        throw ShadingError("triplets: want three 3-channel images");
    if (!t[0].same_shape(t[1]) || !t[0].same_shape(t[2]))
        throw ShadingError("triplets: images disagree on size");
    PbrStack s(t[0].height, t[0].width);
    s.albedo = t[0];
    s.metallic = slice_channels(t[1], 0, 1);
    s.roughness = slice_channels(t[1], 1, 2);
    s.bump = t[2];
    return s;
}

} // namespace pbrgen
