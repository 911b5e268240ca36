#pragma once

// Denoiser building blocks: res blocks with timestep injection, single-head
// self-attention, optional prompt cross-attention, and the UNet that wires
// them up. A forward pass is a fixed program of steps; the runner can pause
// right after every self-attention so outer code may read the hidden state
// there and add a residual delta before the program continues. Those pause
// points ("tap sites") are how two UNets get coupled.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbrgen/checkpoint.hpp"
#include "pbrgen/errors.hpp"
#include "pbrgen/rng.hpp"
#include "pbrgen/tensor.hpp"

namespace pbrgen {

struct UNetConfig {
    int in_channels = 8;
    int out_channels = 8;
    int base = 16;
    std::vector<int> mults = {1, 2, 2};
    std::vector<bool> attn = {false, true, true}; // self-attention per level
    bool prompt_attention = false;
    int prompt_vocab = 14;
    int prompt_len = 3;
    int embed = 64; // timestep and prompt embedding width
    int groups = 8; // group-norm groups; every level width must divide by this

    int levels() const { return int(mults.size()); }
    int width(int level) const { return base * mults[size_t(level)]; }

    void validate() const {
        if (levels() < 2)
            throw ConfigError("unet: want at least 2 levels, got " + std::to_string(levels()));
        if (attn.size() != mults.size())
            throw ConfigError("unet: attention flags must match level count");
        if (in_channels <= 0 || out_channels <= 0 || base <= 0)
            throw ConfigError("unet: channel counts must be positive");
        for (int m : mults)
            if (m <= 0) throw ConfigError("unet: channel multipliers must be positive");
        if (embed <= 0 || embed % 2) throw ConfigError("unet: embed width must be even, positive");
        if (groups <= 0) throw ConfigError("unet: norm groups must be positive");
        for (int l = 0; l < levels(); ++l)
            if (width(l) % groups)
                throw ConfigError("unet: level " + std::to_string(l) + " width " +
                                  std::to_string(width(l)) + " not divisible by " +
                                  std::to_string(groups) + " norm groups");
        if (prompt_attention && (prompt_vocab <= 0 || prompt_len <= 0))
            throw ConfigError("unet: prompt attention needs a vocabulary and token count");
    }
};

// Sinusoidal features: first half sines, second half cosines, geometric
// frequency ladder starting at 1. t=0 maps to all-zero sines and all-one
// cosines; distinct small integers map to distinct rows.
template <class S>
TensorT<S> timestep_embedding(const std::vector<int>& t, int dim) {
    if (dim <= 0 || dim % 2)
        throw TensorError("timestep_embedding: dim must be even and positive");
    const int N = int(t.size());
    const int half = dim / 2;
    auto out = TensorT<S>::zeros({N, dim});
    for (int i = 0; i < N; ++i) {
        S* row = out.data().data() + size_t(i) * dim;
        for (int j = 0; j < half; ++j) {
            const double a = double(t[size_t(i)]) * std::exp(-std::log(1e4) * double(j) / half);
            row[j] = S(std::sin(a));
            row[half + j] = S(std::cos(a));
        }
    }
    return out;
}

namespace detail {

template <class S>
TensorT<S> init_normal(Shape shape, std::string name, Rng& rng, double stddev) {
    auto t = TensorT<S>::param(std::move(shape), std::move(name));
    for (auto& v : t.data()) v = S(rng.normal() * stddev);
    return t;
}

} // namespace detail

template <class S>
struct LinearLayer {
    TensorT<S> w, b;

    LinearLayer() = default;
    LinearLayer(const std::string& name, int cin, int cout, Rng& rng, bool zero_init = false)
        : w(zero_init ? TensorT<S>::param({cin, cout}, name + ".w")
                      : detail::init_normal<S>({cin, cout}, name + ".w", rng,
                                               std::sqrt(1.0 / double(cin)))),
          b(TensorT<S>::param({cout}, name + ".b")) {}

    TensorT<S> operator()(const TensorT<S>& x) const { return linear(x, w, b); }
    void collect(std::vector<TensorT<S>>& out) const {
        out.push_back(w);
        out.push_back(b);
    }
};

template <class S>
struct ConvLayer {
    TensorT<S> w, b;
    int stride = 1;
    int pad = 1;

    ConvLayer() = default;
    ConvLayer(const std::string& name, int cin, int cout, int k, Rng& rng, int stride_ = 1,
              int pad_ = 1, bool zero_init = false)
        : w(zero_init ? TensorT<S>::param({cout, cin, k, k}, name + ".w")
                      : detail::init_normal<S>({cout, cin, k, k}, name + ".w", rng,
                                               std::sqrt(1.0 / (double(cin) * k * k)))),
          b(TensorT<S>::param({cout}, name + ".b")), stride(stride_), pad(pad_) {}

    TensorT<S> operator()(const TensorT<S>& x) const { return conv2d(x, w, b, stride, pad); }
    void collect(std::vector<TensorT<S>>& out) const {
        out.push_back(w);
        out.push_back(b);
    }
};

template <class S>
struct GroupNormLayer {
    TensorT<S> g, b;
    int groups = 8;

    GroupNormLayer() = default;
    GroupNormLayer(const std::string& name, int c, int groups_)
        : g(TensorT<S>::param({c}, name + ".g")), b(TensorT<S>::param({c}, name + ".b")),
          groups(groups_) {
        for (auto& v : g.data()) v = S(1);
    }

    TensorT<S> operator()(const TensorT<S>& x) const { return group_norm(x, g, b, groups); }
    void collect(std::vector<TensorT<S>>& out) const {
        out.push_back(g);
        out.push_back(b);
    }
};

template <class S>
struct LayerNormLayer {
    TensorT<S> g, b;

    LayerNormLayer() = default;
    LayerNormLayer(const std::string& name, int c)
        : g(TensorT<S>::param({c}, name + ".g")), b(TensorT<S>::param({c}, name + ".b")) {
        for (auto& v : g.data()) v = S(1);
    }

    TensorT<S> operator()(const TensorT<S>& x) const { return layer_norm(x, g, b); }
    void collect(std::vector<TensorT<S>>& out) const {
        out.push_back(g);
        out.push_back(b);
    }
};

// Learned vectors for the categorical prompt tokens.
template <class S>
struct PromptEmbeddingT {
    TensorT<S> table; // [vocab, dim]
    int len = 0;

    PromptEmbeddingT() = default;
    PromptEmbeddingT(const std::string& name, int vocab, int dim, int len_, Rng& rng)
        : table(detail::init_normal<S>({vocab, dim}, name + ".table", rng, 0.02)), len(len_) {}

    // ids laid out [N, len]; the gather rejects ids outside the vocabulary.
    TensorT<S> operator()(const std::vector<int>& ids, int N) const {
        return embedding(table, ids, N, len);
    }
    void collect(std::vector<TensorT<S>>& out) const { out.push_back(table); }
};

// norm -> silu -> conv -> +time -> norm -> silu -> conv, plus input skip.
// The second conv starts at zero so a fresh block is the skip alone.
template <class S>
struct ResBlock {
    GroupNormLayer<S> norm1, norm2;
    ConvLayer<S> conv1, conv2;
    LinearLayer<S> time; // embed -> cout, applied to silu(temb)
    ConvLayer<S> skip;   // 1x1, only built when cin != cout
    bool project_skip = false;

    ResBlock() = default;
    ResBlock(const std::string& name, int cin, int cout, int embed, int groups, Rng& rng)
        : norm1(name + ".norm1", cin, groups), norm2(name + ".norm2", cout, groups),
          conv1(name + ".conv1", cin, cout, 3, rng),
          conv2(name + ".conv2", cout, cout, 3, rng, 1, 1, true),
          time(name + ".time", embed, cout, rng), project_skip(cin != cout) {
        if (project_skip) skip = ConvLayer<S>(name + ".skip", cin, cout, 1, rng, 1, 0);
    }

    TensorT<S> operator()(const TensorT<S>& x, const TensorT<S>& temb) const {
        auto h = conv1(silu(norm1(x)));
        h = add_time(h, time(silu(temb)));
        h = conv2(silu(norm2(h)));
        return add(project_skip ? skip(x) : x, h);
    }
    void collect(std::vector<TensorT<S>>& out) const {
        norm1.collect(out);
        conv1.collect(out);
        time.collect(out);
        norm2.collect(out);
        conv2.collect(out);
        if (project_skip) skip.collect(out);
    }
};

// Single-head attention over the H*W positions, pre-norm, residual. The
// output projection starts at zero so a fresh block is the identity.
template <class S>
struct SelfAttention {
    LayerNormLayer<S> norm;
    LinearLayer<S> qkv;  // c -> 3c
    LinearLayer<S> proj; // c -> c, zero at init
    int channels = 0;

    SelfAttention() = default;
    SelfAttention(const std::string& name, int c, Rng& rng)
        : norm(name + ".norm", c), qkv(name + ".qkv", c, 3 * c, rng),
          proj(name + ".proj", c, c, rng, true), channels(c) {}

    TensorT<S> operator()(const TensorT<S>& x) const {
        const int H = x.dim(2), W = x.dim(3);
        auto h = norm(nchw_to_ntc(x));
        auto q3 = qkv(h);
        auto q = slice_last(q3, 0, channels);
        auto k = slice_last(q3, channels, 2 * channels);
        auto v = slice_last(q3, 2 * channels, 3 * channels);
        auto att = softmax_last(scale(bmm_nt(q, k), S(1.0 / std::sqrt(double(channels)))));
        return add(x, ntc_to_nchw(proj(bmm(att, v)), H, W));
    }
    void collect(std::vector<TensorT<S>>& out) const {
        norm.collect(out);
        qkv.collect(out);
        proj.collect(out);
    }
};

// Queries from the image positions, keys and values from the prompt tokens.
template <class S>
struct CrossAttention {
    LayerNormLayer<S> norm;
    LinearLayer<S> q;    // c -> c
    LinearLayer<S> k, v; // ctx dim -> c
    LinearLayer<S> proj; // c -> c, zero at init
    int channels = 0;

    CrossAttention() = default;
    CrossAttention(const std::string& name, int c, int ctx_dim, Rng& rng)
        : norm(name + ".norm", c), q(name + ".q", c, c, rng), k(name + ".k", ctx_dim, c, rng),
          v(name + ".v", ctx_dim, c, rng), proj(name + ".proj", c, c, rng, true), channels(c) {}

    TensorT<S> operator()(const TensorT<S>& x, const TensorT<S>& ctx) const {
        const int H = x.dim(2), W = x.dim(3);
        auto qq = q(norm(nchw_to_ntc(x)));
        auto att = softmax_last(scale(bmm_nt(qq, k(ctx)), S(1.0 / std::sqrt(double(channels)))));
        return add(x, ntc_to_nchw(proj(bmm(att, v(ctx))), H, W));
    }
    void collect(std::vector<TensorT<S>>& out) const {
        norm.collect(out);
        q.collect(out);
        k.collect(out);
        v.collect(out);
        proj.collect(out);
    }
};

enum class TapKind { encoder, mid, decoder };

struct TapSite {
    std::string name; // "encoder L1", "mid", "decoder L1"
    TapKind kind = TapKind::encoder;
    int channels = 0;
};

namespace detail {

struct UNetStep {
    enum Kind {
        conv_in,
        enc_res,
        enc_attn,
        enc_cross,
        push_skip,
        down,
        mid_res1,
        mid_attn,
        mid_cross,
        mid_res2,
        cat_skip,
        dec_res,
        dec_attn,
        dec_cross,
        up,
        out_head,
    } kind;
    int level = 0;
    int tap = -1; // site index when the runner pauses after this step
};

} // namespace detail

template <class S>
struct UNetRunT;

// Encoder: per level a res block, optional self-attention (tap), optional
// prompt cross-attention, skip push, then a stride-2 conv into the next
// level. Mid: res, attention (tap), optional cross, res. Decoder mirrors the
// encoder with skip concats and nearest-neighbor upsamples. The output head
// conv starts at zero, so a fresh net predicts exactly zero.
template <class S>
struct UNetT {
    UNetConfig cfg;
    std::string prefix; // baked into every parameter name

    LinearLayer<S> time1, time2; // the sinusoidal features pass through an mlp
    PromptEmbeddingT<S> prompt_embed;
    ConvLayer<S> conv_in;
    std::vector<ResBlock<S>> enc_res;
    std::vector<SelfAttention<S>> enc_attn; // only levels with the flag set
    std::vector<CrossAttention<S>> enc_cross;
    std::vector<ConvLayer<S>> down; // down[l]: width(l) -> width(l+1), stride 2
    ResBlock<S> mid_res1, mid_res2;
    SelfAttention<S> mid_attn;
    CrossAttention<S> mid_cross;
    std::vector<ResBlock<S>> dec_res;
    std::vector<SelfAttention<S>> dec_attn;
    std::vector<CrossAttention<S>> dec_cross;
    std::vector<ConvLayer<S>> up; // up[l-1]: width(l) -> width(l-1), after upsample2x
    GroupNormLayer<S> out_norm;
    ConvLayer<S> conv_out;

    std::vector<TapSite> sites;             // encoder shallow->deep, mid, decoder deep->shallow
    std::vector<detail::UNetStep> program;  // fixed per config, shared by every run

    UNetT() = default;

    UNetT(UNetConfig c, Rng& rng, std::string prefix_ = "")
        : cfg(std::move(c)), prefix(std::move(prefix_)) {
        cfg.validate();
        const int L = cfg.levels();
        auto nm = [&](const std::string& s) { return prefix + s; };
        using Step = detail::UNetStep;

        time1 = LinearLayer<S>(nm("time1"), cfg.embed, cfg.embed, rng);
        time2 = LinearLayer<S>(nm("time2"), cfg.embed, cfg.embed, rng);
        if (cfg.prompt_attention)
            prompt_embed =
                PromptEmbeddingT<S>(nm("prompt"), cfg.prompt_vocab, cfg.embed, cfg.prompt_len, rng);

        conv_in = ConvLayer<S>(nm("conv_in"), cfg.in_channels, cfg.width(0), 3, rng);
        program.push_back({Step::conv_in, 0, -1});

        enc_res.resize(size_t(L));
        enc_attn.resize(size_t(L));
        enc_cross.resize(size_t(L));
        down.resize(size_t(L - 1));
        for (int l = 0; l < L; ++l) {
            if (l > 0) {
                down[size_t(l - 1)] =
                    ConvLayer<S>(nm("down" + std::to_string(l - 1)), cfg.width(l - 1),
                                 cfg.width(l), 3, rng, 2, 1);
                program.push_back({Step::down, l - 1, -1});
            }
            const std::string en = nm("enc" + std::to_string(l));
            enc_res[size_t(l)] =
                ResBlock<S>(en + ".res", cfg.width(l), cfg.width(l), cfg.embed, cfg.groups, rng);
            program.push_back({Step::enc_res, l, -1});
            if (cfg.attn[size_t(l)]) {
                enc_attn[size_t(l)] = SelfAttention<S>(en + ".attn", cfg.width(l), rng);
                program.push_back({Step::enc_attn, l, int(sites.size())});
                sites.push_back(
                    {"encoder L" + std::to_string(l), TapKind::encoder, cfg.width(l)});
                if (cfg.prompt_attention) {
                    enc_cross[size_t(l)] =
                        CrossAttention<S>(en + ".cross", cfg.width(l), cfg.embed, rng);
                    program.push_back({Step::enc_cross, l, -1});
                }
            }
            program.push_back({Step::push_skip, l, -1});
        }

        const int wm = cfg.width(L - 1);
        mid_res1 = ResBlock<S>(nm("mid.res1"), wm, wm, cfg.embed, cfg.groups, rng);
        program.push_back({Step::mid_res1, 0, -1});
        mid_attn = SelfAttention<S>(nm("mid.attn"), wm, rng);
        program.push_back({Step::mid_attn, 0, int(sites.size())});
        sites.push_back({"mid", TapKind::mid, wm});
        if (cfg.prompt_attention) {
            mid_cross = CrossAttention<S>(nm("mid.cross"), wm, cfg.embed, rng);
            program.push_back({Step::mid_cross, 0, -1});
        }
        mid_res2 = ResBlock<S>(nm("mid.res2"), wm, wm, cfg.embed, cfg.groups, rng);
        program.push_back({Step::mid_res2, 0, -1});

        dec_res.resize(size_t(L));
        dec_attn.resize(size_t(L));
        dec_cross.resize(size_t(L));
        up.resize(size_t(L - 1));
        for (int l = L - 1; l >= 0; --l) {
            const std::string dn = nm("dec" + std::to_string(l));
            program.push_back({Step::cat_skip, l, -1});
            dec_res[size_t(l)] = ResBlock<S>(dn + ".res", 2 * cfg.width(l), cfg.width(l),
                                             cfg.embed, cfg.groups, rng);
            program.push_back({Step::dec_res, l, -1});
            if (cfg.attn[size_t(l)]) {
                dec_attn[size_t(l)] = SelfAttention<S>(dn + ".attn", cfg.width(l), rng);
                program.push_back({Step::dec_attn, l, int(sites.size())});
                sites.push_back(
                    {"decoder L" + std::to_string(l), TapKind::decoder, cfg.width(l)});
                if (cfg.prompt_attention) {
                    dec_cross[size_t(l)] =
                        CrossAttention<S>(dn + ".cross", cfg.width(l), cfg.embed, rng);
                    program.push_back({Step::dec_cross, l, -1});
                }
            }
            if (l > 0) {
                up[size_t(l - 1)] = ConvLayer<S>(nm("up" + std::to_string(l - 1)), cfg.width(l),
                                                 cfg.width(l - 1), 3, rng);
                program.push_back({Step::up, l - 1, -1});
            }
        }

        out_norm = GroupNormLayer<S>(nm("out_norm"), cfg.width(0), cfg.groups);
        conv_out = ConvLayer<S>(nm("conv_out"), cfg.width(0), cfg.out_channels, 3, rng, 1, 1, true);
        program.push_back({Step::out_head, 0, -1});
    }

    // Construction order; identical across nets built from the same config.
    std::vector<TensorT<S>> params() const {
        std::vector<TensorT<S>> out;
        time1.collect(out);
        time2.collect(out);
        if (cfg.prompt_attention) prompt_embed.collect(out);
        conv_in.collect(out);
        for (int l = 0; l < cfg.levels(); ++l) {
            if (l > 0) down[size_t(l - 1)].collect(out);
            enc_res[size_t(l)].collect(out);
            if (cfg.attn[size_t(l)]) {
                enc_attn[size_t(l)].collect(out);
                if (cfg.prompt_attention) enc_cross[size_t(l)].collect(out);
            }
        }
        mid_res1.collect(out);
        mid_attn.collect(out);
        if (cfg.prompt_attention) mid_cross.collect(out);
        mid_res2.collect(out);
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            dec_res[size_t(l)].collect(out);
            if (cfg.attn[size_t(l)]) {
                dec_attn[size_t(l)].collect(out);
                if (cfg.prompt_attention) dec_cross[size_t(l)].collect(out);
            }
            if (l > 0) up[size_t(l - 1)].collect(out);
        }
        out_norm.collect(out);
        conv_out.collect(out);
        return out;
    }

    UNetRunT<S> begin(const TensorT<S>& x, const std::vector<int>& t,
                      const std::vector<int>* prompt = nullptr) const {
        if (x.shape().size() != 4 || x.dim(1) != cfg.in_channels)
            throw TensorError("unet: input " + shape_str(x.shape()) + " wants " +
                              std::to_string(cfg.in_channels) + " channels");
        const int N = x.dim(0);
        if (int(t.size()) != N)
            throw TensorError("unet: " + std::to_string(t.size()) + " timesteps for batch " +
                              std::to_string(N));
        const int div = 1 << (cfg.levels() - 1);
        if (x.dim(2) % div || x.dim(3) % div)
            throw TensorError("unet: spatial dims " + shape_str(x.shape()) +
                              " must be multiples of " + std::to_string(div));
        UNetRunT<S> run;
        run.net = this;
        run.state = x;
        run.temb = time2(silu(time1(timestep_embedding<S>(t, cfg.embed))));
        if (cfg.prompt_attention) {
            if (!prompt)
                throw TensorError("unet: prompt ids required when prompt attention is on");
            if (int(prompt->size()) != N * cfg.prompt_len)
                throw TensorError("unet: want " + std::to_string(N * cfg.prompt_len) +
                                  " prompt ids, got " + std::to_string(prompt->size()));
            run.prompt_seq = prompt_embed(*prompt, N);
        }
        run.skips.reserve(size_t(cfg.levels()));
        return run;
    }
};

// One in-flight forward pass. advance() executes program steps and pauses
// with the post-self-attention hidden state in `state`; inject() perturbs it
// in place before the next advance. The net must outlive the run.
template <class S>
struct UNetRunT {
    const UNetT<S>* net = nullptr;
    TensorT<S> state;
    TensorT<S> temb;
    TensorT<S> prompt_seq;
    std::vector<TensorT<S>> skips;
    size_t pc = 0;
    int site = -1; // tap site the run is paused at; -1 when running or done

    // True: paused at the next tap site, `state` is its hidden state.
    // False: program finished, `state` is the prediction.
    bool advance() {
        site = -1;
        while (pc < net->program.size()) {
            const auto& st = net->program[pc++];
            exec(st);
            if (st.tap >= 0) {
                site = st.tap;
                return true;
            }
        }
        return false;
    }

    // Residual perturbation of the hidden state at the paused-at site. Zero
    // delta entries leave the state bit-identical (add_delta contract).
    void inject(const TensorT<S>& delta) {
        if (site < 0) throw TensorError("unet run: inject with no tap site active");
        if (delta.shape() != state.shape())
            throw TensorError("tap '" + net->sites[size_t(site)].name + "': delta " +
                              shape_str(delta.shape()) + " vs hidden " +
                              shape_str(state.shape()));
        state = add_delta(state, delta);
    }

private:
    void exec(const detail::UNetStep& st) {
        using Step = detail::UNetStep;
        const auto& n = *net;
        const auto l = size_t(st.level);
        switch (st.kind) {
        case Step::conv_in: state = n.conv_in(state); break;
        case Step::enc_res: state = n.enc_res[l](state, temb); break;
        case Step::enc_attn: state = n.enc_attn[l](state); break;
        case Step::enc_cross: state = n.enc_cross[l](state, prompt_seq); break;
        case Step::push_skip: skips.push_back(state); break;
        case Step::down: state = n.down[l](state); break;
        case Step::mid_res1: state = n.mid_res1(state, temb); break;
        case Step::mid_attn: state = n.mid_attn(state); break;
        case Step::mid_cross: state = n.mid_cross(state, prompt_seq); break;
        case Step::mid_res2: state = n.mid_res2(state, temb); break;
        case Step::cat_skip: state = concat_ch(state, skips[l]); break;
        case Step::dec_res: state = n.dec_res[l](state, temb); break;
        case Step::dec_attn: state = n.dec_attn[l](state); break;
        case Step::dec_cross: state = n.dec_cross[l](state, prompt_seq); break;
        case Step::up: state = n.up[l](upsample2x(state)); break;
        case Step::out_head: state = n.conv_out(silu(n.out_norm(state))); break;
        }
    }
};

// Plain forward pass. taps_out, when given, receives the hidden state after
// every self-attention in program order; taps_in, when given, must carry one
// delta per site and is added residually at each site before the program
// continues. All-zero deltas reproduce the no-taps run bit for bit.
template <class S>
TensorT<S> unet_forward(const UNetT<S>& net, const TensorT<S>& x, const std::vector<int>& t,
                        const std::vector<int>* prompt = nullptr,
                        const std::vector<TensorT<S>>* taps_in = nullptr,
                        std::vector<TensorT<S>>* taps_out = nullptr) {
    if (taps_in && taps_in->size() != net.sites.size())
        throw TensorError("unet: " + std::to_string(taps_in->size()) + " tap deltas for " +
                          std::to_string(net.sites.size()) + " sites");
    auto run = net.begin(x, t, prompt);
    while (run.advance()) {
        if (taps_out) taps_out->push_back(run.state);
        if (taps_in) run.inject((*taps_in)[size_t(run.site)]);
    }
    return run.state;
}

// ---- checkpoint bridge ------------------------------------------------------

// Parameter values -> checkpoint rows, f32 on disk whatever the scalar type.
template <class S>
Checkpoint make_checkpoint(const std::vector<TensorT<S>>& params, std::string config_json = "{}") {
    Checkpoint ck;
    ck.config_json = std::move(config_json);
    for (const auto& p : params) {
        auto& row = ck.add(p.name(), p.shape());
        for (size_t i = 0; i < p.numel(); ++i) row.data[i] = float(p.data()[i]);
    }
    return ck;
}

// Fills every parameter from its same-named row. A missing row or a shape
// mismatch is an error; the checkpoint may carry extra rows.
template <class S>
void load_params(const Checkpoint& ck, std::vector<TensorT<S>>& params) {
    for (auto& p : params) {
        const NamedTensor* row = ck.find(p.name());
        if (!row) throw FormatError("checkpoint: missing parameter '" + p.name() + "'");
        if (row->shape != p.shape())
            throw FormatError("checkpoint: parameter '" + p.name() + "' is " +
                              shape_str(row->shape) + ", model wants " + shape_str(p.shape()));
        for (size_t i = 0; i < p.numel(); ++i) p.data()[i] = S(row->data[i]);
    }
}

// Best-effort variant: copies rows whose name and shape both match, skips the
// rest. Returns how many parameters were filled.
template <class S>
int copy_matching_params(const Checkpoint& ck, std::vector<TensorT<S>>& params) {
    int copied = 0;
    for (auto& p : params) {
        const NamedTensor* row = ck.find(p.name());
        if (!row || row->shape != p.shape()) continue;
        for (size_t i = 0; i < p.numel(); ++i) p.data()[i] = S(row->data[i]);
        ++copied;
    }
    return copied;
}

using UNet = UNetT<float>;
using UNetRun = UNetRunT<float>;

} // namespace pbrgen
