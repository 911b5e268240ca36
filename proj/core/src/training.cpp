#include "pbrgen/training.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pbrgen/checkpoint.hpp"
#include "pbrgen/errors.hpp"
#include "pbrgen/shading.hpp"

namespace pbrgen {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string step_ckpt_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step%06d.pbrw", step);
    return buf;
}

std::string hash_hex(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// File sinks of one run; inert when the run directory is empty.
struct RunFiles {
    bool active = false;
    std::string ckpt_dir;
    std::ofstream log;

    explicit RunFiles(const std::string& run_dir) {
        if (run_dir.empty()) return;
        active = true;
        ckpt_dir = run_dir + "/ckpt";
        std::error_code ec;
        fs::create_directories(ckpt_dir, ec);
        if (ec) throw IoError("cannot create '" + ckpt_dir + "': " + ec.message());
        const std::string path = run_dir + "/log.jsonl";
        log.open(path, std::ios::trunc);
        if (!log) throw IoError("cannot open '" + path + "' for writing");
    }

    bool logs(int step, const OptimConfig& oc) const {
        if (!active) return false;
        return step == 1 || step == oc.steps || (oc.log_every > 0 && step % oc.log_every == 0);
    }

    bool checkpoints(int step, const OptimConfig& oc) const {
        if (!active) return false;
        return step == oc.steps || (oc.ckpt_every > 0 && step % oc.ckpt_every == 0);
    }
};

std::vector<const SampleRecord*> draw_batch(const std::vector<SampleRecord>& data, int n,
                                            Rng& pick) {
    std::vector<const SampleRecord*> batch(size_t(n));
    for (auto& r : batch) r = &data[pick.next_below(data.size())];
    return batch;
}

void check_positive(const OptimConfig& oc) {
    if (oc.batch <= 0) throw ConfigError("train: batch must be positive");
    if (oc.steps < 0) throw ConfigError("train: steps must not be negative");
}

const SampleRecord& first_of(const std::vector<const SampleRecord*>& recs) {
    if (recs.empty()) throw DatasetError("batch: no records");
    for (const auto* r : recs)
        if (!r) throw DatasetError("batch: null record");
    return *recs[0];
}

void check_plane(const Image& img, const Image& ref, const char* what) {
    if (img.height != ref.height || img.width != ref.width)
        throw DatasetError(std::string("batch: ") + what + " resolution differs between records");
}

// Per-example forward noising against per-example timesteps. Returns the
// noised batch and the matching regression target; draws one fresh noise
// vector per example, in batch order.
std::pair<Tensor, Tensor> noised_targets(const Tensor& z0, const std::vector<int>& ts,
                                         const DiffusionSchedule& s, Rng& rng) {
    const int N = z0.dim(0);
    const size_t per = z0.numel() / size_t(N);
    std::vector<float> zt(z0.numel()), tg(z0.numel());
    std::vector<float> x(per), eps(per);
    for (int n = 0; n < N; ++n) {
        std::copy_n(z0.data().data() + size_t(n) * per, per, x.begin());
        for (auto& e : eps) e = float(rng.normal());
        const auto zn = q_sample(x, ts[size_t(n)], eps, s);
        const auto tn = prediction_target(x, eps, ts[size_t(n)], s);
        std::copy_n(zn.begin(), per, zt.begin() + size_t(n) * per);
        std::copy_n(tn.begin(), per, tg.begin() + size_t(n) * per);
    }
    return {Tensor::from_data(z0.shape(), zt), Tensor::from_data(z0.shape(), tg)};
}

std::vector<int> draw_timesteps(size_t n, int T, Rng& rng) {
    std::vector<int> ts(n);
    for (auto& t : ts) t = 1 + int(rng.next_below(uint64_t(T)));
    return ts;
}

json shape_json(const UNetConfig& s) {
    return json{{"in", s.in_channels},
                {"out", s.out_channels},
                {"base", s.base},
                {"mults", s.mults},
                {"attn", s.attn},
                {"prompt_attention", s.prompt_attention},
                {"prompt_vocab", s.prompt_vocab},
                {"prompt_len", s.prompt_len},
                {"embed", s.embed},
                {"groups", s.groups}};
}

UNetConfig shape_from_json(const json& j) {
    UNetConfig s;
    s.in_channels = j.at("in").get<int>();
    s.out_channels = j.at("out").get<int>();
    s.base = j.at("base").get<int>();
    s.mults = j.at("mults").get<std::vector<int>>();
    s.attn = j.at("attn").get<std::vector<bool>>();
    s.prompt_attention = j.at("prompt_attention").get<bool>();
    s.prompt_vocab = j.at("prompt_vocab").get<int>();
    s.prompt_len = j.at("prompt_len").get<int>();
    s.embed = j.at("embed").get<int>();
    s.groups = j.at("groups").get<int>();
    return s;
}

json diffusion_json(const DiffusionRunConfig& d) {
    return json{{"timesteps", d.T},
                {"schedule", schedule_kind_name(d.kind)},
                {"zero_terminal", d.zero_terminal},
                {"parameterization", parameterization_name(d.param)}};
}

DiffusionRunConfig diffusion_from_json(const json& j) {
    DiffusionRunConfig d;
    d.T = j.at("timesteps").get<int>();
    d.kind = schedule_kind_from_string(j.at("schedule").get<std::string>());
    d.zero_terminal = j.at("zero_terminal").get<bool>();
    d.param = parameterization_from_string(j.at("parameterization").get<std::string>());
    return d;
}

json parse_kind(const std::string& js, const char* want) {
    json j;
    try {
        j = json::parse(js);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    const std::string kind = j.value("kind", "");
    if (kind != want)
        throw FormatError("checkpoint config: expected kind '" + std::string(want) + "', got '" +
                          kind + "'");
    return j;
}

} // namespace

// ---- batch assembly ---------------------------------------------------------

Tensor batch_rgb(const std::vector<const SampleRecord*>& recs) {
    const auto& f = first_of(recs);
    const int H = f.rgb.height, W = f.rgb.width;
    std::vector<float> flat;
    flat.reserve(recs.size() * f.rgb.data.size());
    for (const auto* r : recs) {
        if (r->rgb.channels != kRgbChannels)
            throw DatasetError("batch: rgb record has " + std::to_string(r->rgb.channels) +
                               " channels");
        check_plane(r->rgb, f.rgb, "rgb");
        flat.insert(flat.end(), r->rgb.data.begin(), r->rgb.data.end());
    }
    return Tensor::from_data({int(recs.size()), kRgbChannels, H, W}, flat);
}

Tensor batch_stack(const std::vector<const SampleRecord*>& recs) {
    const auto& f = first_of(recs);
    const int H = f.stack.height, W = f.stack.width;
    std::vector<float> flat;
    flat.reserve(recs.size() * f.stack.data.size());
    for (const auto* r : recs) {
        if (r->stack.channels != kMaterialChannels)
            throw DatasetError("batch: stack record has " + std::to_string(r->stack.channels) +
                               " channels");
        check_plane(r->stack, f.stack, "stack");
        flat.insert(flat.end(), r->stack.data.begin(), r->stack.data.end());
    }
    return Tensor::from_data({int(recs.size()), kMaterialChannels, H, W}, flat);
}

Tensor batch_cond(const std::vector<const SampleRecord*>& recs) {
    const auto& f = first_of(recs);
    const int H = f.normals.height, W = f.normals.width;
    std::vector<float> flat;
    flat.reserve(recs.size() * size_t(kCondChannels) * size_t(H) * size_t(W));
    for (const auto* r : recs) {
        if (r->normals.channels != 3 || r->mask.channels != 1)
            throw DatasetError("batch: conditioning wants 3 normal channels + 1 mask channel");
        check_plane(r->normals, f.normals, "normals");
        check_plane(r->mask, f.normals, "mask");
        flat.insert(flat.end(), r->normals.data.begin(), r->normals.data.end());
        flat.insert(flat.end(), r->mask.data.begin(), r->mask.data.end());
    }
    return Tensor::from_data({int(recs.size()), kCondChannels, H, W}, flat);
}

std::vector<int> batch_prompts(const std::vector<const SampleRecord*>& recs) {
    first_of(recs);
    std::vector<int> out;
    out.reserve(recs.size() * 3);
    for (const auto* r : recs)
        for (int id : r->prompt) out.push_back(id);
    return out;
}

// ---- losses -----------------------------------------------------------------

JointLoss joint_loss(const DualBranchModel& m, const std::vector<const SampleRecord*>& batch,
                     const DiffusionSchedule& schedule, Rng& rng) {
    const auto z0r = batch_rgb(batch);
    const auto z0p = batch_stack(batch);
    const auto cond = batch_cond(batch);
    const auto prompts = batch_prompts(batch);

    const auto ts = draw_timesteps(batch.size(), schedule.T, rng);
    auto [zr, target_r] = noised_targets(z0r, ts, schedule, rng);
    auto [zp, target_p] = noised_targets(z0p, ts, schedule, rng);

    auto [pred_r, pred_p] = dual_forward(m, zr, zp, cond, ts, prompts);
    auto loss_r = mse(pred_r, target_r);
    auto loss_p = mse(pred_p, target_p);

    JointLoss out;
    out.rgb = loss_r.data()[0];
    out.pbr = loss_p.data()[0];
    if (!std::isfinite(out.rgb) || !std::isfinite(out.pbr))
        throw TrainError("joint loss not finite (rgb=" + std::to_string(out.rgb) +
                         ", pbr=" + std::to_string(out.pbr) + ")");
    out.total = add(loss_r, loss_p);
    return out;
}

ScalarLoss rgb_denoise_loss(const UNet& net, const std::vector<const SampleRecord*>& batch,
                            const DiffusionSchedule& schedule, Rng& rng) {
    const auto z0 = batch_rgb(batch);
    const auto prompts = batch_prompts(batch);
    const auto ts = draw_timesteps(batch.size(), schedule.T, rng);
    auto [zt, target] = noised_targets(z0, ts, schedule, rng);
    auto pred = unet_forward(net, zt, ts, net.cfg.prompt_attention ? &prompts : nullptr);
    auto loss = mse(pred, target);
    ScalarLoss out;
    out.value = loss.data()[0];
    if (!std::isfinite(out.value))
        throw TrainError("denoise loss not finite (" + std::to_string(out.value) + ")");
    out.total = loss;
    return out;
}

VaeLossParts vae_batch_loss(const Vae& v, const Tensor& x, Rng& rng) {
    auto [mu, logvar] = v.encode(x);
    auto z = v.reparameterize(mu, logvar, rng);
    auto recon = v.decode(z);
    auto rec = mse(recon, x);
    auto kl = vae_kl(mu, logvar);
    VaeLossParts out;
    out.rec = rec.data()[0];
    out.kl = kl.data()[0];
    if (!std::isfinite(out.rec) || !std::isfinite(out.kl))
        throw TrainError("vae loss not finite (rec=" + std::to_string(out.rec) +
                         ", kl=" + std::to_string(out.kl) + ")");
    out.total = add(rec, scale(kl, float(v.cfg.kl_weight)));
    return out;
}

// ---- loops ------------------------------------------------------------------

TrainStats train_collab(DualBranchModel& m, const std::vector<SampleRecord>& data,
                        const DiffusionRunConfig& dc, const OptimConfig& oc) {
    if (data.empty()) throw DatasetError("train: empty training set");
    check_positive(oc);
    const auto schedule = dc.make();
    Adam opt(m.trainable_params());
    Adam::Hyper hy;
    hy.lr = float(oc.lr);
    Rng root(oc.seed);
    Rng pick = root.fork("pick");
    Rng noise = root.fork("noise");
    const std::string cfg = collab_config_json(m.cfg, dc);

    TrainStats stats;
    RunFiles files(oc.run_dir);
    if (files.active)
        save_checkpoint(files.ckpt_dir + "/" + step_ckpt_name(0),
                        make_checkpoint(m.all_params(), cfg));

    for (int step = 1; step <= oc.steps; ++step) {
        const auto batch = draw_batch(data, oc.batch, pick);
        JointLoss jl;
        try {
            jl = joint_loss(m, batch, schedule, noise);
            backward(jl.total);
            opt.step(hy);
        } catch (const TrainError& e) {
            throw TrainError("seed " + std::to_string(oc.seed) + " step " + std::to_string(step) +
                             ": " + e.what());
        }
        stats.steps.push_back({step, jl.rgb, jl.pbr});
        if (files.logs(step, oc)) {
            const uint64_t fh = params_hash(make_checkpoint(m.frozen_params()), "rgb.");
            files.log << json{{"step", step},
                              {"loss_rgb", jl.rgb},
                              {"loss_pbr", jl.pbr},
                              {"lr", oc.lr},
                              {"frozen_hash", hash_hex(fh)}}
                             .dump()
                      << std::endl;
        }
        if (files.checkpoints(step, oc))
            save_checkpoint(files.ckpt_dir + "/" + step_ckpt_name(step),
                            make_checkpoint(m.all_params(), cfg));
    }
    stats.frozen_hash = params_hash(make_checkpoint(m.frozen_params()), "rgb.");
    return stats;
}

TrainStats pretrain_rgb(UNet& net, const std::vector<SampleRecord>& data,
                        const DiffusionRunConfig& dc, const OptimConfig& oc) {
    if (data.empty()) throw DatasetError("pretrain: empty training set");
    if (net.cfg.in_channels != kRgbChannels || net.cfg.out_channels != kRgbChannels)
        throw ConfigError("pretrain: rgb net wants " + std::to_string(kRgbChannels) +
                          " channels in and out");
    check_positive(oc);
    const auto schedule = dc.make();
    Adam opt(net.params());
    Adam::Hyper hy;
    hy.lr = float(oc.lr);
    Rng root(oc.seed);
    Rng pick = root.fork("pick");
    Rng noise = root.fork("noise");
    const std::string cfg = rgb_base_config_json(net.cfg, dc);

    TrainStats stats;
    RunFiles files(oc.run_dir);
    for (int step = 1; step <= oc.steps; ++step) {
        const auto batch = draw_batch(data, oc.batch, pick);
        ScalarLoss l;
        try {
            l = rgb_denoise_loss(net, batch, schedule, noise);
            backward(l.total);
            opt.step(hy);
        } catch (const TrainError& e) {
            throw TrainError("seed " + std::to_string(oc.seed) + " step " + std::to_string(step) +
                             ": " + e.what());
        }
        stats.steps.push_back({step, l.value, 0.0f});
        if (files.logs(step, oc))
            files.log << json{{"step", step}, {"loss", l.value}, {"lr", oc.lr}}.dump()
                      << std::endl;
        if (files.checkpoints(step, oc))
            save_checkpoint(files.ckpt_dir + "/" + step_ckpt_name(step),
                            make_checkpoint(net.params(), cfg));
    }
    if (files.active)
        save_checkpoint(oc.run_dir + "/base.pbrw", make_checkpoint(net.params(), cfg));
    return stats;
}

TrainStats train_vae(Vae& v, const std::vector<SampleRecord>& data, bool on_rgb,
                     const OptimConfig& oc) {
    if (data.empty()) throw DatasetError("vae: empty training set");
    const int want = on_rgb ? kRgbChannels : kMaterialChannels;
    if (v.cfg.in_channels != want)
        throw ConfigError("vae: model takes " + std::to_string(v.cfg.in_channels) +
                          " channels but this data has " + std::to_string(want));
    check_positive(oc);
    Adam opt(v.params());
    Adam::Hyper hy;
    hy.lr = float(oc.lr);
    Rng root(oc.seed);
    Rng pick = root.fork("pick");
    Rng noise = root.fork("vae");
    const std::string cfg = vae_config_json(v.cfg);

    TrainStats stats;
    RunFiles files(oc.run_dir);
    for (int step = 1; step <= oc.steps; ++step) {
        const auto batch = draw_batch(data, oc.batch, pick);
        VaeLossParts l;
        try {
            l = vae_batch_loss(v, on_rgb ? batch_rgb(batch) : batch_stack(batch), noise);
            backward(l.total);
            opt.step(hy);
        } catch (const TrainError& e) {
            throw TrainError("seed " + std::to_string(oc.seed) + " step " + std::to_string(step) +
                             ": " + e.what());
        }
        stats.steps.push_back({step, l.rec, l.kl});
        if (files.logs(step, oc))
            files.log << json{{"step", step}, {"loss_rec", l.rec}, {"loss_kl", l.kl},
                              {"lr", oc.lr}}
                             .dump()
                      << std::endl;
        if (files.checkpoints(step, oc))
            save_checkpoint(files.ckpt_dir + "/" + step_ckpt_name(step),
                            make_checkpoint(v.params(), cfg));
    }
    if (files.active) save_checkpoint(oc.run_dir + "/vae.pbrw", make_checkpoint(v.params(), cfg));
    return stats;
}

// ---- reconstruction quality ---------------------------------------------------

double vae_stack_psnr(const Vae& v, const std::vector<SampleRecord>& recs) {
    if (recs.empty()) throw DatasetError("vae eval: no records");
    if (v.cfg.in_channels != kMaterialChannels)
        throw ConfigError("vae eval: stack codec wants " + std::to_string(kMaterialChannels) +
                          " input channels");
    double sum = 0.0;
    for (const auto& r : recs) {
        const auto x = Tensor::from_data({1, r.stack.channels, r.stack.height, r.stack.width},
                                         r.stack.data);
        auto [mu, logvar] = v.encode(x);
        auto recon = v.decode(mu);
        Image out(r.stack.channels, r.stack.height, r.stack.width);
        out.data = recon.data();
        sum += psnr(r.stack, out);
    }
    return sum / double(recs.size());
}

double vae_triplet_psnr(const Vae& v, const std::vector<SampleRecord>& recs) {
    if (recs.empty()) throw DatasetError("vae eval: no records");
    if (v.cfg.in_channels != kRgbChannels)
        throw ConfigError("vae eval: triplet route wants a " + std::to_string(kRgbChannels) +
                          "-channel codec");
    double sum = 0.0;
    for (const auto& r : recs) {
        const auto triplets = stack_to_triplets(PbrStack::from_channels(r.stack));
        std::vector<Image> out;
        for (const auto& t : triplets) {
            const auto x = Tensor::from_data({1, t.channels, t.height, t.width}, t.data);
            auto [mu, logvar] = v.encode(x);
            auto recon = v.decode(mu);
            Image img(t.channels, t.height, t.width);
            img.data = recon.data();
            out.push_back(std::move(img));
        }
        sum += psnr(r.stack, triplets_to_stack(out).to_channels());
    }
    return sum / double(recs.size());
}

// ---- config plumbing ----------------------------------------------------------

// Keys stay bare words so `--set wiring=one_way` works without knowing any
// section layout; shipped config files are flat, grouped by comments.
std::vector<std::string> core_config_keys() {
    return {
        "base",       "embed",         "pbr_prompt", "variant",       "wiring",
        "timesteps",  "schedule",      "zero_terminal", "parameterization",
        "lr",         "batch",         "steps",      "seed",          "log_every",
        "ckpt_every", "vae_latent",    "vae_factor", "vae_kl_weight", "vae_on_rgb",
    };
}

UNetConfig base_shape_from(const Config& c) {
    UNetConfig shape;
    shape.base = int(c.get_int("base", shape.base));
    shape.embed = int(c.get_int("embed", shape.embed));
    return shape;
}

DualConfig dual_config_from(const Config& c) {
    DualConfig mc;
    mc.shape = base_shape_from(c);
    mc.pbr_prompt = c.get_bool("pbr_prompt", false);
    mc.variant = comm_variant_from_string(c.get_string("variant", "linear_zero"));
    mc.wiring = wiring_from_string(c.get_string("wiring", "bidirectional"));
    return mc;
}

DiffusionRunConfig diffusion_config_from(const Config& c) {
    DiffusionRunConfig dc;
    dc.T = int(c.get_int("timesteps", dc.T));
    dc.kind = schedule_kind_from_string(c.get_string("schedule", "linear"));
    dc.zero_terminal = c.get_bool("zero_terminal", false);
    // Rescaling the schedule to a silent endpoint only works with the
    // velocity target, so the default follows the flag.
    dc.param = parameterization_from_string(
        c.get_string("parameterization", dc.zero_terminal ? "v" : "epsilon"));
    return dc;
}

OptimConfig optim_config_from(const Config& c, const std::string& run_dir) {
    OptimConfig oc;
    oc.lr = c.get_double("lr", oc.lr);
    oc.batch = int(c.get_int("batch", oc.batch));
    oc.steps = int(c.get_int("steps", oc.steps));
    oc.seed = uint64_t(c.get_int("seed", 1));
    oc.log_every = int(c.get_int("log_every", oc.log_every));
    oc.ckpt_every = int(c.get_int("ckpt_every", oc.ckpt_every));
    oc.run_dir = run_dir;
    return oc;
}

VaeConfig vae_config_from(const Config& c) {
    VaeConfig vc;
    const bool on_rgb = c.get_bool("vae_on_rgb", false);
    vc.in_channels = on_rgb ? kRgbChannels : kMaterialChannels;
    vc.latent_channels = int(c.get_int("vae_latent", on_rgb ? 5 : vc.latent_channels));
    vc.factor = int(c.get_int("vae_factor", vc.factor));
    vc.kl_weight = c.get_double("vae_kl_weight", vc.kl_weight);
    vc.validate();
    return vc;
}

std::string rgb_base_config_json(const UNetConfig& shape, const DiffusionRunConfig& dc) {
    return json{{"kind", "rgb_base"}, {"unet", shape_json(shape)}, {"diffusion", diffusion_json(dc)}}
        .dump();
}

void parse_rgb_base_config(const std::string& js, UNetConfig& shape, DiffusionRunConfig& dc) {
    const json j = parse_kind(js, "rgb_base");
    try {
        shape = shape_from_json(j.at("unet"));
        dc = diffusion_from_json(j.at("diffusion"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
}

std::string collab_config_json(const DualConfig& mc, const DiffusionRunConfig& dc) {
    return json{{"kind", "collab"},
                {"model",
                 {{"shape", shape_json(mc.shape)},
                  {"rgb_channels", mc.rgb_channels},
                  {"pbr_channels", mc.pbr_channels},
                  {"cond_channels", mc.cond_channels},
                  {"pbr_prompt", mc.pbr_prompt},
                  {"variant", comm_variant_name(mc.variant)},
                  {"wiring", wiring_name(mc.wiring)}}},
                {"diffusion", diffusion_json(dc)}}
        .dump();
}

void parse_collab_config(const std::string& js, DualConfig& mc, DiffusionRunConfig& dc) {
    const json j = parse_kind(js, "collab");
    try {
        const json& m = j.at("model");
        mc.shape = shape_from_json(m.at("shape"));
        mc.rgb_channels = m.at("rgb_channels").get<int>();
        mc.pbr_channels = m.at("pbr_channels").get<int>();
        mc.cond_channels = m.at("cond_channels").get<int>();
        mc.pbr_prompt = m.at("pbr_prompt").get<bool>();
        mc.variant = comm_variant_from_string(m.at("variant").get<std::string>());
        mc.wiring = wiring_from_string(m.at("wiring").get<std::string>());
        dc = diffusion_from_json(j.at("diffusion"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
}

std::string vae_config_json(const VaeConfig& vc) {
    return json{{"kind", "vae"},
                {"vae",
                 {{"in", vc.in_channels},
                  {"latent", vc.latent_channels},
                  {"factor", vc.factor},
                  {"kl_weight", vc.kl_weight}}}}
        .dump();
}

VaeConfig parse_vae_config(const std::string& js) {
    const json j = parse_kind(js, "vae");
    VaeConfig vc;
    try {
        const json& v = j.at("vae");
        vc.in_channels = v.at("in").get<int>();
        vc.latent_channels = v.at("latent").get<int>();
        vc.factor = v.at("factor").get<int>();
        vc.kl_weight = v.at("kl_weight").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    vc.validate();
    return vc;
}

} // namespace pbrgen
