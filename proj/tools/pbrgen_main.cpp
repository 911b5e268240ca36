// Command-line surface. Every subcommand reads one flat config (file, then
// --set overrides), echoes the resolved config into its run directory, and
// writes logs/checkpoints/artifacts only there. Exit codes: 0 ok, 1 internal,
// 2 config, 3 dataset, 4 checkpoint/container, 5 other io.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pbrgen/checkpoint.hpp"
#include "pbrgen/collab.hpp"
#include "pbrgen/config.hpp"
#include "pbrgen/dataset.hpp"
#include "pbrgen/errors.hpp"
#include "pbrgen/metrics.hpp"
#include "pbrgen/nets.hpp"
#include "pbrgen/png_io.hpp"
#include "pbrgen/training.hpp"
#include "pbrgen/vae.hpp"

namespace {

using namespace pbrgen;
using nlohmann::json;
namespace fs = std::filesystem;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string run_dir;
    int64_t seed = -1;
};

void add_common(CLI::App* sub, Common& co) {
    sub->add_option("--config", co.config, "config file (flat TOML subset)");
    sub->add_option("--set", co.sets, "override, key=value (repeatable)")->take_all();
    sub->add_option("--run-dir", co.run_dir, "directory for logs, checkpoints and artifacts");
    sub->add_option("--seed", co.seed, "shorthand for --set seed=N");
}

std::vector<std::string> known_keys() {
    auto keys = core_config_keys();
    for (const char* k :
         {"data_dir", "data_fraction", "objects", "views", "resolution", "holdout", "base_ckpt",
          "ckpt", "mask_projection_steps", "sample_count", "eval_samples", "prompt_shift",
          "interp_kind", "interp_points", "prompt_a", "prompt_b"})
        keys.push_back(k);
    return keys;
}

Config resolve(const Common& co) {
    Config c;
    if (!co.config.empty()) c = Config::parse_file(co.config);
    for (const auto& s : co.sets) c.apply_override(s);
    if (co.seed >= 0) c.set("seed", std::to_string(co.seed));
    c.require_known(known_keys());
    return c;
}

std::string need_run_dir(const Common& co) {
    if (co.run_dir.empty()) throw ConfigError("this command needs --run-dir");
    std::error_code ec;
    fs::create_directories(co.run_dir, ec);
    if (ec) throw IoError("cannot create '" + co.run_dir + "': " + ec.message());
    return co.run_dir;
}

// Missing dataset directory maps to the dataset exit code; corrupt record
// containers keep their format error (checkpoint/container code).
Dataset load_data(const Config& c) {
    const std::string dir = c.get_string("data_dir", "runs/data");
    Dataset d;
    try {
        d = load_dataset(dir);
    } catch (const FormatError&) {
        throw;
    } catch (const IoError& e) {
        throw DatasetError("no dataset at '" + dir + "' (run gen-data first): " + e.what());
    }
    const double frac = c.get_double("data_fraction", 1.0);
    if (frac < 1.0) d.train = filter_records(d.train, subset_object_ids(d.manifest, frac));
    return d;
}

Checkpoint load_ckpt_at(const std::string& path) {
    try {
        return load_checkpoint(path);
    } catch (const FormatError&) {
        throw;
    } catch (const VersionError&) {
        throw;
    } catch (const TruncationError&) {
        throw;
    } catch (const IoError& e) {
        throw FormatError("checkpoint '" + path + "': " + e.what());
    }
}

struct LoadedModel {
    DualConfig mc;
    DiffusionRunConfig dc;
    DualBranchModel model;
};

LoadedModel rebuild(const Checkpoint& ck) {
    LoadedModel lm;
    parse_collab_config(ck.config_json, lm.mc, lm.dc);
    Rng init(1); // placeholder weights, the checkpoint overwrites everything
    lm.model = DualBranchModel(lm.mc, init);
    auto ps = lm.model.all_params();
    load_params(ck, ps);
    return lm;
}

const std::vector<SampleRecord>& pool_of(const Dataset& d) {
    return d.eval.empty() ? d.train : d.eval;
}

std::array<int, 3> parse_prompt(const std::string& s) {
    std::array<int, 3> p{};
    if (std::sscanf(s.c_str(), "%d , %d , %d", &p[0], &p[1], &p[2]) != 3)
        throw ConfigError("prompt '" + s + "' wants three comma-separated token ids");
    for (int id : p)
        if (id < 0 || id >= prompt_vocab_size())
            throw ConfigError("prompt id " + std::to_string(id) + " outside vocab " +
                              std::to_string(prompt_vocab_size()));
    return p;
}

std::string prompt_str(const std::array<int, 3>& p) {
    return std::to_string(p[0]) + "," + std::to_string(p[1]) + "," + std::to_string(p[2]);
}

// Swap the palette token for its successor; surface and texture stay. Used
// for out-of-distribution prompting.
std::array<int, 3> shift_prompt(std::array<int, 3> p) {
    const int np = prompt_vocab_size() - 8; // palette ids sit at 8..vocab-1
    p[2] = 8 + (p[2] - 8 + 1) % np;
    return p;
}

Image to3(const Image& img) {
    if (img.channels == 3) return img;
    Image out(3, img.height, img.width);
    for (int c = 0; c < 3; ++c)
        std::copy(img.data.begin(), img.data.end(), out.data.begin() + size_t(c) * img.data.size());
    return out;
}

Image unit_range(const Image& img) { // [-1,1] display mapping
    Image out = img;
    for (auto& v : out.data) v = 0.5f * (v + 1.0f);
    return out;
}

// One column of the figure layout: normals|albedo|roughness|metallic|bump|RGB.
Image sample_column(const Image& normals, const JointSample& s) {
    Image col = unit_range(normals);
    col = vcat(col, s.stack.albedo, 1, 1.0f);
    col = vcat(col, to3(s.stack.roughness), 1, 1.0f);
    col = vcat(col, to3(s.stack.metallic), 1, 1.0f);
    col = vcat(col, unit_range(s.stack.bump), 1, 1.0f);
    col = vcat(col, s.rgb, 1, 1.0f);
    return col;
}

void append_column(Image& grid, const Image& col) {
    grid = grid.data.empty() ? col : hcat(grid, col, 1, 1.0f);
}

std::ofstream open_log(const std::string& run_dir) {
    const std::string path = run_dir + "/log.jsonl";
    std::ofstream log(path, std::ios::trunc);
    if (!log) throw IoError("cannot open '" + path + "' for writing");
    return log;
}

void write_report(const std::string& run_dir, const json& rep) {
    const std::string path = run_dir + "/report.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << rep.dump(2) << '\n';
}

double mean_of(const std::vector<StepLog>& steps, size_t from, size_t count,
               bool joint) {
    double acc = 0.0;
    for (size_t i = from; i < from + count; ++i)
        acc += double(steps[i].loss_a) + (joint ? double(steps[i].loss_b) : 0.0);
    return acc / double(count);
}

void print_loss_trend(const TrainStats& stats, bool joint) {
    const size_t n = stats.steps.size();
    if (n == 0) return;
    const size_t w = std::min<size_t>(100, n);
    const double head = mean_of(stats.steps, 0, w, joint);
    const double tail = mean_of(stats.steps, n - w, w, joint);
    std::printf("loss mean: first %zu steps %.4f, last %zu steps %.4f (ratio %.3f)\n", w, head, w,
                tail, head > 0 ? tail / head : 0.0);
}

// ---- subcommands ------------------------------------------------------------

int cmd_gen_data(const Common& co) {
    Config c = resolve(co);
    const std::string dir = c.get_string("data_dir", "runs/data");
    const int objects = int(c.get_int("objects", 64));
    const int views = int(c.get_int("views", 16));
    const int resolution = int(c.get_int("resolution", kDeskResolution));
    const double holdout = c.get_double("holdout", 0.02);
    const uint64_t seed = uint64_t(c.get_int("seed", 1));
    const auto m = generate_dataset(dir, objects, views, resolution, seed, holdout, c.to_toml());
    int held = 0;
    for (const auto& o : m.objects) held += o.holdout ? 1 : 0;
    std::printf("dataset '%s': %zu objects x %d views at %dx%d, %d held out\n", dir.c_str(),
                m.objects.size(), m.views, m.resolution, m.resolution, held);
    if (!co.run_dir.empty()) c.write_file(need_run_dir(co) + "/config.toml");
    return 0;
}

int cmd_pretrain(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Dataset d = load_data(c);

    UNetConfig shape = base_shape_from(c);
    shape.in_channels = shape.out_channels = kRgbChannels;
    shape.prompt_attention = true;
    shape.prompt_vocab = prompt_vocab_size();
    const DiffusionRunConfig dc = diffusion_config_from(c);
    const OptimConfig oc = optim_config_from(c, run_dir);

    Rng root(oc.seed);
    Rng init = root.fork("init");
    UNet net(shape, init, "rgb.");
    const auto stats = pretrain_rgb(net, d.train, dc, oc);
    std::printf("pretrained rgb base on %zu records for %d steps -> %s/base.pbrw\n",
                d.train.size(), oc.steps, run_dir.c_str());
    print_loss_trend(stats, false);
    return 0;
}

int cmd_train(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Dataset d = load_data(c);

    DualConfig mc = dual_config_from(c);
    mc.shape.prompt_vocab = prompt_vocab_size();
    const DiffusionRunConfig dc = diffusion_config_from(c);
    const Checkpoint base = load_ckpt_at(c.get_string("base_ckpt"));
    UNetConfig base_shape;
    DiffusionRunConfig base_dc;
    parse_rgb_base_config(base.config_json, base_shape, base_dc);
    if (base_dc.T != dc.T || base_dc.kind != dc.kind ||
        base_dc.zero_terminal != dc.zero_terminal || base_dc.param != dc.param)
        throw ConfigError(std::string("diffusion setup differs from the base checkpoint's (base: ") +
                          "T=" + std::to_string(base_dc.T) + " " + schedule_kind_name(base_dc.kind) +
                          " zero_terminal=" + (base_dc.zero_terminal ? "true" : "false") + " " +
                          parameterization_name(base_dc.param) + ")");

    const OptimConfig oc = optim_config_from(c, run_dir);
    Rng root(oc.seed);
    Rng init = root.fork("init");
    DualBranchModel m(mc, init);
    m.load_rgb_base(base);
    const auto stats = train_collab(m, d.train, dc, oc);
    std::printf("joint run: %d steps, wiring %s, comm %s, frozen hash %016llx\n", oc.steps,
                wiring_name(mc.wiring), comm_variant_name(mc.variant),
                static_cast<unsigned long long>(stats.frozen_hash));
    print_loss_trend(stats, true);
    return 0;
}

int cmd_train_vae(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Dataset d = load_data(c);

    const VaeConfig vc = vae_config_from(c);
    const bool on_rgb = c.get_bool("vae_on_rgb", false);
    const OptimConfig oc = optim_config_from(c, run_dir);
    Rng root(oc.seed);
    Rng init = root.fork("init");
    Vae v(vc, init);
    const auto stats = train_vae(v, d.train, on_rgb, oc);
    print_loss_trend(stats, false);

    const auto& evalset = pool_of(d);
    const double score = on_rgb ? vae_triplet_psnr(v, evalset) : vae_stack_psnr(v, evalset);
    const char* which = on_rgb ? "psnr_triplets" : "psnr_stack";
    write_report(run_dir, json{{"kind", "vae"},
                               {"on_rgb", on_rgb},
                               {"latent", vc.latent_channels},
                               {"records", evalset.size()},
                               {which, score}});
    std::printf("vae (%s): %s %.2f dB over %zu held-out records\n",
                on_rgb ? "rgb triplets" : "material stacks", which, score, evalset.size());
    return 0;
}

int cmd_sample(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Checkpoint ck = load_ckpt_at(c.get_string("ckpt"));
    const LoadedModel lm = rebuild(ck);
    const Dataset d = load_data(c);
    const auto& pool = pool_of(d);

    const int count = int(c.get_int("sample_count", 8));
    const int k = int(c.get_int("mask_projection_steps", 0));
    const uint64_t seed = uint64_t(c.get_int("seed", 1));
    const auto schedule = lm.dc.make();

    std::error_code ec;
    fs::create_directories(run_dir + "/samples", ec);
    if (ec) throw IoError("cannot create '" + run_dir + "/samples': " + ec.message());
    auto log = open_log(run_dir);

    Rng rng(seed);
    Image grid;
    for (int i = 0; i < count; ++i) {
        const auto& rec = pool[size_t(i) % pool.size()];
        const Image cond = concat_channels(rec.normals, rec.mask);
        Rng srng = rng.fork(uint64_t(i));
        const auto s = sample_joint(lm.model, cond, rec.prompt, schedule, srng, k);
        const Image col = sample_column(rec.normals, s);
        char name[32];
        std::snprintf(name, sizeof name, "/samples/sample%02d.png", i);
        write_png(run_dir + name, col);
        append_column(grid, col);
        log << json{{"sample", i},
                    {"object_id", rec.object_id},
                    {"view_id", rec.view_id},
                    {"prompt", rec.prompt},
                    {"mask_projection_steps", k}}
                   .dump()
            << std::endl;
    }
    write_png(run_dir + "/samples/grid.png", grid);
    std::printf("wrote %d samples and %s/samples/grid.png (mask_projection_steps=%d)\n", count,
                run_dir.c_str(), k);
    return 0;
}

int cmd_eval(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Checkpoint ck = load_ckpt_at(c.get_string("ckpt"));
    const LoadedModel lm = rebuild(ck);
    const Dataset d = load_data(c);
    const auto& pool = pool_of(d);

    const int n = int(c.get_int("eval_samples", 32));
    const int k = int(c.get_int("mask_projection_steps", 0));
    const bool shift = c.get_bool("prompt_shift", false);
    const uint64_t seed = uint64_t(c.get_int("seed", 1));
    const auto schedule = lm.dc.make();

    EmbeddingBackbone backbone;
    std::vector<Image> real_stacks, gen_stacks;
    std::vector<std::vector<float>> real_emb, gen_emb;
    for (const auto& rec : pool) {
        real_stacks.push_back(rec.stack);
        real_emb.push_back(backbone.embed(rec.rgb));
    }

    std::error_code ec;
    fs::create_directories(run_dir + "/samples", ec);
    if (ec) throw IoError("cannot create '" + run_dir + "/samples': " + ec.message());
    auto log = open_log(run_dir);

    Rng rng(seed);
    Image grid;
    for (int i = 0; i < n; ++i) {
        const auto& rec = pool[size_t(i) % pool.size()];
        const auto prompt = shift ? shift_prompt(rec.prompt) : rec.prompt;
        const Image cond = concat_channels(rec.normals, rec.mask);
        Rng srng = rng.fork(uint64_t(i));
        const auto s = sample_joint(lm.model, cond, prompt, schedule, srng, k);
        gen_stacks.push_back(s.stack.to_channels());
        gen_emb.push_back(backbone.embed(s.rgb));
        if (i < 8) append_column(grid, sample_column(rec.normals, s));
        log << json{{"sample", i}, {"object_id", rec.object_id}, {"prompt", prompt}}.dump()
            << std::endl;
    }
    write_png(run_dir + "/samples/eval_grid.png", grid);

    const auto ga = fit_gaussian(gen_emb);
    const auto gb = fit_gaussian(real_emb);
    const double rgb_frechet = frechet(ga, gb);
    const double rgb_mmd = mmd_rbf(gen_emb, real_emb, median_bandwidth(gen_emb, real_emb));
    const auto tf = pbr_triplet_score(gen_stacks, real_stacks, MetricKind::frechet, backbone);
    const auto tm = pbr_triplet_score(gen_stacks, real_stacks, MetricKind::mmd, backbone);

    auto breakdown = [](const TripletScore& t) {
        json b = json::object();
        for (const auto& [name, score] : t.breakdown) b[name] = score;
        return b;
    };
    write_report(run_dir,
                 json{{"kind", "eval"},
                      {"wiring", wiring_name(lm.mc.wiring)},
                      {"variant", comm_variant_name(lm.mc.variant)},
                      {"samples", n},
                      {"held_out_records", pool.size()},
                      {"prompt_shift", shift},
                      {"mask_projection_steps", k},
                      {"rgb", json{{"frechet", rgb_frechet}, {"mmd", rgb_mmd}}},
                      {"stack_frechet", json{{"mean", tf.mean}, {"breakdown", breakdown(tf)}}},
                      {"stack_mmd", json{{"mean", tm.mean}, {"breakdown", breakdown(tm)}}}});
    std::printf("eval (%s/%s): rgb frechet %.4f, stack frechet %.4f, stack mmd %.5f\n",
                wiring_name(lm.mc.wiring), comm_variant_name(lm.mc.variant), rgb_frechet, tf.mean,
                tm.mean);
    return 0;
}

int cmd_interp(const Common& co) {
    Config c = resolve(co);
    const std::string run_dir = need_run_dir(co);
    c.write_file(run_dir + "/config.toml");
    const Checkpoint ck = load_ckpt_at(c.get_string("ckpt"));
    const LoadedModel lm = rebuild(ck);
    const Dataset d = load_data(c);
    const auto& pool = pool_of(d);
    const auto& rec = pool[0];

    const std::string kind = c.get_string("interp_kind", "noise");
    const int points = std::max(2, int(c.get_int("interp_points", 7)));
    const int k = int(c.get_int("mask_projection_steps", 0));
    const uint64_t seed = uint64_t(c.get_int("seed", 1));
    const auto schedule = lm.dc.make();
    const Image cond = concat_channels(rec.normals, rec.mask);
    const size_t hw = size_t(rec.mask.height) * size_t(rec.mask.width);

    std::error_code ec;
    fs::create_directories(run_dir + "/samples", ec);
    if (ec) throw IoError("cannot create '" + run_dir + "/samples': " + ec.message());
    auto log = open_log(run_dir);

    Rng rng(seed);
    Image grid;
    if (kind == "noise") {
        Rng ra = rng.fork("a"), rb = rng.fork("b");
        std::vector<float> e0r(3 * hw), e0p(8 * hw), e1r(3 * hw), e1p(8 * hw);
        for (auto& v : e0r) v = float(ra.normal());
        for (auto& v : e0p) v = float(ra.normal());
        for (auto& v : e1r) v = float(rb.normal());
        for (auto& v : e1p) v = float(rb.normal());
        for (int j = 0; j < points; ++j) {
            const double lambda = double(j) / double(points - 1);
            const auto ir = interp_noise(e0r, e1r, lambda);
            const auto ip = interp_noise(e0p, e1p, lambda);
            SampleOverride ov;
            ov.init_rgb = &ir;
            ov.init_pbr = &ip;
            Rng srng = rng.fork("steps"); // same stream at every lambda
            const auto s = sample_joint(lm.model, cond, rec.prompt, schedule, srng, k, ov);
            append_column(grid, sample_column(rec.normals, s));
            log << json{{"kind", "noise"}, {"lambda", lambda}}.dump() << std::endl;
        }
    } else if (kind == "prompt") {
        const auto pa = parse_prompt(c.get_string("prompt_a", prompt_str(rec.prompt)));
        std::array<int, 3> pb_default = shift_prompt(pa);
        for (const auto& r : pool)
            if (r.prompt != pa) {
                pb_default = r.prompt;
                break;
            }
        const auto pb = parse_prompt(c.get_string("prompt_b", prompt_str(pb_default)));
        const auto ea = prompt_embedding(lm.model, pa);
        const auto eb = prompt_embedding(lm.model, pb);
        for (int j = 0; j < points; ++j) {
            const double lambda = double(j) / double(points - 1);
            const auto e = interp_prompt(ea, eb, lambda);
            const auto pe = Tensor::from_data({1, lm.model.rgb.cfg.prompt_len,
                                               lm.model.rgb.cfg.embed}, e);
            SampleOverride ov;
            ov.prompt_embed = &pe;
            Rng srng = rng.fork("steps");
            const auto s = sample_joint(lm.model, cond, pa, schedule, srng, k, ov);
            append_column(grid, sample_column(rec.normals, s));
            log << json{{"kind", "prompt"},
                        {"lambda", lambda},
                        {"prompt_a", pa},
                        {"prompt_b", pb}}
                       .dump()
                << std::endl;
        }
    } else {
        throw ConfigError("interp_kind must be 'noise' or 'prompt', got '" + kind + "'");
    }
    write_png(run_dir + "/samples/interp_grid.png", grid);
    std::printf("wrote %d-point %s interpolation grid to %s/samples/interp_grid.png\n", points,
                kind.c_str(), run_dir.c_str());
    return 0;
}

template <class F>
double checked(const char* name, F&& make_loss, const std::vector<TensorT<double>>& leaves,
               Rng& rng, bool& ok) {
    const double err = grad_check<double>(make_loss, leaves, 1e-5, 4, &rng);
    const bool pass = err < 1e-5;
    ok = ok && pass;
    std::printf("  %-22s %s (max rel err %.3e)\n", name, pass ? "ok" : "FAIL", err);
    return err;
}

void randomize(std::vector<TensorT<double>> params, Rng& rng, double stddev) {
    for (auto& p : params)
        for (auto& v : p.data()) v = rng.normal() * stddev;
}

int cmd_gradcheck(const Common& co) {
    Config c = resolve(co);
    Rng rng(uint64_t(c.get_int("seed", 1)));
    bool ok = true;
    std::printf("finite-difference gradient checks (64-bit):\n");

    {
        auto x = TensorT<double>::param({2, 3, 5, 5}, "x");
        auto w = TensorT<double>::param({4, 3, 3, 3}, "w");
        auto b = TensorT<double>::param({4}, "b");
        randomize({x, w, b}, rng, 0.5);
        checked("conv2d", [&] { return mean_all(conv2d(x, w, b)); }, {x, w, b}, rng, ok);
    }
    {
        auto x = TensorT<double>::param({2, 8, 4, 4}, "x");
        SelfAttention<double> attn("attn", 8, rng);
        auto leaves = std::vector<TensorT<double>>{x};
        attn.collect(leaves);
        randomize(leaves, rng, 0.3);
        checked("self_attention", [&] { return mean_all(attn(x)); }, leaves, rng, ok);
    }
    for (auto variant : {CommVariant::linear_zero, CommVariant::mlp4, CommVariant::global_attention}) {
        auto x = TensorT<double>::param({1, 8, 4, 4}, "x");
        CommLayerT<double> comm("comm", variant, 4, rng);
        auto leaves = std::vector<TensorT<double>>{x};
        comm.collect(leaves);
        randomize(leaves, rng, 0.3);
        checked(comm_variant_name(variant), [&] { return mean_all(comm(x)); }, leaves, rng, ok);
    }
    {
        VaeConfig vc;
        vc.in_channels = 2;
        vc.latent_channels = 3;
        vc.factor = 2;
        VaeT<double> vae(vc, rng);
        auto x = TensorT<double>::param({1, 2, 4, 4}, "x");
        auto leaves = std::vector<TensorT<double>>{x};
        for (const auto& p : vae.params()) leaves.push_back(p);
        randomize(leaves, rng, 0.3);
        checked("vae",
                [&] {
                    auto [mu, logvar] = vae.encode(x);
                    Rng eps(7);
                    auto z = vae.reparameterize(mu, logvar, eps);
                    return mean_all(vae.decode(z));
                },
                leaves, rng, ok);
    }
    {
        UNetConfig uc;
        uc.in_channels = uc.out_channels = 2;
        uc.base = 8;
        uc.mults = {1, 2};
        uc.attn = {false, true};
        uc.embed = 16;
        uc.groups = 4;
        uc.prompt_attention = true;
        uc.prompt_vocab = 6;
        UNetT<double> net(uc, rng, "g.");
        auto x = TensorT<double>::param({1, 2, 8, 8}, "x");
        auto leaves = std::vector<TensorT<double>>{x};
        for (const auto& p : net.params()) leaves.push_back(p);
        randomize(leaves, rng, 0.2);
        const std::vector<int> ts = {3};
        const std::vector<int> prompt = {0, 2, 4};
        checked("unet_2level", [&] { return mean_all(unet_forward(net, x, ts, &prompt)); },
                leaves, rng, ok);
    }

    std::printf(ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint rgb + material diffusion, desk scale"};
    app.require_subcommand(1);
    app.footer("exit codes: 0 ok, 1 internal, 2 config, 3 dataset, 4 checkpoint, 5 io");

    Common gen, pre, trn, vae, smp, evl, itp, gck;
    add_common(app.add_subcommand("gen-data", "generate the procedural dataset"), gen);
    add_common(app.add_subcommand("pretrain-rgb", "train the frozen-to-be rgb base"), pre);
    add_common(app.add_subcommand("train", "joint dual-branch training"), trn);
    add_common(app.add_subcommand("train-vae", "train a stack or rgb autoencoder"), vae);
    add_common(app.add_subcommand("sample", "sample figures from a checkpoint"), smp);
    add_common(app.add_subcommand("eval", "score generated vs held-out sets"), evl);
    add_common(app.add_subcommand("interp", "noise/prompt interpolation grids"), itp);
    add_common(app.add_subcommand("gradcheck", "finite-difference autodiff check"), gck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen);
        if (app.got_subcommand("pretrain-rgb")) return cmd_pretrain(pre);
        if (app.got_subcommand("train")) return cmd_train(trn);
        if (app.got_subcommand("train-vae")) return cmd_train_vae(vae);
        if (app.got_subcommand("sample")) return cmd_sample(smp);
        if (app.got_subcommand("eval")) return cmd_eval(evl);
        if (app.got_subcommand("interp")) return cmd_interp(itp);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gck);
    } catch (const FormatError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 4;
    } catch (const VersionError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 4;
    } catch (const TruncationError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 4;
    } catch (const DatasetError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "pbrgen: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
