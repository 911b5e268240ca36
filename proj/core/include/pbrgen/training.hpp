#pragma once

// Training loops: the rgb base pretrain, the joint dual-branch run, and the
// VAE. All loops are single-writer, draw every random through forked
// sub-streams of one seed, and are bit-reproducible given that seed. File
// output (config echo, JSONL step log, periodic checkpoints) only happens
// when a run directory is set, so tests can train fully in memory.

#include <cstdint>
#include <string>
#include <vector>

#include "pbrgen/collab.hpp"
#include "pbrgen/config.hpp"
#include "pbrgen/dataset.hpp"
#include "pbrgen/diffusion.hpp"
#include "pbrgen/nets.hpp"
#include "pbrgen/vae.hpp"

namespace pbrgen {

// Full-scale recipe from the original training setup; desk runs override the
// batch but keep the learning rate.
inline constexpr int kReferenceBatchSize = 12;
inline constexpr double kReferenceLearningRate = kDefaultLearningRate; // 3e-5

// Desk-scale defaults: minutes, not GPU-days.
inline constexpr int kDeskBatchSize = 16;
inline constexpr int kDeskSteps = 2000;
inline constexpr int kDeskTimesteps = 64;
inline constexpr int kDeskResolution = 32;

inline const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "cosine";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind '" + s + "'");
}

inline const char* parameterization_name(Parameterization p) {
    return p == Parameterization::epsilon ? "epsilon" : "v";
}

inline Parameterization parameterization_from_string(const std::string& s) {
    if (s == "epsilon") return Parameterization::epsilon;
    if (s == "v") return Parameterization::v;
    throw ConfigError("unknown parameterization '" + s + "'");
}

struct DiffusionRunConfig {
    int T = kDeskTimesteps;
    ScheduleKind kind = ScheduleKind::linear;
    bool zero_terminal = false;
    Parameterization param = Parameterization::epsilon;

    DiffusionSchedule make() const { return make_schedule(kind, T, zero_terminal, param); }
};

struct OptimConfig {
    double lr = kDefaultLearningRate;
    int batch = kDeskBatchSize;
    int steps = kDeskSteps;
    uint64_t seed = 1;
    int log_every = 25;
    int ckpt_every = 500;
    std::string run_dir; // empty: no file output
};

// One optimizer step as recorded in TrainStats. The two loss channels mean
// (rgb, pbr) for the joint run, (loss, 0) for the rgb pretrain and
// (reconstruction, kl) for the VAE.
struct StepLog {
    int step = 0;
    float loss_a = 0.0f;
    float loss_b = 0.0f;
};

struct TrainStats {
    std::vector<StepLog> steps;
    uint64_t frozen_hash = 0; // joint run only: hash of the frozen set at the end
};

// ---- batch assembly ---------------------------------------------------------

// All records must share one resolution; mismatches raise DatasetError.
Tensor batch_rgb(const std::vector<const SampleRecord*>& recs);
Tensor batch_stack(const std::vector<const SampleRecord*>& recs);
Tensor batch_cond(const std::vector<const SampleRecord*>& recs); // normals(3) + mask(1)
std::vector<int> batch_prompts(const std::vector<const SampleRecord*>& recs);

// ---- losses -----------------------------------------------------------------

struct JointLoss {
    Tensor total; // scalar with graph, rgb mse + pbr mse weighted 1:1
    float rgb = 0.0f;
    float pbr = 0.0f;
};

// Draw order per call: one timestep per example (shared by both branches),
// then rgb noise, then pbr noise, each branch noised independently. Throws
// TrainError when either component comes out non-finite.
JointLoss joint_loss(const DualBranchModel& m, const std::vector<const SampleRecord*>& batch,
                     const DiffusionSchedule& schedule, Rng& rng);

struct ScalarLoss {
    Tensor total;
    float value = 0.0f;
};

// Denoising loss of the standalone prompt-conditioned rgb net.
ScalarLoss rgb_denoise_loss(const UNet& net, const std::vector<const SampleRecord*>& batch,
                            const DiffusionSchedule& schedule, Rng& rng);

struct VaeLossParts {
    Tensor total;
    float rec = 0.0f;
    float kl = 0.0f;
};

VaeLossParts vae_batch_loss(const Vae& v, const Tensor& x, Rng& rng);

// ---- loops ------------------------------------------------------------------

// Joint run over a model whose rgb branch is already loaded and frozen.
// Writes ckpt/step000000.pbrw before the first step when a run directory is
// set, then periodic checkpoints; the JSONL log carries step, loss_rgb,
// loss_pbr, lr and the frozen-set hash.
TrainStats train_collab(DualBranchModel& m, const std::vector<SampleRecord>& data,
                        const DiffusionRunConfig& dc, const OptimConfig& oc);

// Standalone rgb pretrain (prompt conditioning only, no geometry). Also
// writes <run_dir>/base.pbrw at the end for the joint run to pick up.
TrainStats pretrain_rgb(UNet& net, const std::vector<SampleRecord>& data,
                        const DiffusionRunConfig& dc, const OptimConfig& oc);

// VAE run; on_rgb trains a 3-channel codec on the rendered views, otherwise
// the codec sees full material stacks. Writes <run_dir>/vae.pbrw at the end.
TrainStats train_vae(Vae& v, const std::vector<SampleRecord>& data, bool on_rgb,
                     const OptimConfig& oc);

// ---- reconstruction quality --------------------------------------------------

// Mean PSNR over records, reconstructing through the posterior mean.
double vae_stack_psnr(const Vae& v, const std::vector<SampleRecord>& recs);

// Same stacks pushed through a 3-channel codec triplet by triplet, then
// reassembled before scoring.
double vae_triplet_psnr(const Vae& v, const std::vector<SampleRecord>& recs);

// ---- config plumbing ----------------------------------------------------------

// TOML keys understood by the run structs; tools add their own on top.
std::vector<std::string> core_config_keys();

UNetConfig base_shape_from(const Config& c);
DualConfig dual_config_from(const Config& c);
DiffusionRunConfig diffusion_config_from(const Config& c);
OptimConfig optim_config_from(const Config& c, const std::string& run_dir);
VaeConfig vae_config_from(const Config& c);

// Checkpoint config echoes (JSON trailer), writer + parser pairs. Parsers
// throw FormatError on missing or malformed fields.
std::string rgb_base_config_json(const UNetConfig& shape, const DiffusionRunConfig& dc);
void parse_rgb_base_config(const std::string& js, UNetConfig& shape, DiffusionRunConfig& dc);
std::string collab_config_json(const DualConfig& mc, const DiffusionRunConfig& dc);
void parse_collab_config(const std::string& js, DualConfig& mc, DiffusionRunConfig& dc);
std::string vae_config_json(const VaeConfig& vc);
VaeConfig parse_vae_config(const std::string& js);

} // namespace pbrgen
