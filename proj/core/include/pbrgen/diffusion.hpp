#pragma once

#include <vector>

#include "pbrgen/rng.hpp"

namespace pbrgen {

enum class ScheduleKind { linear, cosine };
enum class Parameterization { epsilon, v };

// Noise schedule over T steps. Vectors are indexed by t-1 (t in [1, T]);
// alpha_bar_at(0) == 1 by convention.
struct DiffusionSchedule {
    int T = 0;
    bool zero_terminal = false;
    Parameterization param = Parameterization::epsilon;
    std::vector<double> alpha;     // per-step alpha_t
    std::vector<double> alpha_bar; // cumulative product

    double alpha_bar_at(int t) const; // t in [0, T]
    void validate() const;            // invariants; throws DiffusionError

    // Construct directly from a validated alpha_bar sequence (any T >= 1).
    static DiffusionSchedule from_alpha_bar(std::vector<double> alpha_bar, Parameterization param);
};

// kind linear: beta linearly spaced 1e-4..0.02. kind cosine: squared-cosine
// alpha_bar with the usual 0.008 offset. zero_terminal rescales sqrt(alpha_bar)
// affinely so alpha_bar_T = 0 exactly with alpha_bar_1 unchanged; this forces
// the v parameterization (epsilon is ill-posed at alpha_bar = 0).
DiffusionSchedule make_schedule(ScheduleKind kind, int T, bool zero_terminal_snr,
                                Parameterization param);

// Default parameterization for a schedule mode.
inline Parameterization default_parameterization(bool zero_terminal_snr) {
    return zero_terminal_snr ? Parameterization::v : Parameterization::epsilon;
}

// sqrt(ab)*z0 + sqrt(1-ab)*eps, elementwise.
std::vector<float> q_sample(const std::vector<float>& z0, int t, const std::vector<float>& eps,
                            const DiffusionSchedule& schedule);

// Target the network should predict for (z0, eps) at step t.
std::vector<float> prediction_target(const std::vector<float>& z0, const std::vector<float>& eps,
                                     int t, const DiffusionSchedule& schedule);

// Recover the x0 estimate from a prediction in the schedule's parameterization.
std::vector<float> predict_x0(const std::vector<float>& pred, const std::vector<float>& z_t, int t,
                              const DiffusionSchedule& schedule);

// One ancestral step from the model prediction. rng == nullptr suppresses the
// posterior noise (deterministic mode); the t=1 step never adds noise.
std::vector<float> ddpm_step(const std::vector<float>& pred, const std::vector<float>& z_t, int t,
                             const DiffusionSchedule& schedule, Rng* rng);

// Same step from an explicit x0 estimate (used by the mask-projection sampler).
std::vector<float> ddpm_step_from_x0(const std::vector<float>& x0, const std::vector<float>& z_t,
                                     int t, const DiffusionSchedule& schedule, Rng* rng);

// Algebraic change of prediction parameterization at step t.
// Round trips are identity within float rounding. Requesting epsilon at
// alpha_bar 0 throws (x0 is unrecoverable there).
std::vector<float> convert_parameterization(const std::vector<float>& pred,
                                            const std::vector<float>& z_t, int t,
                                            const DiffusionSchedule& schedule,
                                            Parameterization from, Parameterization to);

} // namespace pbrgen
