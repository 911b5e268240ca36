#include "pbrgen/diffusion.hpp"

#include <cmath>
#include <string>

#include "pbrgen/errors.hpp"

namespace pbrgen {

double DiffusionSchedule::alpha_bar_at(int t) const {
    if (t < 0 || t > T) throw DiffusionError("alpha_bar_at: t=" + std::to_string(t) +
                                             " outside [0," + std::to_string(T) + "]");
    return t == 0 ? 1.0 : alpha_bar[size_t(t - 1)];
}

void DiffusionSchedule::validate() const {
    if (T < 1 || int(alpha.size()) != T || int(alpha_bar.size()) != T)
        throw DiffusionError("schedule: inconsistent sizes");
    double running = 1.0;
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double a = alpha[size_t(t - 1)];
        const double ab = alpha_bar[size_t(t - 1)];
        if (!(a >= 0.0 && a < 1.0))
            throw DiffusionError("schedule: alpha_" + std::to_string(t) + " outside [0,1)");
        running *= a;
        if (std::abs(running - ab) > 1e-12)
            throw DiffusionError("schedule: alpha_bar deviates from the cumulative product at t=" +
                                 std::to_string(t));
        if (!(ab < prev))
            throw DiffusionError("schedule: alpha_bar not strictly decreasing at t=" +
                                 std::to_string(t));
        prev = ab;
    }
    if (zero_terminal && alpha_bar.back() != 0.0)
        throw DiffusionError("schedule: zero-terminal mode requires alpha_bar_T == 0");
    if (zero_terminal && param == Parameterization::epsilon)
        throw DiffusionError("schedule: zero-terminal mode requires the v parameterization");
}

DiffusionSchedule DiffusionSchedule::from_alpha_bar(std::vector<double> ab, Parameterization param) {
    DiffusionSchedule s;
    s.T = int(ab.size());
    s.param = param;
    s.alpha.resize(ab.size());
    double prev = 1.0;
    for (size_t i = 0; i < ab.size(); ++i) {
        s.alpha[i] = ab[i] / prev;
        prev = ab[i];
    }
    // store the cumulative product of the derived alphas so the identity is exact
    s.alpha_bar.resize(ab.size());
    double running = 1.0;
    for (size_t i = 0; i < ab.size(); ++i) {
        running *= s.alpha[i];
        s.alpha_bar[i] = running;
    }
    s.zero_terminal = s.alpha_bar.back() == 0.0;
    s.validate();
    return s;
}

DiffusionSchedule make_schedule(ScheduleKind kind, int T, bool zero_terminal_snr,
                                Parameterization param) {
    if (T < 2) throw DiffusionError("make_schedule: T must be at least 2");
    if (zero_terminal_snr && param == Parameterization::epsilon)
        throw DiffusionError("make_schedule: zero-terminal SNR requires the v parameterization");
    std::vector<double> ab(static_cast<size_t>(T));
    if (kind == ScheduleKind::linear) {
        const double b0 = 1e-4, b1 = 0.02;
        double running = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = b0 + (b1 - b0) * double(t - 1) / double(T - 1);
            running *= 1.0 - beta;
            ab[size_t(t - 1)] = running;
        }
    } else {
        const double s = 0.008;
        auto f = [s](double u) {
            const double v = std::cos((u + s) / (1.0 + s) * 1.5707963267948966);
            return v * v;
        };
        const double f0 = f(0.0);
        double prev_raw = 1.0;
        double running = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double raw = f(double(t) / T) / f0;
            double a = raw / prev_raw; // 1 - beta_t from the raw curve
            prev_raw = raw;
            a = std::min(std::max(a, 0.001), 0.9999); // clip beta to [1e-4-ish, 0.999]
            running *= a;
            ab[size_t(t - 1)] = running;
        }
    }
    if (zero_terminal_snr) {
        // affine rescale of sqrt(alpha_bar): terminal -> exactly 0, first unchanged
        const double s1 = std::sqrt(ab[0]);
        const double sT = std::sqrt(ab[size_t(T - 1)]);
        if (s1 <= sT) throw DiffusionError("make_schedule: cannot rescale to zero terminal");
        for (int t = 1; t <= T; ++t) {
            const double st = std::sqrt(ab[size_t(t - 1)]);
            const double rescaled = (st - sT) * s1 / (s1 - sT);
            ab[size_t(t - 1)] = rescaled * rescaled;
        }
        ab[size_t(T - 1)] = 0.0;
    }
    DiffusionSchedule out = DiffusionSchedule::from_alpha_bar(std::move(ab), param);
    out.zero_terminal = zero_terminal_snr;
    out.validate();
    return out;
}

namespace {

void check_shapes(const std::vector<float>& a, const std::vector<float>& b, const char* op) {
    if (a.size() != b.size()) throw DiffusionError(std::string(op) + ": size mismatch");
}

} // namespace

std::vector<float> q_sample(const std::vector<float>& z0, int t, const std::vector<float>& eps,
                            const DiffusionSchedule& schedule) {
    check_shapes(z0, eps, "q_sample");
    if (t < 1 || t > schedule.T) throw DiffusionError("q_sample: t out of range");
    const double ab = schedule.alpha_bar_at(t);
    const float sa = float(std::sqrt(ab));
    const float sb = float(std::sqrt(1.0 - ab));
    std::vector<float> out(z0.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sa * z0[i] + sb * eps[i];
    return out;
}

std::vector<float> prediction_target(const std::vector<float>& z0, const std::vector<float>& eps,
                                     int t, const DiffusionSchedule& schedule) {
    check_shapes(z0, eps, "prediction_target");
    if (schedule.param == Parameterization::epsilon) return eps;
    const double ab = schedule.alpha_bar_at(t);
    const float sa = float(std::sqrt(ab));
    const float sb = float(std::sqrt(1.0 - ab));
    std::vector<float> out(z0.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sa * eps[i] - sb * z0[i];
    return out;
}

std::vector<float> predict_x0(const std::vector<float>& pred, const std::vector<float>& z_t, int t,
                              const DiffusionSchedule& schedule) {
    check_shapes(pred, z_t, "predict_x0");
    const double ab = schedule.alpha_bar_at(t);
    std::vector<float> out(pred.size());
    if (schedule.param == Parameterization::epsilon) {
        if (ab == 0.0)
            throw DiffusionError("predict_x0: epsilon parameterization undefined at alpha_bar 0");
        const double sa = std::sqrt(ab);
        const double sb = std::sqrt(1.0 - ab);
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = float((z_t[i] - sb * pred[i]) / sa);
    } else {
        const double sa = std::sqrt(ab);
        const double sb = std::sqrt(1.0 - ab);
        for (size_t i = 0; i < out.size(); ++i) out[i] = float(sa * z_t[i] - sb * pred[i]);
    }
    return out;
}

std::vector<float> ddpm_step_from_x0(const std::vector<float>& x0, const std::vector<float>& z_t,
                                     int t, const DiffusionSchedule& schedule, Rng* rng) {
    check_shapes(x0, z_t, "ddpm_step");
    if (t < 1 || t > schedule.T) throw DiffusionError("ddpm_step: t out of range");
    const double ab_t = schedule.alpha_bar_at(t);
    const double ab_prev = schedule.alpha_bar_at(t - 1);
    const double a_t = schedule.alpha[size_t(t - 1)];
    const double beta_t = 1.0 - a_t;
    const double denom = 1.0 - ab_t;
    // posterior q(z_{t-1} | z_t, x0)
    const double c0 = std::sqrt(ab_prev) * beta_t / denom;
    const double ct = std::sqrt(a_t) * (1.0 - ab_prev) / denom;
    const double var = (1.0 - ab_prev) / denom * beta_t;
    const double sigma = t > 1 ? std::sqrt(std::max(var, 0.0)) : 0.0;
    std::vector<float> out(x0.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = c0 * x0[i] + ct * z_t[i];
        if (sigma > 0.0 && rng) v += sigma * rng->normal();
        out[i] = float(v);
    }
    return out;
}

std::vector<float> ddpm_step(const std::vector<float>& pred, const std::vector<float>& z_t, int t,
                             const DiffusionSchedule& schedule, Rng* rng) {
    return ddpm_step_from_x0(predict_x0(pred, z_t, t, schedule), z_t, t, schedule, rng);
}

std::vector<float> convert_parameterization(const std::vector<float>& pred,
                                            const std::vector<float>& z_t, int t,
                                            const DiffusionSchedule& schedule,
                                            Parameterization from, Parameterization to) {
    check_shapes(pred, z_t, "convert_parameterization");
    if (from == to) return pred;
    const double ab = schedule.alpha_bar_at(t);
    if (ab == 0.0)
        throw DiffusionError("convert_parameterization: epsilon is undefined at alpha_bar 0");
    const double sa = std::sqrt(ab);
    const double sb = std::sqrt(1.0 - ab);
    std::vector<float> out(pred.size());
    if (from == Parameterization::epsilon) {
        // v = (eps - sqrt(1-ab) * z) / sqrt(ab)
        for (size_t i = 0; i < out.size(); ++i) out[i] = float((pred[i] - sb * z_t[i]) / sa);
    } else {
        // eps = sqrt(1-ab) * z + sqrt(ab) * v
        for (size_t i = 0; i < out.size(); ++i) out[i] = float(sb * z_t[i] + sa * pred[i]);
    }
    return out;
}

} // namespace pbrgen
