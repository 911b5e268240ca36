#pragma once

// Shared helpers for the test suites. The oracles here are written from the
// formulas directly and share no code with the library; they exist so tests
// fail when the library drifts, not when the oracle does.

#include <pbrgen/rng.hpp>
#include <pbrgen/tensor.hpp>
#include <pbrgen/vec3.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace tsup {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        auto now = std::chrono::steady_clock::now().time_since_epoch().count();
        pbrgen::Rng r(pbrgen::fnv1a64(tag.data(), tag.size()) ^ uint64_t(now));
        for (int attempt = 0; attempt < 64; ++attempt) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "-%016llx",
                          static_cast<unsigned long long>(r.next_u64()));
            auto cand = std::filesystem::temp_directory_path() / ("pbrgen-" + tag + buf);
            std::error_code ec;
            if (std::filesystem::create_directories(cand, ec) && !ec) {
                path = cand;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <class S>
void randomize(std::vector<pbrgen::TensorT<S>>& params, pbrgen::Rng& rng, double stddev = 0.05) {
    for (auto& p : params)
        for (auto& v : p.data()) v = S(rng.normal() * stddev);
}

template <class S>
bool bitwise_equal(const pbrgen::TensorT<S>& a, const pbrgen::TensorT<S>& b) {
    const auto& da = a.data();
    const auto& db = b.data();
    if (da.size() != db.size()) return false;
    return da.empty() || std::memcmp(da.data(), db.data(), da.size() * sizeof(S)) == 0;
}

inline bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Reduces an arbitrary-shaped op output to a scalar with fixed random weights,
// then runs the library gradient checker over fresh random leaf values.
// Returns the worst relative error over `instances` random instances.
template <class Build>
double check_op_grad(Build build, std::vector<pbrgen::TensorT<double>> leaves, pbrgen::Rng& rng,
                     int instances = 10) {
    using pbrgen::TensorT;
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        for (auto& l : leaves)
            for (auto& v : l.data()) v = rng.normal() * 0.5;
        TensorT<double> probe = build(leaves);
        TensorT<double> w = TensorT<double>::zeros(probe.shape());
        for (auto& v : w.data()) v = rng.normal();
        auto fn = [&]() -> TensorT<double> {
            TensorT<double> out = build(leaves);
            if (out.numel() == 1) return out;
            return pbrgen::sum_all(pbrgen::mul(out, w));
        };
        worst = std::max(worst, pbrgen::grad_check<double>(fn, leaves, 1e-5));
    }
    return worst;
}

namespace oracle {

using pbrgen::Vec3;

struct Frame {
    Vec3 t, b, n;
    bool degenerate = false;
};

// Tangent frame via the projection identity t = r - n*dot(n,r) with
// r = (-p.y, p.x, 0); algebraically equal to n x (r x n) but computed by a
// different route than the library.
inline Frame radial_frame(const Vec3& p, const Vec3& n) {
    Frame f;
    f.n = n;
    auto project = [&](const Vec3& r) {
        const double d = pbrgen::dot(n, r);
        return Vec3{r.x - n.x * d, r.y - n.y * d, r.z - n.z * d};
    };
    Vec3 t = project(Vec3{-p.y, p.x, 0.0});
    if (pbrgen::norm(t) < 1e-8) {
        f.degenerate = true;
        t = project(Vec3{1.0, 0.0, 0.0});
        if (pbrgen::norm(t) < 1e-8) t = project(Vec3{0.0, 1.0, 0.0});
    }
    f.t = pbrgen::normalized(t);
    f.b = pbrgen::cross(f.n, f.t);
    return f;
}

// Cook-Torrance single-scatter evaluation, transcribed term by term.
inline Vec3 brdf(const Vec3& albedo, double roughness, double metallic, const Vec3& n,
                 const Vec3& v, const Vec3& l) {
    const double nv = pbrgen::dot(n, v);
    const double nl = pbrgen::dot(n, l);
    if (nv <= 0.0 || nl <= 0.0) return {0.0, 0.0, 0.0};
    const Vec3 h = pbrgen::normalized(v + l);
    const double nh = std::max(0.0, pbrgen::dot(n, h));
    const double vh = std::max(0.0, pbrgen::dot(v, h));
    const double alpha = roughness * roughness;
    const double a2 = alpha * alpha;
    const double dd = nh * nh * (a2 - 1.0) + 1.0;
    const double D = a2 / (M_PI * dd * dd);
    const double gl = nv * std::sqrt(a2 + (1.0 - a2) * nl * nl);
    const double gv = nl * std::sqrt(a2 + (1.0 - a2) * nv * nv);
    const double G = 2.0 * nl * nv / std::max(gl + gv, 1e-12);
    const double fw = std::pow(1.0 - vh, 5.0);
    const double denom = std::max(4.0 * nv * nl, 1e-4);
    Vec3 out;
    double* oc = &out.x;
    const double* ac = &albedo.x;
    for (int c = 0; c < 3; ++c) {
        const double f0 = 0.04 + (ac[c] - 0.04) * metallic;
        const double F = f0 + (1.0 - f0) * fw;
        oc[c] = (1.0 - metallic) / M_PI * ac[c] + D * G / denom * F;
    }
    return out;
}

struct PixelLight {
    Vec3 dir;
    Vec3 intensity;
};

// One shaded pixel: ambient plus per-light cosine-weighted BRDF, clamped.
inline Vec3 shade_pixel(const Vec3& albedo, double roughness, double metallic, const Vec3& bump,
                        const Frame& frame, const std::vector<PixelLight>& lights,
                        const Vec3& ambient) {
    const Vec3 ns = pbrgen::normalized(frame.t * bump.x + frame.b * bump.y + frame.n * bump.z);
    const Vec3 view{0.0, 0.0, 1.0};
    Vec3 c{ambient.x * albedo.x, ambient.y * albedo.y, ambient.z * albedo.z};
    for (const auto& lt : lights) {
        const double cosine = std::max(0.0, pbrgen::dot(ns, lt.dir));
        if (cosine <= 0.0) continue;
        const Vec3 f = brdf(albedo, roughness, metallic, ns, view, lt.dir);
        c.x += f.x * lt.intensity.x * cosine;
        c.y += f.y * lt.intensity.y * cosine;
        c.z += f.z * lt.intensity.z * cosine;
    }
    c.x = std::clamp(c.x, 0.0, 1.0);
    c.y = std::clamp(c.y, 0.0, 1.0);
    c.z = std::clamp(c.z, 0.0, 1.0);
    return c;
}

// One ancestral denoising step on a flat vector. Coefficients recomputed from
// alpha/alpha_bar directly; noise is drawn per element, only for t > 1.
inline std::vector<double> ddpm_step(const std::vector<double>& x0, const std::vector<double>& zt,
                                     int t, const std::vector<double>& alpha,
                                     const std::vector<double>& alpha_bar, pbrgen::Rng* rng) {
    const double at = alpha[size_t(t) - 1];
    const double ab_t = alpha_bar[size_t(t) - 1];
    const double ab_prev = t > 1 ? alpha_bar[size_t(t) - 2] : 1.0;
    const double beta = 1.0 - at;
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
    const double ct = std::sqrt(at) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double var = (1.0 - ab_prev) / (1.0 - ab_t) * beta;
    const double sigma = t > 1 ? std::sqrt(std::max(var, 0.0)) : 0.0;
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) {
        double v = c0 * x0[i] + ct * zt[i];
        if (sigma > 0.0 && rng) v += sigma * rng->normal();
        out[i] = v;
    }
    return out;
}

} // namespace oracle
} // namespace tsup
