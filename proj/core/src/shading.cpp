#include "pbrgen/shading.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pbrgen/errors.hpp"

namespace pbrgen {

Image PbrStack::to_channels() const {
    Image out(8, height(), width());
    const Image* parts[4] = {&albedo, &roughness, &metallic, &bump};
    int c = 0;
    for (const Image* part : parts)
        for (int pc = 0; pc < part->channels; ++pc, ++c)
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x) out.at(c, y, x) = part->at(pc, y, x);
    return out;
}

PbrStack PbrStack::from_channels(const Image& img) {
    if (img.channels != 8) throw ShadingError("PbrStack: want 8 channels, got " +
                                              std::to_string(img.channels));
    PbrStack s(img.height, img.width);
    s.albedo = slice_channels(img, 0, 3);
    s.roughness = slice_channels(img, 3, 4);
    s.metallic = slice_channels(img, 4, 5);
    s.bump = slice_channels(img, 5, 8);
    return s;
}

void PbrStack::validate(const Image& mask) const {
    if (mask.height != height() || mask.width != width() || mask.channels != 1)
        throw ShadingError("PbrStack: mask resolution mismatch");
    for (int y = 0; y < height(); ++y)
        for (int x = 0; x < width(); ++x) {
            if (mask.at(0, y, x) == 0.0f) continue;
            for (int c = 0; c < 3; ++c) {
                const float a = albedo.at(c, y, x);
                if (a < 0.0f || a > 1.0f) throw ShadingError("PbrStack: albedo out of [0,1]");
            }
            const float r = roughness.at(0, y, x);
            if (r < 0.0f || r > 1.0f) throw ShadingError("PbrStack: roughness out of [0,1]");
            const float m = metallic.at(0, y, x);
            if (m < 0.0f || m > 1.0f) throw ShadingError("PbrStack: metallic out of [0,1]");
            const double bx = bump.at(0, y, x), by = bump.at(1, y, x), bz = bump.at(2, y, x);
            const double len = std::sqrt(bx * bx + by * by + bz * bz);
            if (std::abs(len - 1.0) > 1e-3)
                throw ShadingError("PbrStack: bump not unit length at (" + std::to_string(x) +
                                   "," + std::to_string(y) + ")");
            if (bz <= 0.0) throw ShadingError("PbrStack: bump z must be positive");
        }
}

LightRig LightRig::camera_colocated() {
    LightRig rig;
    rig.lights.push_back({{0, 0, 1}, {1, 1, 1}});
    rig.ambient = {0.06, 0.06, 0.06};
    return rig;
}

void LightRig::validate() const {
    for (const auto& l : lights) {
        if (std::abs(norm(l.dir) - 1.0) > 1e-6)
            throw ShadingError("LightRig: light direction not unit");
        if (l.intensity.x < 0 || l.intensity.y < 0 || l.intensity.z < 0)
            throw ShadingError("LightRig: negative intensity");
    }
    if (ambient.x < 0 || ambient.y < 0 || ambient.z < 0)
        throw ShadingError("LightRig: negative ambient");
}

Vec3 apply_bump(const GeometryFrame& frame, const Vec3& b) {
    const Vec3 n = frame.t * b.x + frame.b * b.y + frame.n * b.z;
    const double len = norm(n);
    if (len < 1e-8) throw ShadingError("apply_bump: zero shading normal");
    const Vec3 unit = n / len;
    if (dot(unit, frame.n) <= 0.0)
        throw ShadingError("apply_bump: shading normal points away from the surface");
    return unit;
}

Vec3 brdf_eval(const Vec3& albedo, double roughness, double metallic, const Vec3& n, const Vec3& v,
               const Vec3& l) {
    const double nv = dot(n, v);
    const double nl = dot(n, l);
    if (nv <= 0.0 || nl <= 0.0) return {0, 0, 0};
    const Vec3 h = normalized(v + l);
    const double nh = std::max(0.0, dot(n, h));
    const double vh = std::max(0.0, dot(v, h));

    const double alpha = roughness * roughness;
    const double a2 = alpha * alpha;

    const double dd = nh * nh * (a2 - 1.0) + 1.0;
    const double D = a2 / (3.141592653589793 * dd * dd);

    // height-correlated Smith for GGX
    const double gl = nv * std::sqrt(a2 + (1.0 - a2) * nl * nl);
    const double gv = nl * std::sqrt(a2 + (1.0 - a2) * nv * nv);
    const double G = (2.0 * nl * nv) / std::max(gl + gv, 1e-12);

    const Vec3 f0{0.04 + (albedo.x - 0.04) * metallic, 0.04 + (albedo.y - 0.04) * metallic,
                  0.04 + (albedo.z - 0.04) * metallic};
    const double fw = std::pow(1.0 - vh, 5.0);
    const Vec3 F{f0.x + (1.0 - f0.x) * fw, f0.y + (1.0 - f0.y) * fw, f0.z + (1.0 - f0.z) * fw};

    const double denom = std::max(4.0 * nv * nl, 1e-4);
    const double spec_scale = D * G / denom;
    const double kd = (1.0 - metallic) / 3.141592653589793;
    return {kd * albedo.x + spec_scale * F.x, kd * albedo.y + spec_scale * F.y,
            kd * albedo.z + spec_scale * F.z};
}

Image render(const PbrStack& stack, const Image& frames, const Image& mask, const LightRig& rig) {
    const int h = stack.height(), w = stack.width();
    if (frames.channels != 9 || frames.height != h || frames.width != w ||
        mask.channels != 1 || mask.height != h || mask.width != w)
        throw ShadingError("render: resolution mismatch");
    rig.validate();
    const Vec3 view{0, 0, 1};
    Image out(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(0, y, x) == 0.0f) continue;
            GeometryFrame fr;
            fr.t = {frames.at(0, y, x), frames.at(1, y, x), frames.at(2, y, x)};
            fr.b = {frames.at(3, y, x), frames.at(4, y, x), frames.at(5, y, x)};
            fr.n = {frames.at(6, y, x), frames.at(7, y, x), frames.at(8, y, x)};
            const Vec3 bump{stack.bump.at(0, y, x), stack.bump.at(1, y, x),
                            stack.bump.at(2, y, x)};
            const Vec3 ns = apply_bump(fr, bump);
            const Vec3 alb{stack.albedo.at(0, y, x), stack.albedo.at(1, y, x),
                           stack.albedo.at(2, y, x)};
            const double rough = stack.roughness.at(0, y, x);
            const double metal = stack.metallic.at(0, y, x);
            Vec3 c{rig.ambient.x * alb.x, rig.ambient.y * alb.y, rig.ambient.z * alb.z};
            for (const auto& light : rig.lights) {
                const double cosine = std::max(0.0, dot(ns, light.dir));
                if (cosine == 0.0) continue;
                const Vec3 f = brdf_eval(alb, rough, metal, ns, view, light.dir);
                c.x += f.x * light.intensity.x * cosine;
                c.y += f.y * light.intensity.y * cosine;
                c.z += f.z * light.intensity.z * cosine;
            }
            out.at(0, y, x) = float(std::clamp(c.x, 0.0, 1.0));
            out.at(1, y, x) = float(std::clamp(c.y, 0.0, 1.0));
            out.at(2, y, x) = float(std::clamp(c.z, 0.0, 1.0));
        }
    return out;
}

} // namespace pbrgen
