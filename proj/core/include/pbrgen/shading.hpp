#pragma once

#include <vector>

#include "pbrgen/geometry.hpp"
#include "pbrgen/image.hpp"
#include "pbrgen/vec3.hpp"

namespace pbrgen {

// Material stack. Channel layout when flattened: albedo(3), roughness(1),
// metallic(1), bump(3). Bump vectors live in the geometry tangent frame,
// unit length with z > 0, components encoded in [-1, 1].
struct PbrStack {
    Image albedo;    // 3ch, [0,1]
    Image roughness; // 1ch, [0,1]
    Image metallic;  // 1ch, [0,1]
    Image bump;      // 3ch, [-1,1]

    PbrStack() = default;
    PbrStack(int h, int w)
        : albedo(3, h, w), roughness(1, h, w), metallic(1, h, w), bump(3, h, w) {}

    int height() const { return albedo.height; }
    int width() const { return albedo.width; }

    Image to_channels() const;                    // 8ch
    static PbrStack from_channels(const Image&);  // throws on channel count

    // Range and unit-bump checks on foreground pixels; throws ShadingError.
    void validate(const Image& mask) const;
};

struct DirectionalLight {
    Vec3 dir = {0, 0, 1}; // camera space, from surface toward the light
    Vec3 intensity = {1, 1, 1};
};

struct LightRig {
    std::vector<DirectionalLight> lights;
    Vec3 ambient = {0.06, 0.06, 0.06};

    // One key light along the camera axis plus low ambient.
    static LightRig camera_colocated();
    void validate() const;
};

// Shading normal from a tangent-space bump vector:
// normalize(t*b_x + b*b_y + n*b_z). Throws on a near-zero or
// backward-facing result (anti-parallel bump).
Vec3 apply_bump(const GeometryFrame& frame, const Vec3& b);

// Cook-Torrance with Disney basecolor-metallic parametrization.
// Returns reflectance before the light intensity and cosine factor.
// n, v, l unit; v is toward the viewer, l toward the light.
Vec3 brdf_eval(const Vec3& albedo, double roughness, double metallic, const Vec3& n, const Vec3& v,
               const Vec3& l);

// Render a stack under the rig. `frames` must be the 9-channel tangent-frame
// image expressed in the same space as the rig's light directions (camera
// space); the viewer direction is the camera axis. Output is linear light,
// clamped to [0,1], exactly zero where mask=0.
Image render(const PbrStack& stack, const Image& frames, const Image& mask, const LightRig& rig);

} // namespace pbrgen
