#pragma once

#include <optional>

#include "pbrgen/image.hpp"
#include "pbrgen/vec3.hpp"

namespace pbrgen {

enum class SurfaceKind { sphere, box, superquadric, capsule };

// Analytic surface with a rigid pose. Ray casting replaces mesh
// rasterization; normals come from the implicit form, so they are exact.
struct Surface {
    SurfaceKind kind = SurfaceKind::sphere;
    double radius = 1.0;              // sphere, capsule
    Vec3 half = {0.7, 0.7, 0.7};      // box half extents
    Vec3 sq_scale = {0.8, 0.8, 0.8};  // superquadric scale
    double e1 = 1.0, e2 = 1.0;        // superquadric exponents
    double half_len = 0.5;            // capsule half length (z axis)
    Mat3 rot = Mat3::identity();      // object-to-world rotation
    Vec3 translate = {0, 0, 0};

    void validate() const; // throws GeometryError
    double bounding_radius() const;
};

struct Camera {
    Vec3 position;
    Vec3 target;
    Vec3 up_hint;
    double fov_y = 0.87; // vertical, radians
    int width = 32, height = 32;
    // derived right-handed basis
    Vec3 right, up, forward;

    static Camera make(const Vec3& position, const Vec3& target, const Vec3& up_hint, double fov_y,
                       int width, int height);

    // World direction through a pixel center.
    Vec3 ray_dir(int x, int y) const;
    // World vector to view space; +z points toward the camera.
    Vec3 to_view(const Vec3& v) const { return {dot(right, v), dot(up, v), -dot(forward, v)}; }
};

// Rows of the tangent-space matrix (t, b, n)^T.
struct GeometryFrame {
    Vec3 t, b, n;
};

struct TangentResult {
    GeometryFrame frame;
    bool degenerate = false; // fallback construction was used
};

// Tangent frame from the radial direction about the z axis:
// t = n x ([-p_y, p_x, 0]^T x n), b = n x t, both normalized.
// Degenerate when p lies on the z axis or the radial vector is parallel
// to n; falls back to t = normalize(n x (e_x x n)), e_y if n is parallel
// to e_x, and flags the result.
TangentResult radial_z_tangent(const Vec3& p, const Vec3& n);

struct RayHit {
    bool hit = false;
    Vec3 p, n; // world space
};

RayHit intersect(const Surface& surface, const Vec3& origin, const Vec3& dir);

// World-space hit buffers: position (3), normal (3), mask (1).
struct GBuffer {
    Image position;
    Image normal;
    Image mask;
};

GBuffer raycast(const Surface& surface, const Camera& camera);

// View-space unit normals where mask=1, (0,0,0) elsewhere; mask in {0,1}.
struct NormalRender {
    Image normals; // 3ch
    Image mask;    // 1ch
};

NormalRender render_screen_normals(const Surface& surface, const Camera& camera);

// Per-pixel radial-z frames at the hit points, world space.
// tbn packs rows as 9 channels [t, b, n]; degenerate flags the fallback.
struct FrameRender {
    Image tbn;        // 9ch
    Image degenerate; // 1ch, {0,1}
    Image mask;       // 1ch
};

FrameRender frame_image(const Surface& surface, const Camera& camera);

// Rotate a 9-channel frame image into the camera basis.
Image frames_to_view(const Image& tbn, const Camera& camera);

} // namespace pbrgen
