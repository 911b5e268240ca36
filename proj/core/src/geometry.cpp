#include "pbrgen/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "pbrgen/errors.hpp"

namespace pbrgen {

void Surface::validate() const {
    switch (kind) {
        case SurfaceKind::sphere:
            if (radius <= 0) throw GeometryError("sphere: radius must be positive");
            break;
        case SurfaceKind::box:
            if (half.x <= 0 || half.y <= 0 || half.z <= 0)
                throw GeometryError("box: half extents must be positive");
            break;
        case SurfaceKind::superquadric:
            if (sq_scale.x <= 0 || sq_scale.y <= 0 || sq_scale.z <= 0)
                throw GeometryError("superquadric: scale must be positive");
            if (e1 <= 0 || e2 <= 0) throw GeometryError("superquadric: exponents must be positive");
            break;
        case SurfaceKind::capsule:
            if (radius <= 0 || half_len < 0) throw GeometryError("capsule: bad radius/length");
            break;
    }
    if (std::abs(rot.det() - 1.0) > 1e-9) throw GeometryError("pose rotation must have det +1");
}

double Surface::bounding_radius() const {
    switch (kind) {
        case SurfaceKind::sphere: return radius;
        case SurfaceKind::box: return norm(half);
        case SurfaceKind::superquadric:
            return 2.0 * std::max({sq_scale.x, sq_scale.y, sq_scale.z});
        case SurfaceKind::capsule: return half_len + radius;
    }
    return 1.0;
}

Camera Camera::make(const Vec3& position, const Vec3& target, const Vec3& up_hint, double fov_y,
                    int width, int height) {
    if (!(fov_y > 0.0 && fov_y < 3.141592653589793))
        throw GeometryError("camera: fov must be in (0, pi)");
    if (width < 8 || height < 8) throw GeometryError("camera: resolution must be at least 8x8");
    Camera c;
    c.position = position;
    c.target = target;
    c.up_hint = up_hint;
    c.fov_y = fov_y;
    c.width = width;
    c.height = height;
    const Vec3 f = target - position;
    if (norm(f) < 1e-12) throw GeometryError("camera: position equals target");
    c.forward = normalized(f);
    const Vec3 r = cross(c.forward, up_hint);
    if (norm(r) < 1e-9) throw GeometryError("camera: up parallel to view direction");
    c.right = normalized(r);
    c.up = cross(c.right, c.forward);
    return c;
}

Vec3 Camera::ray_dir(int x, int y) const {
    const double tan_half = std::tan(fov_y * 0.5);
    const double aspect = double(width) / double(height);
    const double sx = (2.0 * (x + 0.5) / width - 1.0) * tan_half * aspect;
    const double sy = (1.0 - 2.0 * (y + 0.5) / height) * tan_half;
    return normalized(forward + right * sx + up * sy);
}

TangentResult radial_z_tangent(const Vec3& p, const Vec3& n) {
    if (norm(n) < 1e-12) throw GeometryError("radial_z_tangent: zero normal");
    if (std::abs(norm(n) - 1.0) > 1e-6) throw GeometryError("radial_z_tangent: normal not unit");
    TangentResult out;
    const Vec3 radial{-p.y, p.x, 0.0};
    Vec3 t = cross(n, cross(radial, n));
    if (norm(t) < 1e-8) {
        out.degenerate = true;
        t = cross(n, cross(Vec3{1, 0, 0}, n));
        if (norm(t) < 1e-8) t = cross(n, cross(Vec3{0, 1, 0}, n));
    }
    t = normalized(t);
    out.frame = {t, cross(n, t), n};
    return out;
}

namespace {

struct LocalHit {
    bool hit = false;
    double t = 0.0;
    Vec3 n; // object space
};

LocalHit hit_sphere(double r, const Vec3& o, const Vec3& d) {
    const double b = dot(o, d);
    const double c = dot(o, o) - r * r;
    const double disc = b * b - c;
    if (disc < 0) return {};
    const double s = std::sqrt(disc);
    double t = -b - s;
    if (t < 1e-9) t = -b + s;
    if (t < 1e-9) return {};
    const Vec3 p = o + d * t;
    return {true, t, p / r};
}

LocalHit hit_box(const Vec3& h, const Vec3& o, const Vec3& d) {
    double t0 = -1e30, t1 = 1e30;
    for (int i = 0; i < 3; ++i) {
        const double oi = i == 0 ? o.x : (i == 1 ? o.y : o.z);
        const double di = i == 0 ? d.x : (i == 1 ? d.y : d.z);
        const double hi = i == 0 ? h.x : (i == 1 ? h.y : h.z);
        if (std::abs(di) < 1e-12) {
            if (std::abs(oi) > hi) return {};
            continue;
        }
        double ta = (-hi - oi) / di;
        double tb = (hi - oi) / di;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t1 < 1e-9) return {};
    const double t = t0 > 1e-9 ? t0 : t1;
    const Vec3 p = o + d * t;
    // face with the largest relative coordinate
    const double rx = std::abs(p.x) / h.x, ry = std::abs(p.y) / h.y, rz = std::abs(p.z) / h.z;
    Vec3 n{0, 0, 0};
    if (rx >= ry && rx >= rz)
        n.x = p.x > 0 ? 1.0 : -1.0;
    else if (ry >= rz)
        n.y = p.y > 0 ? 1.0 : -1.0;
    else
        n.z = p.z > 0 ? 1.0 : -1.0;
    return {true, t, n};
}

LocalHit hit_capsule(double r, double hl, const Vec3& o, const Vec3& d) {
    // infinite cylinder about z, then cap spheres
    double best = 1e30;
    bool found = false;
    const double a = d.x * d.x + d.y * d.y;
    if (a > 1e-14) {
        const double b = o.x * d.x + o.y * d.y;
        const double c = o.x * o.x + o.y * o.y - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0) {
            const double s = std::sqrt(disc);
            for (double t : {(-b - s) / a, (-b + s) / a}) {
                if (t < 1e-9 || t >= best) continue;
                const double z = o.z + d.z * t;
                if (std::abs(z) <= hl) {
                    best = t;
                    found = true;
                }
            }
        }
    }
    for (double cz : {-hl, hl}) {
        const Vec3 oc = o - Vec3{0, 0, cz};
        const double b = dot(oc, d);
        const double c = dot(oc, oc) - r * r;
        const double disc = b * b - c;
        if (disc < 0) continue;
        const double s = std::sqrt(disc);
        for (double t : {-b - s, -b + s}) {
            if (t < 1e-9 || t >= best) continue;
            const double z = o.z + d.z * t;
            if ((cz < 0 && z <= -hl) || (cz > 0 && z >= hl)) {
                best = t;
                found = true;
            }
        }
    }
    if (!found) return {};
    const Vec3 p = o + d * best;
    const double cz = std::clamp(p.z, -hl, hl);
    const Vec3 axis_pt{0, 0, cz};
    return {true, best, normalized(p - axis_pt)};
}

double sq_implicit(const Surface& s, const Vec3& q) {
    const double x = std::abs(q.x / s.sq_scale.x);
    const double y = std::abs(q.y / s.sq_scale.y);
    const double z = std::abs(q.z / s.sq_scale.z);
    const double xy = std::pow(std::pow(x, 2.0 / s.e2) + std::pow(y, 2.0 / s.e2), s.e2 / s.e1);
    return xy + std::pow(z, 2.0 / s.e1) - 1.0;
}

LocalHit hit_superquadric(const Surface& s, const Vec3& o, const Vec3& d) {
    // March inside the bounding sphere; bisect the first sign change.
    const double R = s.bounding_radius();
    const double b = dot(o, d);
    const double c = dot(o, o) - R * R;
    const double disc = b * b - c;
    if (disc < 0) return {};
    const double sq = std::sqrt(disc);
    double t0 = std::max(-b - sq, 1e-9);
    double t1 = -b + sq;
    if (t1 <= t0) return {};
    const int steps = 192;
    const double dt = (t1 - t0) / steps;
    double prev_t = t0;
    double prev_f = sq_implicit(s, o + d * prev_t);
    if (prev_f < 0) return {}; // started inside; treat as miss
    for (int i = 1; i <= steps; ++i) {
        const double t = t0 + dt * i;
        const double f = sq_implicit(s, o + d * t);
        if (f < 0) {
            double lo = prev_t, hi = t;
            for (int k = 0; k < 64; ++k) {
                const double mid = 0.5 * (lo + hi);
                if (sq_implicit(s, o + d * mid) < 0)
                    hi = mid;
                else
                    lo = mid;
            }
            const double th = 0.5 * (lo + hi);
            const Vec3 p = o + d * th;
            const double h = 1e-6;
            Vec3 g{(sq_implicit(s, p + Vec3{h, 0, 0}) - sq_implicit(s, p - Vec3{h, 0, 0})),
                   (sq_implicit(s, p + Vec3{0, h, 0}) - sq_implicit(s, p - Vec3{0, h, 0})),
                   (sq_implicit(s, p + Vec3{0, 0, h}) - sq_implicit(s, p - Vec3{0, 0, h}))};
            if (norm(g) < 1e-15) g = p;
            return {true, th, normalized(g)};
        }
        prev_t = t;
        prev_f = f;
    }
    return {};
}

} // namespace

RayHit intersect(const Surface& surface, const Vec3& origin, const Vec3& dir) {
    const Mat3 rt = surface.rot.transposed();
    const Vec3 o = rt * (origin - surface.translate);
    const Vec3 d = rt * dir;
    LocalHit lh;
    switch (surface.kind) {
        case SurfaceKind::sphere: lh = hit_sphere(surface.radius, o, d); break;
        case SurfaceKind::box: lh = hit_box(surface.half, o, d); break;
        case SurfaceKind::superquadric: lh = hit_superquadric(surface, o, d); break;
        case SurfaceKind::capsule: lh = hit_capsule(surface.radius, surface.half_len, o, d); break;
    }
    if (!lh.hit) return {};
    RayHit out;
    out.hit = true;
    out.p = origin + dir * lh.t;
    out.n = normalized(surface.rot * lh.n);
    return out;
}

GBuffer raycast(const Surface& surface, const Camera& camera) {
    surface.validate();
    GBuffer g{Image(3, camera.height, camera.width), Image(3, camera.height, camera.width),
              Image(1, camera.height, camera.width)};
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            const RayHit h = intersect(surface, camera.position, camera.ray_dir(x, y));
            if (!h.hit) continue;
            g.mask.at(0, y, x) = 1.0f;
            for (int i = 0; i < 3; ++i) {
                g.position.at(i, y, x) = float(h.p[i]);
                g.normal.at(i, y, x) = float(h.n[i]);
            }
        }
    return g;
}

NormalRender render_screen_normals(const Surface& surface, const Camera& camera) {
    const GBuffer g = raycast(surface, camera);
    NormalRender out{Image(3, camera.height, camera.width), g.mask};
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            if (g.mask.at(0, y, x) == 0.0f) continue;
            const Vec3 n{g.normal.at(0, y, x), g.normal.at(1, y, x), g.normal.at(2, y, x)};
            const Vec3 v = camera.to_view(n);
            out.normals.at(0, y, x) = float(v.x);
            out.normals.at(1, y, x) = float(v.y);
            out.normals.at(2, y, x) = float(v.z);
        }
    return out;
}

FrameRender frame_image(const Surface& surface, const Camera& camera) {
    const GBuffer g = raycast(surface, camera);
    FrameRender out{Image(9, camera.height, camera.width), Image(1, camera.height, camera.width),
                    g.mask};
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            if (g.mask.at(0, y, x) == 0.0f) continue;
            const Vec3 p{g.position.at(0, y, x), g.position.at(1, y, x), g.position.at(2, y, x)};
            Vec3 n{g.normal.at(0, y, x), g.normal.at(1, y, x), g.normal.at(2, y, x)};
            n = normalized(n); // float storage costs ~1e-8 of unit length
            const TangentResult tr = radial_z_tangent(p, n);
            const Vec3 rows[3] = {tr.frame.t, tr.frame.b, tr.frame.n};
            for (int r = 0; r < 3; ++r)
                for (int i = 0; i < 3; ++i) out.tbn.at(r * 3 + i, y, x) = float(rows[r][i]);
            out.degenerate.at(0, y, x) = tr.degenerate ? 1.0f : 0.0f;
        }
    return out;
}

Image frames_to_view(const Image& tbn, const Camera& camera) {
    if (tbn.channels != 9) throw GeometryError("frames_to_view: want 9 channels");
    Image out(9, tbn.height, tbn.width);
    for (int y = 0; y < tbn.height; ++y)
        for (int x = 0; x < tbn.width; ++x)
            for (int r = 0; r < 3; ++r) {
                const Vec3 v{tbn.at(r * 3 + 0, y, x), tbn.at(r * 3 + 1, y, x),
                             tbn.at(r * 3 + 2, y, x)};
                const Vec3 w = camera.to_view(v);
                out.at(r * 3 + 0, y, x) = float(w.x);
                out.at(r * 3 + 1, y, x) = float(w.y);
                out.at(r * 3 + 2, y, x) = float(w.z);
            }
    return out;
}

} // namespace pbrgen
