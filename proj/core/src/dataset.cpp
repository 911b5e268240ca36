#include "pbrgen/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "pbrgen/errors.hpp"
#include "pbrgen/rng.hpp"

namespace pbrgen {

namespace {

using nlohmann::json;

constexpr double kTau = 6.283185307179586;
constexpr double kRingRadius = 2.6;
constexpr double kRingHeight = 0.9;
constexpr double kRingFov = 0.95;

// cos/sin of k/n turns, exact at quarter turns. Opposing views then get
// exactly sign-flipped camera positions, which keeps symmetric renders
// value-identical (IEEE ops commute with sign flips).
void turn_dir(int k, int n, double& c, double& s) {
    const int64_t num = int64_t(4) * k;
    const int q = int(num / n) & 3;
    const double r = num % n == 0 ? 0.0 : double(k) / n - 0.25 * double(num / n);
    const double c0 = r == 0.0 ? 1.0 : std::cos(kTau * r);
    const double s0 = r == 0.0 ? 0.0 : std::sin(kTau * r);
    switch (q) {
        case 0: c = c0; s = s0; break;
        case 1: c = -s0; s = c0; break;
        case 2: c = -c0; s = -s0; break;
        default: c = s0; s = -c0; break;
    }
}

double lattice(uint64_t seed, int64_t ix, int64_t iy, int64_t iz) {
    uint64_t h = seed;
    h = mix64(h ^ (uint64_t(ix) * 0x9e3779b97f4a7c15ull));
    h = mix64(h ^ (uint64_t(iy) * 0xbf58476d1ce4e5b9ull));
    h = mix64(h ^ (uint64_t(iz) * 0x94d049bb133111ebull));
    return double(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

// Trilinearly interpolated lattice noise in [0,1].
double vnoise(uint64_t seed, const Vec3& q) {
    const double fx = std::floor(q.x), fy = std::floor(q.y), fz = std::floor(q.z);
    const int64_t ix = int64_t(fx), iy = int64_t(fy), iz = int64_t(fz);
    const double u = fade(q.x - fx), v = fade(q.y - fy), w = fade(q.z - fz);
    double c[2][2][2];
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                c[dz][dy][dx] = lattice(seed, ix + dx, iy + dy, iz + dz);
    auto mix = [](double a, double b, double t) { return a + (b - a) * t; };
    const double x00 = mix(c[0][0][0], c[0][0][1], u);
    const double x01 = mix(c[0][1][0], c[0][1][1], u);
    const double x10 = mix(c[1][0][0], c[1][0][1], u);
    const double x11 = mix(c[1][1][0], c[1][1][1], u);
    return mix(mix(x00, x01, v), mix(x10, x11, v), w);
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

Vec3 lerp3(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

double smoothstep(double lo, double hi, double v) {
    const double t = clamp01((v - lo) / (hi - lo));
    return fade(t);
}

Vec3 random_unit(Rng& rng) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double len = norm(v);
    return len > 1e-9 ? v / len : Vec3{0, 0, 1};
}

// Camera-space tangent frames for existing hit buffers; the single frame
// computation records are checked against.
Image frames_from_gbuffer(const GBuffer& gb, const Camera& cam) {
    Image frames(9, gb.mask.height, gb.mask.width);
    for (int y = 0; y < gb.mask.height; ++y)
        for (int x = 0; x < gb.mask.width; ++x) {
            if (gb.mask.at(0, y, x) == 0.0f) continue;
            const Vec3 p{gb.position.at(0, y, x), gb.position.at(1, y, x),
                         gb.position.at(2, y, x)};
            Vec3 n{gb.normal.at(0, y, x), gb.normal.at(1, y, x), gb.normal.at(2, y, x)};
            n = normalized(n);
            const TangentResult tr = radial_z_tangent(p, n);
            const Vec3 rows[3] = {tr.frame.t, tr.frame.b, tr.frame.n};
            for (int r = 0; r < 3; ++r) {
                const Vec3 w = cam.to_view(rows[r]);
                frames.at(r * 3 + 0, y, x) = float(w.x);
                frames.at(r * 3 + 1, y, x) = float(w.y);
                frames.at(r * 3 + 2, y, x) = float(w.z);
            }
        }
    return frames;
}

} // namespace

const char* surface_kind_name(SurfaceKind k) {
    switch (k) {
        case SurfaceKind::sphere: return "sphere";
        case SurfaceKind::box: return "box";
        case SurfaceKind::superquadric: return "superquadric";
        case SurfaceKind::capsule: return "capsule";
    }
    return "?";
}

const char* texture_kind_name(TextureKind k) {
    switch (k) {
        case TextureKind::constant: return "constant";
        case TextureKind::checker: return "checker";
        case TextureKind::value_noise: return "value-noise";
        case TextureKind::stripes: return "stripes";
    }
    return "?";
}

const std::vector<Palette>& palettes() {
    static const std::vector<Palette> table = {
        {"ember", {0.82, 0.22, 0.12}, {0.96, 0.78, 0.45}},
        {"moss", {0.18, 0.42, 0.16}, {0.72, 0.80, 0.38}},
        {"slate", {0.22, 0.26, 0.32}, {0.70, 0.74, 0.78}},
        {"tide", {0.10, 0.32, 0.55}, {0.55, 0.85, 0.90}},
        {"plum", {0.38, 0.14, 0.42}, {0.88, 0.62, 0.78}},
        {"sand", {0.78, 0.64, 0.42}, {0.35, 0.26, 0.18}},
    };
    return table;
}

int prompt_vocab_size() { return 8 + int(palettes().size()); }

std::array<int, 3> ObjectSpec::prompt_tokens() const {
    return {int(surface.kind), 4 + int(texture), 8 + palette_id};
}

ObjectSpec ObjectSpec::from_seed(uint64_t seed) {
    ObjectSpec spec;
    spec.seed = seed;
    Rng rng(seed);
    // one fixed draw order: every field consumed regardless of kind
    spec.texture = TextureKind(rng.next_below(4));
    spec.palette_id = int(rng.next_below(palettes().size()));
    const int kind = int(rng.next_below(4));
    const Vec3 axis = random_unit(rng);
    const double angle = rng.uniform(0.0, kTau);
    const double sphere_r = rng.uniform(0.8, 1.2);
    const Vec3 half{rng.uniform(0.45, 0.72), rng.uniform(0.45, 0.72), rng.uniform(0.45, 0.72)};
    const Vec3 sq{rng.uniform(0.55, 0.72), rng.uniform(0.55, 0.72), rng.uniform(0.55, 0.72)};
    const double e1 = rng.uniform(0.6, 1.8), e2 = rng.uniform(0.6, 1.8);
    const double cap_r = rng.uniform(0.4, 0.6), cap_h = rng.uniform(0.3, 0.55);
    const Vec3 translate{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    spec.feature_scale = rng.uniform(1.2, 3.2);
    spec.stripe_dir = random_unit(rng);
    spec.albedo_mix = rng.next_double();
    spec.rough_lo = rng.uniform(0.08, 0.38);
    spec.rough_hi = rng.uniform(0.52, 0.95);
    const bool metal = rng.next_below(2) == 1;
    spec.metal_value = metal ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.2);
    spec.bump_amp = rng.uniform(0.05, 0.35);

    Surface& s = spec.surface;
    s.kind = SurfaceKind(kind);
    s.radius = s.kind == SurfaceKind::capsule ? cap_r : sphere_r;
    s.half = half;
    s.sq_scale = sq;
    s.e1 = e1;
    s.e2 = e2;
    s.half_len = cap_h;
    s.rot = Mat3::axis_angle(axis, angle);
    s.translate = translate;
    return spec;
}

TexelSample eval_texture(const ObjectSpec& spec, const Vec3& p) {
    const Palette& pal = palettes()[size_t(spec.palette_id)];
    const double fs = spec.feature_scale;
    TexelSample out;
    switch (spec.texture) {
        case TextureKind::constant: {
            out.albedo = lerp3(pal.primary, pal.secondary, spec.albedo_mix);
            out.roughness = 0.5 * (spec.rough_lo + spec.rough_hi);
            out.metallic = spec.metal_value;
            out.bump = {0, 0, 1};
            break;
        }
        case TextureKind::checker: {
            const int64_t cx = int64_t(std::floor(p.x * fs));
            const int64_t cy = int64_t(std::floor(p.y * fs));
            const int64_t cz = int64_t(std::floor(p.z * fs));
            const bool odd = ((cx + cy + cz) & 1) != 0;
            out.albedo = odd ? pal.secondary : pal.primary;
            out.roughness = odd ? spec.rough_hi : spec.rough_lo;
            out.metallic = odd ? spec.metal_value : 0.0;
            out.bump = {0, 0, 1};
            break;
        }
        case TextureKind::value_noise: {
            const uint64_t s0 = mix64(spec.seed ^ 0x7465786e6f697365ull);
            const uint64_t s1 = mix64(s0 ^ 1), s2 = mix64(s0 ^ 2);
            const double v =
                (vnoise(s0, p * fs) + 0.5 * vnoise(s0 ^ 3, p * (2.0 * fs) + Vec3{17.3, 9.1, 4.7})) /
                1.5;
            out.albedo = lerp3(pal.primary, pal.secondary, v);
            out.roughness = spec.rough_lo + (spec.rough_hi - spec.rough_lo) * v;
            out.metallic = spec.metal_value * smoothstep(0.55, 0.72, v);
            const double bx = spec.bump_amp * (2.0 * vnoise(s1, p * (1.7 * fs)) - 1.0);
            const double by = spec.bump_amp * (2.0 * vnoise(s2, p * (1.7 * fs)) - 1.0);
            out.bump = normalized({bx, by, 1.0});
            break;
        }
        case TextureKind::stripes: {
            const double t = dot(p, spec.stripe_dir) * fs;
            const double phase = t - std::floor(t);
            const bool band = phase < 0.5;
            out.albedo = band ? pal.primary : pal.secondary;
            out.roughness = band ? spec.rough_lo : spec.rough_hi;
            out.metallic = band ? 0.0 : spec.metal_value;
            out.bump = normalized({spec.bump_amp * std::sin(kTau * phase), 0.0, 1.0});
            break;
        }
    }
    out.albedo = {clamp01(out.albedo.x), clamp01(out.albedo.y), clamp01(out.albedo.z)};
    out.roughness = std::min(std::max(out.roughness, 0.02), 1.0);
    out.metallic = clamp01(out.metallic);
    return out;
}

Camera ring_camera(int view, int views, int resolution) {
    if (views < 1) throw GeometryError("ring_camera: views must be >= 1");
    if (view < 0 || view >= views) throw GeometryError("ring_camera: view index out of range");
    double c = 1.0, s = 0.0;
    turn_dir(view, views, c, s);
    const Vec3 pos{kRingRadius * c, kRingRadius * s, kRingHeight};
    return Camera::make(pos, {0, 0, 0}, {0, 0, 1}, kRingFov, resolution, resolution);
}

std::vector<ObjectSpec> generate_objects(int n, uint64_t master_seed) {
    if (n < 1) throw DatasetError("generate_objects: n must be >= 1");
    const Rng master(master_seed);
    std::vector<ObjectSpec> specs;
    specs.reserve(size_t(n));
    for (int i = 0; i < n; ++i) specs.push_back(ObjectSpec::from_seed(master.fork(uint64_t(i)).state()));
    return specs;
}

Image record_frames(const ObjectSpec& spec, int view, int views, int resolution) {
    const Camera cam = ring_camera(view, views, resolution);
    return frames_from_gbuffer(raycast(spec.surface, cam), cam);
}

std::vector<SampleRecord> render_views(const ObjectSpec& spec, int views, int resolution,
                                       int object_id) {
    if (views < 1) throw DatasetError("render_views: views must be >= 1");
    spec.surface.validate();
    if (spec.palette_id < 0 || spec.palette_id >= int(palettes().size()))
        throw DatasetError("render_views: palette id out of range");
    const LightRig rig = LightRig::camera_colocated();
    std::vector<SampleRecord> out;
    out.reserve(size_t(views));
    for (int v = 0; v < views; ++v) {
        const Camera cam = ring_camera(v, views, resolution);
        const GBuffer gb = raycast(spec.surface, cam);
        SampleRecord rec;
        rec.object_id = object_id;
        rec.view_id = v;
        rec.prompt = spec.prompt_tokens();
        rec.mask = gb.mask;
        rec.normals = Image(3, resolution, resolution);
        PbrStack stack(resolution, resolution);
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                if (gb.mask.at(0, y, x) == 0.0f) continue;
                const Vec3 p{gb.position.at(0, y, x), gb.position.at(1, y, x),
                             gb.position.at(2, y, x)};
                Vec3 n{gb.normal.at(0, y, x), gb.normal.at(1, y, x), gb.normal.at(2, y, x)};
                n = normalized(n);
                const Vec3 nv = cam.to_view(n);
                rec.normals.at(0, y, x) = float(nv.x);
                rec.normals.at(1, y, x) = float(nv.y);
                rec.normals.at(2, y, x) = float(nv.z);
                const TexelSample tx = eval_texture(spec, p);
                stack.albedo.at(0, y, x) = float(tx.albedo.x);
                stack.albedo.at(1, y, x) = float(tx.albedo.y);
                stack.albedo.at(2, y, x) = float(tx.albedo.z);
                stack.roughness.at(0, y, x) = float(tx.roughness);
                stack.metallic.at(0, y, x) = float(tx.metallic);
                stack.bump.at(0, y, x) = float(tx.bump.x);
                stack.bump.at(1, y, x) = float(tx.bump.y);
                stack.bump.at(2, y, x) = float(tx.bump.z);
            }
        const Image frames = frames_from_gbuffer(gb, cam);
        stack.validate(rec.mask);
        rec.rgb = render(stack, frames, rec.mask, rig);
        rec.stack = stack.to_channels();
        out.push_back(std::move(rec));
    }
    return out;
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>>
split(const std::vector<SampleRecord>& records, double holdout_fraction, uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw DatasetError("split: holdout fraction must be in (0,1)");
    std::vector<int> ids;
    for (const SampleRecord& r : records)
        if (std::find(ids.begin(), ids.end(), r.object_id) == ids.end()) ids.push_back(r.object_id);
    if (ids.size() < 2) throw DatasetError("split: need at least 2 objects");

    Rng rng(seed);
    for (size_t i = ids.size() - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.next_below(i + 1)]);
    const int n = int(ids.size());
    const int k = std::clamp(int(std::lround(holdout_fraction * n)), 1, n - 1);
    std::set<int> holdout(ids.begin(), ids.begin() + k);

    std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
    for (const SampleRecord& r : records)
        (holdout.count(r.object_id) ? out.second : out.first).push_back(r);
    return out;
}

namespace {

constexpr char kRecordMagic[4] = {'P', 'B', 'R', 'D'};
constexpr uint16_t kRecordVersion = 1;
constexpr int kRecordChannels = 15; // normals 3 + mask 1 + stack 8 + rgb 3

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void append_floats(std::string& out, const std::vector<float>& v) {
    const size_t start = out.size();
    out.resize(start + v.size() * 4);
    std::memcpy(out.data() + start, v.data(), v.size() * 4);
}

} // namespace

void save_record(const std::string& path, const SampleRecord& rec) {
    const int H = rec.mask.height, W = rec.mask.width;
    if (rec.normals.channels != 3 || rec.mask.channels != 1 || rec.stack.channels != 8 ||
        rec.rgb.channels != 3)
        throw IoError("save_record: unexpected channel layout");
    for (const Image* img : {&rec.normals, &rec.stack, &rec.rgb})
        if (img->height != H || img->width != W)
            throw IoError("save_record: image resolutions differ");

    std::string out;
    out.append(kRecordMagic, 4);
    put<uint16_t>(out, kRecordVersion);
    put<uint16_t>(out, uint16_t(kRecordChannels));
    put<uint32_t>(out, uint32_t(H));
    put<uint32_t>(out, uint32_t(W));
    append_floats(out, rec.normals.data);
    append_floats(out, rec.mask.data);
    append_floats(out, rec.stack.data);
    append_floats(out, rec.rgb.data);
    json meta;
    meta["object_id"] = rec.object_id;
    meta["view_id"] = rec.view_id;
    meta["prompt"] = rec.prompt;
    const std::string trailer = meta.dump();
    put<uint32_t>(out, uint32_t(trailer.size()));
    out.append(trailer);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_record: cannot open " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("save_record: short write to " + path);
}

SampleRecord load_record(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_record: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    size_t pos = 0;
    auto need = [&](size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw TruncationError(path + ": ends inside " + std::string(what));
    };
    auto get16 = [&](const char* what) {
        need(2, what);
        uint16_t v;
        std::memcpy(&v, bytes.data() + pos, 2);
        pos += 2;
        return v;
    };
    auto get32 = [&](const char* what) {
        need(4, what);
        uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    };

    need(4, "magic");
    if (std::memcmp(bytes.data(), kRecordMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not a sample record");
    pos = 4;
    const uint16_t version = get16("version");
    if (version != kRecordVersion)
        throw VersionError(path + ": unsupported record version " + std::to_string(version));
    const uint16_t channels = get16("channel count");
    if (channels != kRecordChannels)
        throw FormatError(path + ": expected " + std::to_string(kRecordChannels) +
                          " channels, got " + std::to_string(channels));
    const uint32_t H = get32("height"), W = get32("width");
    if (H == 0 || W == 0 || H > 4096 || W > 4096) throw FormatError(path + ": implausible size");

    SampleRecord rec;
    rec.normals = Image(3, int(H), int(W));
    rec.mask = Image(1, int(H), int(W));
    rec.stack = Image(8, int(H), int(W));
    rec.rgb = Image(3, int(H), int(W));
    for (Image* img : {&rec.normals, &rec.mask, &rec.stack, &rec.rgb}) {
        need(img->data.size() * 4, "channel payload");
        std::memcpy(img->data.data(), bytes.data() + pos, img->data.size() * 4);
        pos += img->data.size() * 4;
    }
    const uint32_t trailer_len = get32("trailer length");
    need(trailer_len, "JSON trailer");
    json meta;
    try {
        meta = json::parse(bytes.substr(pos, trailer_len));
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad JSON trailer: " + e.what());
    }
    pos += trailer_len;
    if (pos != bytes.size()) throw FormatError(path + ": trailing bytes after trailer");

    rec.object_id = meta.at("object_id").get<int>();
    rec.view_id = meta.at("view_id").get<int>();
    const auto prompt = meta.at("prompt");
    if (!prompt.is_array() || prompt.size() != 3)
        throw FormatError(path + ": prompt must be 3 token ids");
    for (size_t i = 0; i < 3; ++i) rec.prompt[i] = prompt[i].get<int>();
    return rec;
}

void save_manifest(const std::string& dir, const DatasetManifest& m) {
    json j;
    j["master_seed"] = m.master_seed;
    j["views"] = m.views;
    j["resolution"] = m.resolution;
    j["holdout_fraction"] = m.holdout_fraction;
    j["config"] = m.config_echo;
    json objs = json::array();
    for (const ManifestObject& o : m.objects) {
        json jo;
        jo["id"] = o.id;
        jo["seed"] = o.seed;
        jo["shape"] = o.shape;
        jo["texture"] = o.texture;
        jo["palette"] = o.palette_id;
        jo["split"] = o.holdout ? "eval" : "train";
        jo["records"] = o.record_files;
        objs.push_back(jo);
    }
    j["objects"] = objs;
    const std::string path = dir + "/manifest.json";
    std::ofstream f(path);
    if (!f) throw IoError("save_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("save_manifest: short write to " + path);
}

DatasetManifest load_manifest(const std::string& dir) {
    const std::string path = dir + "/manifest.json";
    std::ifstream f(path);
    if (!f) throw IoError("load_manifest: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.master_seed = j.at("master_seed").get<uint64_t>();
        m.views = j.at("views").get<int>();
        m.resolution = j.at("resolution").get<int>();
        m.holdout_fraction = j.at("holdout_fraction").get<double>();
        m.config_echo = j.at("config").get<std::string>();
        for (const json& jo : j.at("objects")) {
            ManifestObject o;
            o.id = jo.at("id").get<int>();
            o.seed = jo.at("seed").get<uint64_t>();
            o.shape = jo.at("shape").get<std::string>();
            o.texture = jo.at("texture").get<std::string>();
            o.palette_id = jo.at("palette").get<int>();
            o.holdout = jo.at("split").get<std::string>() == "eval";
            o.record_files = jo.at("records").get<std::vector<std::string>>();
            m.objects.push_back(std::move(o));
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return m;
}

DatasetManifest generate_dataset(const std::string& dir, int objects, int views, int resolution,
                                 uint64_t master_seed, double holdout_fraction,
                                 const std::string& config_echo) {
    if (objects < 2) throw DatasetError("generate_dataset: need at least 2 objects");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw DatasetError("generate_dataset: holdout fraction must be in (0,1)");
    std::filesystem::create_directories(dir);

    const std::vector<ObjectSpec> specs = generate_objects(objects, master_seed);

    // object-granularity holdout assignment
    std::vector<int> ids(size_t(objects));
    for (int i = 0; i < objects; ++i) ids[size_t(i)] = i;
    Rng rng = Rng(master_seed).fork("holdout");
    for (size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.next_below(i + 1)]);
    const int k = std::clamp(int(std::lround(holdout_fraction * objects)), 1, objects - 1);
    std::set<int> holdout(ids.begin(), ids.begin() + k);

    DatasetManifest m;
    m.master_seed = master_seed;
    m.views = views;
    m.resolution = resolution;
    m.holdout_fraction = holdout_fraction;
    m.config_echo = config_echo;
    for (int i = 0; i < objects; ++i) {
        const ObjectSpec& spec = specs[size_t(i)];
        ManifestObject o;
        o.id = i;
        o.seed = spec.seed;
        o.shape = surface_kind_name(spec.surface.kind);
        o.texture = texture_kind_name(spec.texture);
        o.palette_id = spec.palette_id;
        o.holdout = holdout.count(i) != 0;
        const std::vector<SampleRecord> recs = render_views(spec, views, resolution, i);
        for (const SampleRecord& rec : recs) {
            char name[64];
            std::snprintf(name, sizeof(name), "obj%04d_v%02d.pbrd", i, rec.view_id);
            save_record(dir + "/" + name, rec);
            o.record_files.push_back(name);
        }
        m.objects.push_back(std::move(o));
    }
    save_manifest(dir, m);
    return m;
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.manifest = load_manifest(dir);
    for (const ManifestObject& o : ds.manifest.objects)
        for (const std::string& file : o.record_files) {
            SampleRecord rec = load_record(dir + "/" + file);
            PbrStack::from_channels(rec.stack).validate(rec.mask);
            (o.holdout ? ds.eval : ds.train).push_back(std::move(rec));
        }
    return ds;
}

std::vector<int> subset_object_ids(const DatasetManifest& m, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw DatasetError("subset_object_ids: fraction must be in (0,1]");
    std::vector<std::pair<uint64_t, int>> keyed;
    for (const ManifestObject& o : m.objects)
        if (!o.holdout) keyed.push_back({mix64(o.seed ^ 0x5375427365547331ull), o.id});
    if (keyed.empty()) throw DatasetError("subset_object_ids: no train objects");
    std::sort(keyed.begin(), keyed.end());
    const int k = std::max(1, int(std::lround(fraction * double(keyed.size()))));
    std::vector<int> out;
    for (int i = 0; i < k && i < int(keyed.size()); ++i) out.push_back(keyed[size_t(i)].second);
    return out;
}

std::vector<SampleRecord> filter_records(const std::vector<SampleRecord>& records,
                                         const std::vector<int>& object_ids) {
    const std::set<int> keep(object_ids.begin(), object_ids.end());
    std::vector<SampleRecord> out;
    for (const SampleRecord& r : records)
        if (keep.count(r.object_id)) out.push_back(r);
    return out;
}

} // namespace pbrgen
