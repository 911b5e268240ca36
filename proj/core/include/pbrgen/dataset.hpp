#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbrgen/geometry.hpp"
#include "pbrgen/image.hpp"
#include "pbrgen/shading.hpp"

namespace pbrgen {

enum class TextureKind { constant, checker, value_noise, stripes };

const char* surface_kind_name(SurfaceKind k);
const char* texture_kind_name(TextureKind k);

struct Palette {
    const char* name;
    Vec3 primary, secondary;
};
// Fixed palette table; palette_id indexes into it.
const std::vector<Palette>& palettes();

// Prompt token ids: surface kinds take 0..3, texture kinds 4..7, palettes 8+.
int prompt_vocab_size();

// Procedurally generated object: geometry plus a texture program. Everything
// is a pure function of `seed`, so regeneration is bit-identical.
struct ObjectSpec {
    uint64_t seed = 0;
    Surface surface;
    TextureKind texture = TextureKind::constant;
    int palette_id = 0;
    double feature_scale = 2.0; // checker cell / noise / stripe frequency
    Vec3 stripe_dir = {0, 0, 1};
    double albedo_mix = 0.5;
    double rough_lo = 0.2, rough_hi = 0.8;
    double metal_value = 0.0;
    double bump_amp = 0.2;

    static ObjectSpec from_seed(uint64_t seed);
    std::array<int, 3> prompt_tokens() const; // shape, texture, palette
};

struct TexelSample {
    Vec3 albedo;
    double roughness = 0.5;
    double metallic = 0.0;
    Vec3 bump = {0, 0, 1}; // tangent frame, unit, z > 0
};

// Texture program at a world-space position.
TexelSample eval_texture(const ObjectSpec& spec, const Vec3& p);

// One rendered view: conditioning (normals + mask), targets (material stack
// and the RGB render of that exact stack).
struct SampleRecord {
    Image normals; // 3ch, view space, zero outside mask
    Image mask;    // 1ch, {0,1}
    Image stack;   // 8ch: albedo, roughness, metallic, bump
    Image rgb;     // 3ch
    std::array<int, 3> prompt = {0, 0, 0};
    int object_id = 0;
    int view_id = 0;
};

// Cameras sit on a horizontal ring (radius 2.6, height 0.9) aimed at the
// origin, equally spaced in azimuth. Quarter-turn placements are exact, so
// symmetric objects yield value-identical opposing views.
Camera ring_camera(int view, int views, int resolution);

std::vector<ObjectSpec> generate_objects(int n, uint64_t master_seed);

// Camera-space tangent frames for a given view of a spec. Recomputable from
// the manifest; records do not store frames.
Image record_frames(const ObjectSpec& spec, int view, int views, int resolution);

std::vector<SampleRecord> render_views(const ObjectSpec& spec, int views, int resolution = 32,
                                       int object_id = 0);

// Object-granularity holdout: every view of an object lands on one side.
// Throws if the records cover fewer than 2 objects.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>>
split(const std::vector<SampleRecord>& records, double holdout_fraction, uint64_t seed);

// Binary record container, bit-exact round trip.
void save_record(const std::string& path, const SampleRecord& rec);
SampleRecord load_record(const std::string& path);

struct ManifestObject {
    int id = 0;
    uint64_t seed = 0;
    std::string shape, texture;
    int palette_id = 0;
    bool holdout = false;
    std::vector<std::string> record_files; // relative to the dataset dir
};

struct DatasetManifest {
    uint64_t master_seed = 0;
    int views = 16;
    int resolution = 32;
    double holdout_fraction = 0.02;
    std::string config_echo; // TOML text of the generating config
    std::vector<ManifestObject> objects;
};

void save_manifest(const std::string& dir, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& dir);

// Generate, render, split and serialize a whole dataset directory.
DatasetManifest generate_dataset(const std::string& dir, int objects, int views, int resolution,
                                 uint64_t master_seed, double holdout_fraction,
                                 const std::string& config_echo);

struct Dataset {
    DatasetManifest manifest;
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> eval;
};

Dataset load_dataset(const std::string& dir);

// Deterministic nested subsets of the train-side objects: ordering depends
// only on object seeds, so fraction a < b implies subset(a) is a prefix of
// subset(b). Returns object ids.
std::vector<int> subset_object_ids(const DatasetManifest& m, double fraction);

std::vector<SampleRecord> filter_records(const std::vector<SampleRecord>& records,
                                         const std::vector<int>& object_ids);

} // namespace pbrgen
