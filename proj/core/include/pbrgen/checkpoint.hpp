#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pbrgen {

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data; // product(shape) elements
};

// Model weights plus the config echo that produced them. Binary container:
// magic "PBRW", u16 version, u32 parameter count, then per parameter
// u16 name length + name, u8 rank, u32 dims, little-endian f32 data, then a
// u32-length-prefixed UTF-8 JSON trailer. Bit-exact round trips.
struct Checkpoint {
    std::vector<NamedTensor> params; // order preserved
    std::string config_json = "{}";

    const NamedTensor* find(const std::string& name) const;
    NamedTensor& add(const std::string& name, std::vector<int> shape);
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over names, shapes, and raw f32 bytes of every parameter whose name
// starts with `prefix` (all parameters when empty). Order-sensitive. Used for
// frozen-weight equality checks.
uint64_t params_hash(const Checkpoint& ck, const std::string& prefix = "");

} // namespace pbrgen
