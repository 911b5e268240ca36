#include "pbrgen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pbrgen/errors.hpp"
#include "pbrgen/rng.hpp"

namespace pbrgen {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'R', 'W'};
constexpr uint16_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T)); // little-endian hosts only (asserted at build)
    out.append(buf, sizeof(T));
}

static_assert(sizeof(float) == 4);

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    template <class T>
    T get() {
        if (pos_ + sizeof(T) > bytes_.size())
            throw TruncationError(path_ + ": ends inside a field");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_bytes(size_t n) {
        if (pos_ + n > bytes_.size()) throw TruncationError(path_ + ": ends inside a field");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void get_floats(float* dst, size_t n) {
        if (pos_ + n * 4 > bytes_.size())
            throw TruncationError(path_ + ": ends inside parameter data");
        std::memcpy(dst, bytes_.data() + pos_, n * 4);
        pos_ += n * 4;
    }

    size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

size_t shape_numel(const std::vector<int>& shape, const std::string& name) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw FormatError("parameter '" + name + "' has nonpositive dim");
        n *= size_t(d);
    }
    return n;
}

} // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& p : params)
        if (p.name == name) return &p;
    return nullptr;
}

NamedTensor& Checkpoint::add(const std::string& name, std::vector<int> shape) {
    NamedTensor t;
    t.name = name;
    t.data.assign(shape_numel(shape, name), 0.0f);
    t.shape = std::move(shape);
    params.push_back(std::move(t));
    return params.back();
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 4);
    put<uint16_t>(out, kVersion);
    put<uint32_t>(out, uint32_t(ck.params.size()));
    for (const NamedTensor& p : ck.params) {
        if (p.name.size() > 0xffff) throw IoError("checkpoint: parameter name too long");
        if (p.shape.size() > 0xff) throw IoError("checkpoint: parameter rank too large");
        if (p.data.size() != shape_numel(p.shape, p.name))
            throw IoError("checkpoint: '" + p.name + "' data does not match its shape");
        put<uint16_t>(out, uint16_t(p.name.size()));
        out.append(p.name);
        put<uint8_t>(out, uint8_t(p.shape.size()));
        for (int d : p.shape) put<uint32_t>(out, uint32_t(d));
        const size_t start = out.size();
        out.resize(start + p.data.size() * 4);
        std::memcpy(out.data() + start, p.data.data(), p.data.size() * 4);
    }
    put<uint32_t>(out, uint32_t(ck.config_json.size()));
    out.append(ck.config_json);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(bytes, path);
    const std::string magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not a checkpoint");
    const uint16_t version = r.get<uint16_t>();
    if (version != kVersion)
        throw VersionError(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    const uint32_t count = r.get<uint32_t>();
    ck.params.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor p;
        const uint16_t name_len = r.get<uint16_t>();
        p.name = r.get_bytes(name_len);
        const uint8_t rank = r.get<uint8_t>();
        p.shape.resize(rank);
        for (uint8_t d = 0; d < rank; ++d) {
            const uint32_t dim = r.get<uint32_t>();
            if (dim == 0 || dim > (1u << 28)) throw FormatError(path + ": implausible dim");
            p.shape[d] = int(dim);
        }
        p.data.resize(shape_numel(p.shape, p.name));
        r.get_floats(p.data.data(), p.data.size());
        ck.params.push_back(std::move(p));
    }
    const uint32_t json_len = r.get<uint32_t>();
    ck.config_json = r.get_bytes(json_len);
    if (r.remaining() != 0) throw FormatError(path + ": trailing bytes after JSON trailer");
    return ck;
}

uint64_t params_hash(const Checkpoint& ck, const std::string& prefix) {
    uint64_t h = kFnvOffset;
    for (const NamedTensor& p : ck.params) {
        if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
        h = fnv1a64(p.name, h);
        for (int d : p.shape) h = fnv1a64(&d, sizeof(d), h);
        h = fnv1a64(p.data.data(), p.data.size() * 4, h);
    }
    return h;
}

} // namespace pbrgen
