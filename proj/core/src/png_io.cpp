#include "pbrgen/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "pbrgen/errors.hpp"

namespace pbrgen {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t n) {
    put_be32(out, uint32_t(n));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (n) out.insert(out.end(), data, data + n);
    const uint32_t crc =
        uint32_t(crc32(0ul, out.data() + start, uInt(4 + n)));
    put_be32(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

} // namespace

std::vector<uint8_t> encode_png(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw IoError("encode_png: expected 1 or 3 channels, got " + std::to_string(img.channels));
    if (img.height <= 0 || img.width <= 0) throw IoError("encode_png: empty image");
    const int C = img.channels, H = img.height, W = img.width;

    // filter byte 0 then interleaved samples, per row
    std::vector<uint8_t> raw(size_t(H) * (1 + size_t(W) * C));
    size_t p = 0;
    for (int y = 0; y < H; ++y) {
        raw[p++] = 0;
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                float v = img.at(c, y, x);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                raw[p++] = uint8_t(std::lround(v * 255.0f));
            }
    }

    uLongf comp_len = compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 9) != Z_OK)
        throw IoError("encode_png: deflate failed");
    comp.resize(comp_len);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    uint8_t ihdr[13];
    ihdr[0] = uint8_t(uint32_t(W) >> 24);
    ihdr[1] = uint8_t(uint32_t(W) >> 16);
    ihdr[2] = uint8_t(uint32_t(W) >> 8);
    ihdr[3] = uint8_t(uint32_t(W));
    ihdr[4] = uint8_t(uint32_t(H) >> 24);
    ihdr[5] = uint8_t(uint32_t(H) >> 16);
    ihdr[6] = uint8_t(uint32_t(H) >> 8);
    ihdr[7] = uint8_t(uint32_t(H));
    ihdr[8] = 8;                        // bit depth
    ihdr[9] = C == 3 ? uint8_t(2) : uint8_t(0); // color type
    ihdr[10] = 0;
    ihdr[11] = 0;
    ihdr[12] = 0;
    put_chunk(out, "IHDR", ihdr, 13);
    put_chunk(out, "IDAT", comp.data(), comp.size());
    put_chunk(out, "IEND", nullptr, 0);
    return out;
}

void write_png(const std::string& path, const Image& img) {
    const std::vector<uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("write_png: short write to " + path);
}

Image decode_png(const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw FormatError("decode_png: not a PNG");
    size_t pos = 8;
    int W = 0, H = 0, C = 0;
    bool have_ihdr = false, have_iend = false;
    std::vector<uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = get_be32(&bytes[pos]);
        char type[5] = {0};
        std::memcpy(type, &bytes[pos + 4], 4);
        if (pos + 12 + len > bytes.size()) throw TruncationError("decode_png: chunk past end");
        const uint8_t* data = &bytes[pos + 8];
        if (std::strcmp(type, "IHDR") == 0) {
            if (len != 13) throw FormatError("decode_png: bad IHDR length");
            W = int(get_be32(data));
            H = int(get_be32(data + 4));
            const int depth = data[8], color = data[9];
            if (depth != 8 || (color != 0 && color != 2))
                throw FormatError("decode_png: only 8-bit gray/RGB supported");
            if (data[10] != 0 || data[11] != 0 || data[12] != 0)
                throw FormatError("decode_png: unsupported compression/filter/interlace");
            C = color == 2 ? 3 : 1;
            have_ihdr = true;
        } else if (std::strcmp(type, "IDAT") == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::strcmp(type, "IEND") == 0) {
            have_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!have_ihdr || !have_iend || W <= 0 || H <= 0)
        throw FormatError("decode_png: missing IHDR or IEND");

    const size_t stride = size_t(W) * C;
    std::vector<uint8_t> raw(size_t(H) * (1 + stride));
    uLongf raw_len = uLongf(raw.size());
    const int zrc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size()) throw FormatError("decode_png: inflate failed");

    Image img(C, H, W);
    std::vector<uint8_t> prev(stride, 0), cur(stride, 0);
    for (int y = 0; y < H; ++y) {
        const uint8_t* row = &raw[size_t(y) * (1 + stride)];
        const int filter = row[0];
        for (size_t i = 0; i < stride; ++i) {
            const int x = row[1 + i];
            const int a = i >= size_t(C) ? cur[i - C] : 0;  // left
            const int b = prev[i];                          // up
            const int c = i >= size_t(C) ? prev[i - C] : 0; // up-left
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, c); break;
                default: throw FormatError("decode_png: bad filter type");
            }
            cur[i] = uint8_t(v);
        }
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c)
                img.at(c, y, x) = float(cur[size_t(x) * C + c]) / 255.0f;
        std::swap(prev, cur);
    }
    return img;
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

} // namespace pbrgen
