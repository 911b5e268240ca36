#include "pbrgen/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pbrgen/errors.hpp"

namespace pbrgen {

Image slice_channels(const Image& img, int c0, int c1) {
    if (c0 < 0 || c1 > img.channels || c0 >= c1)
        throw TensorError("slice_channels: bad range");
    Image out(c1 - c0, img.height, img.width);
    std::copy(img.data.begin() + size_t(c0) * img.height * img.width,
              img.data.begin() + size_t(c1) * img.height * img.width, out.data.begin());
    return out;
}

Image concat_channels(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        throw TensorError("concat_channels: spatial mismatch");
    Image out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

Image hcat(const Image& a, const Image& b, int pad, float fill) {
    if (a.channels != b.channels || a.height != b.height)
        throw TensorError("hcat: shape mismatch");
    Image out(a.channels, a.height, a.width + pad + b.width);
    std::fill(out.data.begin(), out.data.end(), fill);
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < a.width; ++x) out.at(c, y, x) = a.at(c, y, x);
            for (int x = 0; x < b.width; ++x) out.at(c, y, a.width + pad + x) = b.at(c, y, x);
        }
    return out;
}

Image vcat(const Image& a, const Image& b, int pad, float fill) {
    if (a.channels != b.channels || a.width != b.width)
        throw TensorError("vcat: shape mismatch");
    Image out(a.channels, a.height + pad + b.height, a.width);
    std::fill(out.data.begin(), out.data.end(), fill);
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) out.at(c, y, x) = a.at(c, y, x);
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x) out.at(c, a.height + pad + y, x) = b.at(c, y, x);
    }
    return out;
}

Image upscale_nearest(const Image& img, int factor) {
    Image out(img.channels, img.height * factor, img.width * factor);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = img.at(c, y / factor, x / factor);
    return out;
}

float max_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw TensorError("max_abs_diff: shape mismatch");
    float m = 0.0f;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

} // namespace pbrgen
