#pragma once

#include <cstddef>
#include <vector>

namespace pbrgen {

// Dense CHW float image. The workhorse container for rendered channels and
// dataset records; not differentiable (see tensor.hpp for that).
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data; // channels * height * width, row-major per channel

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w), data(size_t(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }

    size_t numel() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// Slice channels [c0, c1) into a new image.
Image slice_channels(const Image& img, int c0, int c1);

// Stack channels of a then b.
Image concat_channels(const Image& a, const Image& b);

// Side-by-side / stacked composition with a fixed gap of `pad` pixels.
Image hcat(const Image& a, const Image& b, int pad = 0, float fill = 0.0f);
Image vcat(const Image& a, const Image& b, int pad = 0, float fill = 0.0f);

// Nearest-neighbour integer upscale, for preview PNGs of small renders.
Image upscale_nearest(const Image& img, int factor);

float max_abs_diff(const Image& a, const Image& b);

} // namespace pbrgen
