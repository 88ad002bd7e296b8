#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "etlab/errors.hpp"

namespace etlab {

/// Dense RGB image, float channels in [0,1], row-major, channel-interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // height * width * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0f) {}

    float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// Quantization contract shared with the PNG layer: byte = round(255*x),
/// float = byte / 255. Oracle comparisons happen post-quantization.
inline uint8_t quantize_channel(float x) {
    if (x <= 0.0f) return 0;
    if (x >= 1.0f) return 255;
    return static_cast<uint8_t>(std::lround(255.0 * static_cast<double>(x)));
}
inline float dequantize_channel(uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Snaps every channel to the 8-bit lattice (k/255). Rendering emits
/// already-quantized images so save->load round-trips are bit-exact.
inline void quantize_in_place(Image& img) {
    for (float& v : img.data) v = dequantize_channel(quantize_channel(v));
}

inline Image quantized(Image img) {
    quantize_in_place(img);
    return img;
}

/// Mean squared error over all pixels/channels.
inline double image_mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("image_mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

/// PSNR with peak 1.0; identical images return the +inf sentinel.
inline double image_psnr(const Image& a, const Image& b) {
    const double mse = image_mse(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

/// Copies `panel` into `dst` with its top-left corner at (y0, x0).
inline void blit(Image& dst, const Image& panel, int y0, int x0) {
    if (y0 < 0 || x0 < 0 || y0 + panel.height > dst.height || x0 + panel.width > dst.width)
        throw ShapeError("blit: panel does not fit destination");
    for (int y = 0; y < panel.height; ++y)
        for (int x = 0; x < panel.width; ++x)
            for (int c = 0; c < 3; ++c) dst.at(y0 + y, x0 + x, c) = panel.at(y, x, c);
}

/// Extracts a rectangular region.
inline Image crop(const Image& src, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > src.height || x0 + w > src.width)
        throw ShapeError("crop: region outside image");
    Image out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    return out;
}

}  // namespace etlab
