#pragma once

#include <string>
#include <vector>

#include "markerforge/common.hpp"

namespace markerforge::imaging {

// Row-major interleaved intensity image. Values live in [0,1] at the PNG
// boundary; in-memory buffers may exceed that range during computation.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<float> data;

    static Image create(int width, int height, int channels, float fill = 0.0f);

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height &&
               channels == other.channels;
    }
};

// 8-bit PNG, grayscale or RGB. Palette images are expanded, 16-bit depth is
// reduced, alpha is stripped.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Replicates a grayscale channel into RGB; returns 3-channel input unchanged.
Image to_rgb(const Image& img);

// Separable binomial blur [1 4 6 4 1]/16 per channel, clamped borders.
Image blur5(const Image& img);

}  // namespace markerforge::imaging
