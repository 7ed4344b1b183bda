#pragma once

#include "markerforge/flow.hpp"
#include "markerforge/image.hpp"

namespace markerforge::imaging {

inline constexpr double kPsnrCapDb = 99.0;

// Windowed SSIM (11x11 Gaussian, sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic
// range 1.0) averaged over the region pixels, per channel and then across
// channels. Window weights are renormalized over in-image, in-region pixels
// so uncovered neighbors never contaminate a window.
// Throws EmptyRegionError when the region has no pixels.
double ssim_value(const Image& a, const Image& b, const ValidRegion& region);

// 10 log10(1 / MSE) over the region on the [0,1] intensity scale, capped at
// 99 dB for zero MSE.
double psnr_value(const Image& a, const Image& b, const ValidRegion& region);

}  // namespace markerforge::imaging
