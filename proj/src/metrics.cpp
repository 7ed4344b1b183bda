#include "markerforge/metrics.hpp"

#include <array>
#include <cmath>

namespace markerforge::imaging {

namespace {

constexpr int kWindowRadius = 5;  // 11x11
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 121>& gaussian_window() {
    static const std::array<double, 121> window = [] {
        std::array<double, 121> w{};
        double sum = 0.0;
        for (int dy = -kWindowRadius; dy <= kWindowRadius; ++dy) {
            for (int dx = -kWindowRadius; dx <= kWindowRadius; ++dx) {
                const double g =
                    std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                w[(dy + kWindowRadius) * 11 + (dx + kWindowRadius)] = g;
                sum += g;
            }
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return window;
}

void check_metric_inputs(const Image& a, const Image& b,
                         const ValidRegion& region) {
    if (!a.same_shape(b) || a.width != region.width ||
        a.height != region.height) {
        throw DimensionMismatchError("metric inputs must share dimensions");
    }
    if (region.count == 0) {
        throw EmptyRegionError("metric region is empty");
    }
}

}  // namespace

double ssim_value(const Image& a, const Image& b, const ValidRegion& region) {
    check_metric_inputs(a, b, region);
    const auto& window = gaussian_window();

    double total = 0.0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (!region.contains(x, y)) continue;
            double pixel_ssim = 0.0;
            for (int c = 0; c < a.channels; ++c) {
                double wsum = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -kWindowRadius; dy <= kWindowRadius; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= a.height) continue;
                    for (int dx = -kWindowRadius; dx <= kWindowRadius; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= a.width) continue;
                        if (!region.contains(xx, yy)) continue;
                        const double w = window[(dy + kWindowRadius) * 11 +
                                                (dx + kWindowRadius)];
                        const double va = a.at(xx, yy, c);
                        const double vb = b.at(xx, yy, c);
                        wsum += w;
                        sa += w * va;
                        sb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                // wsum > 0: the center pixel is in the region.
                const double mu_a = sa / wsum;
                const double mu_b = sb / wsum;
                const double var_a = saa / wsum - mu_a * mu_a;
                const double var_b = sbb / wsum - mu_b * mu_b;
                const double cov = sab / wsum - mu_a * mu_b;
                pixel_ssim += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                              ((mu_a * mu_a + mu_b * mu_b + kC1) *
                               (var_a + var_b + kC2));
            }
            total += pixel_ssim / a.channels;
        }
    }
    return total / static_cast<double>(region.count);
}

double psnr_value(const Image& a, const Image& b, const ValidRegion& region) {
    check_metric_inputs(a, b, region);

    double se = 0.0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (!region.contains(x, y)) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d =
                    static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
                se += d * d;
            }
        }
    }
    const double mse = se / (static_cast<double>(region.count) * a.channels);
    if (mse <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

}  // namespace markerforge::imaging
