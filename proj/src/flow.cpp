#include "markerforge/flow.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace markerforge::imaging {

namespace {

constexpr float kFloMagic = 202021.25f;  // "PIEH" interpreted as float
constexpr float kInvalidSentinel = 1e10f;
constexpr double kInvalidThreshold = 1e9;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

FlowField FlowField::create(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw DimensionMismatchError("flow dimensions must be positive");
    }
    FlowField f;
    f.width = width;
    f.height = height;
    f.target.assign(static_cast<std::size_t>(width) * height * 2, 0.0);
    f.valid.assign(static_cast<std::size_t>(width) * height, 0);
    return f;
}

std::size_t FlowField::valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
}

ValidRegion ValidRegion::create(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw DimensionMismatchError("region dimensions must be positive");
    }
    ValidRegion r;
    r.width = width;
    r.height = height;
    r.mask.assign(static_cast<std::size_t>(width) * height, 0);
    return r;
}

FlowField read_flo(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw IoError("cannot open " + path);
    }

    float magic = 0;
    std::int32_t w = 0, h = 0;
    if (std::fread(&magic, 4, 1, fp.get()) != 1 || magic != kFloMagic) {
        throw IoError(path + ": not a .flo file");
    }
    if (std::fread(&w, 4, 1, fp.get()) != 1 ||
        std::fread(&h, 4, 1, fp.get()) != 1 || w <= 0 || h <= 0 ||
        w > 1 << 20 || h > 1 << 20) {
        throw IoError(path + ": corrupt .flo header");
    }

    std::vector<float> disp(static_cast<std::size_t>(w) * h * 2);
    if (std::fread(disp.data(), 4, disp.size(), fp.get()) != disp.size()) {
        throw IoError(path + ": truncated .flo data");
    }

    FlowField flow = FlowField::create(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double dx = disp[2 * i];
            const double dy = disp[2 * i + 1];
            if (std::abs(dx) > kInvalidThreshold ||
                std::abs(dy) > kInvalidThreshold || !std::isfinite(dx) ||
                !std::isfinite(dy)) {
                flow.set(x, y, {0.0, 0.0}, false);
            } else {
                flow.set(x, y, {x + dx, y + dy}, true);
            }
        }
    }
    return flow;
}

void write_flo(const std::string& path, const FlowField& flow) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot open " + path + " for writing");
    }

    const std::int32_t w = flow.width, h = flow.height;
    std::vector<float> disp(static_cast<std::size_t>(w) * h * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (flow.is_valid(x, y)) {
                const auto t = flow.at(x, y);
                disp[2 * i] = static_cast<float>(t.x - x);
                disp[2 * i + 1] = static_cast<float>(t.y - y);
            } else {
                disp[2 * i] = kInvalidSentinel;
                disp[2 * i + 1] = kInvalidSentinel;
            }
        }
    }

    if (std::fwrite(&kFloMagic, 4, 1, fp.get()) != 1 ||
        std::fwrite(&w, 4, 1, fp.get()) != 1 ||
        std::fwrite(&h, 4, 1, fp.get()) != 1 ||
        std::fwrite(disp.data(), 4, disp.size(), fp.get()) != disp.size()) {
        throw IoError("failed to write " + path);
    }
}

void write_pfm(const std::string& path, int width, int height,
               const std::vector<float>& values) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionMismatchError("pfm buffer size mismatch");
    }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot open " + path + " for writing");
    }
    // PFM stores rows bottom-up; scale -1 marks little-endian data.
    std::fprintf(fp.get(), "Pf\n%d %d\n-1.0\n", width, height);
    for (int y = height - 1; y >= 0; --y) {
        const float* row = values.data() + static_cast<std::size_t>(y) * width;
        if (std::fwrite(row, 4, width, fp.get()) !=
            static_cast<std::size_t>(width)) {
            throw IoError("failed to write " + path);
        }
    }
}

}  // namespace markerforge::imaging
