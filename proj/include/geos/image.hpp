#pragma once

#include <cstdint>
#include <vector>

#include "geos/rng.hpp"

namespace geos {

// Interleaved HWC rasters. ImageU8 is the storage form (datasets, files);
// Image holds doubles in [0,1] for transform and network input paths.
struct ImageU8 {
    int h = 0, w = 0, c = 0;
    std::vector<uint8_t> px;

    uint8_t& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    uint8_t at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    bool operator==(const ImageU8&) const = default;
};

struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    bool operator==(const Image&) const = default;
};

Image to_float(const ImageU8& u);
ImageU8 to_u8(const Image& f);  // clamps to [0,1], rounds to nearest

// Quarter-turn rotation, counterclockwise, exact pixel shuffle. Square input only
// for turns 1 and 3 at the call sites that require shape preservation; this
// primitive itself handles any raster.
Image rotate90(const Image& im, int quarter_turns_ccw);
Image hflip(const Image& im);
Image crop(const Image& im, int y0, int x0, int h, int w);
// Half-pixel-center bilinear resampling with edge clamping.
Image resize_bilinear(const Image& im, int oh, int ow);

void adjust_brightness(Image& im, double factor);
void adjust_contrast(Image& im, double factor);
void adjust_saturation(Image& im, double factor);
void clamp01(Image& im);

}  // namespace geos
