#include "geos/image.hpp"

#include <algorithm>
#include <cmath>

#include "geos/errors.hpp"

namespace geos {

Image to_float(const ImageU8& u) {
    Image f(u.h, u.w, u.c);
    for (size_t i = 0; i < u.px.size(); ++i) f.px[i] = u.px[i] / 255.0;
    return f;
}

ImageU8 to_u8(const Image& f) {
    ImageU8 u;
    u.h = f.h;
    u.w = f.w;
    u.c = f.c;
    u.px.resize(f.px.size());
    for (size_t i = 0; i < f.px.size(); ++i) {
        double v = std::clamp(f.px[i], 0.0, 1.0);
        u.px[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return u;
}

Image rotate90(const Image& im, int quarter_turns_ccw) {
    int t = ((quarter_turns_ccw % 4) + 4) % 4;
    if (t == 0) return im;
    if (t == 2) {
        Image out(im.h, im.w, im.c);
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x)
                for (int ch = 0; ch < im.c; ++ch)
                    out.at(y, x, ch) = im.at(im.h - 1 - y, im.w - 1 - x, ch);
        return out;
    }
    Image out(im.w, im.h, im.c);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int ch = 0; ch < im.c; ++ch) {
                // 90 CCW: out(y,x) = in(x, W-1-y); 270 CCW: out(y,x) = in(H-1-x, y)
                if (t == 1)
                    out.at(y, x, ch) = im.at(x, im.w - 1 - y, ch);
                else
                    out.at(y, x, ch) = im.at(im.h - 1 - x, y, ch);
            }
    return out;
}

Image hflip(const Image& im) {
    Image out(im.h, im.w, im.c);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int ch = 0; ch < im.c; ++ch) out.at(y, x, ch) = im.at(y, im.w - 1 - x, ch);
    return out;
}

Image crop(const Image& im, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > im.h || x0 + w > im.w)
        throw GeometryError("crop window out of bounds");
    Image out(h, w, im.c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < im.c; ++ch) out.at(y, x, ch) = im.at(y0 + y, x0 + x, ch);
    return out;
}

Image resize_bilinear(const Image& im, int oh, int ow) {
    if (oh == im.h && ow == im.w) return im;
    Image out(oh, ow, im.c);
    const double sy = static_cast<double>(im.h) / oh;
    const double sx = static_cast<double>(im.w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(im.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, im.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(im.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, im.w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < im.c; ++ch) {
                const double top = im.at(y0, x0, ch) * (1.0 - wx) + im.at(y0, x1, ch) * wx;
                const double bot = im.at(y1, x0, ch) * (1.0 - wx) + im.at(y1, x1, ch) * wx;
                out.at(y, x, ch) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

void clamp01(Image& im) {
    for (double& v : im.px) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(Image& im, double factor) {
    for (double& v : im.px) v *= factor;
    clamp01(im);
}

void adjust_contrast(Image& im, double factor) {
    double mean = 0.0;
    for (double v : im.px) mean += v;
    mean /= static_cast<double>(im.px.size());
    for (double& v : im.px) v = mean + (v - mean) * factor;
    clamp01(im);
}

void adjust_saturation(Image& im, double factor) {
    if (im.c != 3) return;  // grayscale has no chroma to scale
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            const double luma = 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) +
                                0.114 * im.at(y, x, 2);
            for (int ch = 0; ch < 3; ++ch)
                im.at(y, x, ch) = luma + (im.at(y, x, ch) - luma) * factor;
        }
    clamp01(im);
}

}  // namespace geos
