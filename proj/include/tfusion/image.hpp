#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfusion/tensor.hpp"

namespace tfusion {

struct GrayImage {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> pixels;  // row-major

    GrayImage() = default;
    GrayImage(int64_t w, int64_t h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w * h), fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: non-positive size");
    }

    uint8_t& at(int64_t x, int64_t y) { return pixels[static_cast<size_t>(y * width + x)]; }
    uint8_t at(int64_t x, int64_t y) const { return pixels[static_cast<size_t>(y * width + x)]; }

    bool operator==(const GrayImage& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

// --- PGM P5 -----------------------------------------------------------------

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

namespace detail {
inline int64_t pgm_token(std::istream& is, const std::string& path) {
    // skips whitespace and # comments
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("read_pgm: malformed header in " + path);
    int64_t v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}
}  // namespace detail

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("read_pgm: not a P5 file: " + path);
    const int64_t w = detail::pgm_token(is, path);
    const int64_t h = detail::pgm_token(is, path);
    const int64_t maxval = detail::pgm_token(is, path);
    if (maxval != 255) throw std::runtime_error("read_pgm: unsupported maxval in " + path);
    GrayImage img(w, h);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw std::runtime_error("read_pgm: truncated pixel data in " + path);
    return img;
}

// --- preprocessing ops ------------------------------------------------------

inline GrayImage center_crop(const GrayImage& img, int64_t out_w, int64_t out_h) {
    if (out_w > img.width || out_h > img.height)
        throw std::invalid_argument("center_crop: target " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                                    " exceeds source " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height));
    const int64_t x0 = (img.width - out_w) / 2;
    const int64_t y0 = (img.height - out_h) / 2;
    GrayImage out(out_w, out_h);
    for (int64_t y = 0; y < out_h; ++y)
        std::copy_n(img.pixels.data() + (y0 + y) * img.width + x0, out_w, out.pixels.data() + y * out_w);
    return out;
}

namespace detail {

// symmetric reflection index (edge pixel repeats): n=4 maps 4,5,6 -> 3,2,1
inline int64_t reflect_index(int64_t i, int64_t n) {
    if (i < n) return i;
    const int64_t r = 2 * n - 1 - i;
    return r < 0 ? 0 : r;
}

// Per-tile CLAHE lookup table. Integer clip threshold and integer excess
// redistribution keep histogram mass exactly conserved; remainder goes one
// count each to bins 0 upward.
inline void clahe_tile_lut(const uint8_t* pixels, int64_t img_w, int64_t tx0, int64_t ty0, int64_t tw,
                           int64_t th, double clip_limit, uint8_t* lut) {
    const int64_t tile_pixels = tw * th;
    int64_t hist[256] = {0};
    for (int64_t y = 0; y < th; ++y)
        for (int64_t x = 0; x < tw; ++x) ++hist[pixels[(ty0 + y) * img_w + tx0 + x]];

    const int64_t clip = std::max<int64_t>(
        1, static_cast<int64_t>(std::floor(clip_limit * static_cast<double>(tile_pixels) / 256.0)));
    int64_t excess = 0;
    for (int64_t& b : hist) {
        if (b > clip) {
            excess += b - clip;
            b = clip;
        }
    }
    const int64_t base = excess / 256;
    const int64_t rem = excess % 256;
    for (int64_t i = 0; i < 256; ++i) hist[i] += base + (i < rem ? 1 : 0);

    int64_t cdf = 0, cdf_min = 0;
    int64_t cdfs[256];
    for (int64_t i = 0; i < 256; ++i) {
        cdf += hist[i];
        cdfs[i] = cdf;
        if (cdf_min == 0 && cdf > 0) cdf_min = cdf;
    }
    if (cdf_min == tile_pixels) {
        // all mass at one leading value; mapping degenerates to identity
        for (int64_t v = 0; v < 256; ++v) lut[v] = static_cast<uint8_t>(v);
        return;
    }
    const double denom = static_cast<double>(tile_pixels - cdf_min);
    for (int64_t v = 0; v < 256; ++v) {
        const double m = std::floor(static_cast<double>(cdfs[v] - cdf_min) / denom * 255.0 + 0.5);
        lut[v] = static_cast<uint8_t>(std::clamp(m, 0.0, 255.0));
    }
}

}  // namespace detail

inline GrayImage clahe(const GrayImage& img, int64_t tiles_x, int64_t tiles_y, double clip_limit) {
    if (tiles_x < 1 || tiles_y < 1)
        throw std::invalid_argument("clahe: non-positive tile count " + std::to_string(tiles_x) + "x" +
                                    std::to_string(tiles_y));
    if (clip_limit < 1.0)
        throw std::invalid_argument("clahe: clip limit " + std::to_string(clip_limit) + " below 1");

    if (img.width % tiles_x != 0 || img.height % tiles_y != 0) {
        const int64_t pw = (img.width + tiles_x - 1) / tiles_x * tiles_x;
        const int64_t ph = (img.height + tiles_y - 1) / tiles_y * tiles_y;
        GrayImage padded(pw, ph);
        for (int64_t y = 0; y < ph; ++y) {
            const int64_t sy = detail::reflect_index(y, img.height);
            for (int64_t x = 0; x < pw; ++x) padded.at(x, y) = img.at(detail::reflect_index(x, img.width), sy);
        }
        GrayImage eq = clahe(padded, tiles_x, tiles_y, clip_limit);
        GrayImage out(img.width, img.height);
        for (int64_t y = 0; y < img.height; ++y)
            std::copy_n(eq.pixels.data() + y * pw, img.width, out.pixels.data() + y * img.width);
        return out;
    }

    const int64_t tw = img.width / tiles_x;
    const int64_t th = img.height / tiles_y;
    std::vector<uint8_t> luts(static_cast<size_t>(tiles_x * tiles_y * 256));
    for (int64_t tj = 0; tj < tiles_y; ++tj)
        for (int64_t ti = 0; ti < tiles_x; ++ti)
            detail::clahe_tile_lut(img.pixels.data(), img.width, ti * tw, tj * th, tw, th, clip_limit,
                                   luts.data() + (tj * tiles_x + ti) * 256);

    GrayImage out(img.width, img.height);
    for (int64_t y = 0; y < img.height; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(th) - 0.5;
        int64_t j0, j1;
        double wy;
        if (fy <= 0.0) {
            j0 = j1 = 0;
            wy = 0.0;
        } else if (fy >= static_cast<double>(tiles_y - 1)) {
            j0 = j1 = tiles_y - 1;
            wy = 0.0;
        } else {
            j0 = static_cast<int64_t>(std::floor(fy));
            j1 = j0 + 1;
            wy = fy - static_cast<double>(j0);
        }
        for (int64_t x = 0; x < img.width; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(tw) - 0.5;
            int64_t i0, i1;
            double wx;
            if (fx <= 0.0) {
                i0 = i1 = 0;
                wx = 0.0;
            } else if (fx >= static_cast<double>(tiles_x - 1)) {
                i0 = i1 = tiles_x - 1;
                wx = 0.0;
            } else {
                i0 = static_cast<int64_t>(std::floor(fx));
                i1 = i0 + 1;
                wx = fx - static_cast<double>(i0);
            }
            const uint8_t v = img.at(x, y);
            const double v00 = luts[static_cast<size_t>((j0 * tiles_x + i0) * 256 + v)];
            const double v01 = luts[static_cast<size_t>((j0 * tiles_x + i1) * 256 + v)];
            const double v10 = luts[static_cast<size_t>((j1 * tiles_x + i0) * 256 + v)];
            const double v11 = luts[static_cast<size_t>((j1 * tiles_x + i1) * 256 + v)];
            const double blended = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
            out.at(x, y) = static_cast<uint8_t>(std::clamp(std::floor(blended + 0.5), 0.0, 255.0));
        }
    }
    return out;
}

// Source coordinate (d+0.5)*(in/out)-0.5 clamped to the valid range, bilinear
// blend, round half up.
inline GrayImage resize_bilinear(const GrayImage& img, int64_t out_w, int64_t out_h) {
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: non-positive target size");
    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
    const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
    for (int64_t yd = 0; yd < out_h; ++yd) {
        double ys = (static_cast<double>(yd) + 0.5) * sy - 0.5;
        ys = std::clamp(ys, 0.0, static_cast<double>(img.height - 1));
        const int64_t y0 = static_cast<int64_t>(std::floor(ys));
        const int64_t y1 = std::min(y0 + 1, img.height - 1);
        const double wy = ys - static_cast<double>(y0);
        for (int64_t xd = 0; xd < out_w; ++xd) {
            double xs = (static_cast<double>(xd) + 0.5) * sx - 0.5;
            xs = std::clamp(xs, 0.0, static_cast<double>(img.width - 1));
            const int64_t x0 = static_cast<int64_t>(std::floor(xs));
            const int64_t x1 = std::min(x0 + 1, img.width - 1);
            const double wx = xs - static_cast<double>(x0);
            const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
            const double bot = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
            const double v = (1.0 - wy) * top + wy * bot;
            out.at(xd, yd) = static_cast<uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
    }
    return out;
}

// --- pipeline ---------------------------------------------------------------

struct PipelineConfig {
    int64_t crop_w = 256;
    int64_t crop_h = 256;
    int64_t clahe_tiles_x = 8;
    int64_t clahe_tiles_y = 8;
    double clahe_clip = 2.0;
    int64_t out_size = 256;
    // fixed stage order, asserted by consumers via manifest metadata
    std::vector<std::string> order = {"center_crop", "clahe", "resize"};

    void validate() const {
        const std::vector<std::string> expected = {"center_crop", "clahe", "resize"};
        if (order != expected) {
            std::string got;
            for (const std::string& s : order) got += (got.empty() ? "" : ",") + s;
            throw std::invalid_argument("pipeline: stage order [" + got + "], expected [center_crop,clahe,resize]");
        }
        if (crop_w < 1 || crop_h < 1 || out_size < 1) throw std::invalid_argument("pipeline: non-positive size");
    }
};

inline GrayImage apply_pipeline(const GrayImage& img, const PipelineConfig& cfg) {
    cfg.validate();
    GrayImage out = center_crop(img, cfg.crop_w, cfg.crop_h);
    out = clahe(out, cfg.clahe_tiles_x, cfg.clahe_tiles_y, cfg.clahe_clip);
    return resize_bilinear(out, cfg.out_size, cfg.out_size);
}

// [1,S,S] float tensor scaled to [0,1]
inline Tensor to_model_input(const GrayImage& img, int64_t expected = 256) {
    if (img.width != expected || img.height != expected)
        throw std::invalid_argument("to_model_input: image " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + ", expected " + std::to_string(expected) + "x" +
                                    std::to_string(expected));
    Tensor t = Tensor::zeros({1, expected, expected});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(img.pixels[static_cast<size_t>(i)]) / 255.0f;
    return t;
}

}  // namespace tfusion
