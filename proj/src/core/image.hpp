#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace masknet {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;

    uint8_t* px(int x, int y) {
        return pixels.data() + 3 * (static_cast<size_t>(y) * width + x);
    }
    const uint8_t* px(int x, int y) const {
        return pixels.data() + 3 * (static_cast<size_t>(y) * width + x);
    }
    bool operator==(const Image&) const = default;
};

Image make_image(int width, int height, uint8_t r = 0, uint8_t g = 0, uint8_t b = 0);

// Binary PPM (P6, maxval 255) with '#' comments in the header.
Image decode_ppm(const uint8_t* data, size_t size);
Image decode_ppm(const std::vector<uint8_t>& bytes);
// Canonical header: "P6\n<w> <h>\n255\n".
std::vector<uint8_t> encode_ppm(const Image& img);

Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

// Bilinear with half-pixel-center mapping (src = (dst+0.5)*scale - 0.5,
// clamped), rounded to nearest on output.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// x/127.5 - 1 into a (1,3,H,W) tensor, RGB channel order.
Tensor normalize(const Image& img);

Image crop(const Image& img, int x, int y, int w, int h);

} // namespace masknet
