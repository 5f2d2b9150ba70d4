#include "core/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace masknet {

Image make_image(int width, int height, uint8_t r, uint8_t g, uint8_t b) {
    if (width < 1 || height < 1)
        fail(ErrorCode::invalid_argument, "image extents must be >= 1");
    Image img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(3) * width * height);
    for (size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

namespace {

// Reads one whitespace-delimited unsigned header token, skipping '#'
// comments. Returns false at end of input.
bool next_header_token(const uint8_t* data, size_t size, size_t& pos, uint64_t& value) {
    while (pos < size) {
        const uint8_t c = data[pos];
        if (c == '#') {
            while (pos < size && data[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= size) return false;
    if (data[pos] < '0' || data[pos] > '9')
        fail(ErrorCode::parse, "PPM header: expected a number at byte " + std::to_string(pos));
    value = 0;
    while (pos < size && data[pos] >= '0' && data[pos] <= '9') {
        value = value * 10 + (data[pos] - '0');
        if (value > 1u << 30) fail(ErrorCode::parse, "PPM header: number out of range");
        ++pos;
    }
    return true;
}

} // namespace

Image decode_ppm(const uint8_t* data, size_t size) {
    if (size < 2 || data[0] != 'P' || data[1] != '6') {
        const std::string magic(reinterpret_cast<const char*>(data),
                                std::min<size_t>(size, 2));
        fail(ErrorCode::unsupported, "unsupported image magic '" + magic + "' (want binary PPM P6)");
    }
    size_t pos = 2;
    uint64_t w = 0, h = 0, maxval = 0;
    if (!next_header_token(data, size, pos, w) || !next_header_token(data, size, pos, h) ||
        !next_header_token(data, size, pos, maxval))
        fail(ErrorCode::parse, "PPM header ends before width/height/maxval");
    if (w < 1 || h < 1) fail(ErrorCode::parse, "PPM extents must be >= 1");
    if (maxval != 255)
        fail(ErrorCode::data, "PPM maxval " + std::to_string(maxval) + " unsupported (want 255)");
    // exactly one whitespace byte separates the header from pixel data
    if (pos >= size || !(data[pos] == ' ' || data[pos] == '\t' || data[pos] == '\r' ||
                         data[pos] == '\n'))
        fail(ErrorCode::parse, "PPM header not terminated by whitespace");
    ++pos;
    const size_t need = 3 * static_cast<size_t>(w) * static_cast<size_t>(h);
    if (size - pos < need)
        fail(ErrorCode::truncated, "PPM pixel data short: have " + std::to_string(size - pos) +
                                       " bytes, need " + std::to_string(need));
    Image img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixels.assign(data + pos, data + pos + need);
    return img;
}

Image decode_ppm(const std::vector<uint8_t>& bytes) {
    return decode_ppm(bytes.data(), bytes.size());
}

std::vector<uint8_t> encode_ppm(const Image& img) {
    const std::string header = "P6\n" + std::to_string(img.width) + " " +
                               std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

Image load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (f.bad()) fail(ErrorCode::io, "failed reading '" + path + "'");
    return decode_ppm(bytes);
}

void save_ppm(const Image& img, const std::string& path) {
    const std::vector<uint8_t> bytes = encode_ppm(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorCode::io, "failed writing '" + path + "'");
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        fail(ErrorCode::invalid_argument, "resize extents must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    Image out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(static_cast<size_t>(3) * out_w * out_h);
    const double sx_scale = static_cast<double>(img.width) / out_w;
    const double sy_scale = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double sy = (y + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            double sx = (x + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;
            const uint8_t* p00 = img.px(x0, y0);
            const uint8_t* p10 = img.px(x1, y0);
            const uint8_t* p01 = img.px(x0, y1);
            const uint8_t* p11 = img.px(x1, y1);
            uint8_t* dst = out.px(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + (p10[c] - p00[c]) * fx;
                const double bot = p01[c] + (p11[c] - p01[c]) * fx;
                const double v = top + (bot - top) * fy;
                dst[c] = static_cast<uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
            }
        }
    }
    return out;
}

Tensor normalize(const Image& img) {
    Tensor t(Shape4{1, 3, img.height, img.width});
    const int64_t hw = static_cast<int64_t>(img.height) * img.width;
    for (int64_t i = 0; i < hw; ++i) {
        const uint8_t* p = img.pixels.data() + 3 * i;
        t[i] = p[0] / 127.5f - 1.0f;
        t[hw + i] = p[1] / 127.5f - 1.0f;
        t[2 * hw + i] = p[2] / 127.5f - 1.0f;
    }
    return t;
}

Image crop(const Image& img, int x, int y, int w, int h) {
    if (w < 1 || h < 1 || x < 0 || y < 0 || x + w > img.width || y + h > img.height)
        fail(ErrorCode::invalid_argument,
             "crop (" + std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(w) +
                 "," + std::to_string(h) + ") outside " + std::to_string(img.width) + "x" +
                 std::to_string(img.height) + " image");
    Image out;
    out.width = w;
    out.height = h;
    out.pixels.resize(static_cast<size_t>(3) * w * h);
    for (int row = 0; row < h; ++row)
        std::memcpy(out.px(0, row), img.px(x, y + row), static_cast<size_t>(3) * w);
    return out;
}

} // namespace masknet
