#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "spn/error.hpp"

namespace spn {

// 8-bit interleaved image buffer; channels is 1 (gray) or 3 (RGB).
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32_be(out, crc);
}

inline int paeth_predictor(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

} // namespace detail

// Non-interlaced 8-bit PNG, filter type 0 on every scanline, zlib-deflated.
inline void write_png(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw InputError("write_png: only gray or RGB images are supported");
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * img.channels)
        throw InputError("write_png: inconsistent image buffer");

    std::vector<std::uint8_t> raw;
    raw.reserve(img.height * (1 + img.width * img.channels));
    for (std::size_t y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        const std::uint8_t* row = &img.pixels[y * img.width * img.channels];
        raw.insert(raw.end(), row, row + img.width * img.channels);
    }

    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                    Z_DEFAULT_COMPRESSION) != Z_OK)
        throw IoError("write_png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> ihdr;
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                        // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);                // color type
    ihdr.push_back(0);                                        // compression
    ihdr.push_back(0);                                        // filter method
    ihdr.push_back(0);                                        // no interlace

    std::vector<std::uint8_t> out(detail::kPngSignature.begin(), detail::kPngSignature.end());
    detail::append_chunk(out, "IHDR", ihdr);
    detail::append_chunk(out, "IDAT", compressed);
    detail::append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_png: cannot open " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: write failed for " + path.string());
}

// Reads non-interlaced 8-bit gray / RGB / RGBA PNGs (any standard per-row
// filter); alpha is dropped on return.
inline Image8 read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_png: cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (data.size() < 8 || !std::equal(detail::kPngSignature.begin(), detail::kPngSignature.end(), data.begin()))
        throw DataError("read_png: not a PNG file: " + path.string());

    std::size_t pos = 8;
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 8 <= data.size() && !seen_iend) {
        const std::uint32_t len = detail::read_u32_be(&data[pos]);
        if (pos + 12 + len > data.size()) throw DataError("read_png: truncated chunk in " + path.string());
        const std::string type(reinterpret_cast<const char*>(&data[pos + 4]), 4);
        const std::uint8_t* payload = &data[pos + 8];
        if (type == "IHDR") {
            if (len != 13) throw DataError("read_png: bad IHDR in " + path.string());
            width = detail::read_u32_be(payload);
            height = detail::read_u32_be(payload + 4);
            const int bit_depth = payload[8], color_type = payload[9], interlace = payload[12];
            if (bit_depth != 8) throw DataError("read_png: only 8-bit PNGs are supported: " + path.string());
            if (interlace != 0) throw DataError("read_png: interlaced PNGs are not supported: " + path.string());
            switch (color_type) {
            case 0: channels = 1; break;
            case 2: channels = 3; break;
            case 6: channels = 4; break;
            default: throw DataError("read_png: unsupported color type: " + path.string());
            }
            seen_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || width == 0 || height == 0) throw DataError("read_png: missing IHDR in " + path.string());
    if (idat.empty()) throw DataError("read_png: missing IDAT in " + path.string());

    const std::size_t stride = width * channels;
    const std::size_t raw_size = height * (1 + stride);
    std::vector<std::uint8_t> raw(raw_size);
    uLongf dst_len = static_cast<uLongf>(raw_size);
    const int rc = ::uncompress(raw.data(), &dst_len, idat.data(), static_cast<uLong>(idat.size()));
    if (rc != Z_OK || dst_len != raw_size)
        throw DataError("read_png: corrupt image data in " + path.string());

    // undo per-row filters in place
    std::vector<std::uint8_t> pixels(height * stride);
    const std::size_t bpp = channels;
    for (std::size_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = &raw[y * (stride + 1) + 1];
        std::uint8_t* cur = &pixels[y * stride];
        const std::uint8_t* prev = y > 0 ? &pixels[(y - 1) * stride] : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= bpp ? cur[x - bpp] : 0;
            const int b = prev ? prev[x] : 0;
            const int c = (prev && x >= bpp) ? prev[x - bpp] : 0;
            int value = src[x];
            switch (filter) {
            case 0: break;
            case 1: value += a; break;
            case 2: value += b; break;
            case 3: value += (a + b) / 2; break;
            case 4: value += detail::paeth_predictor(a, b, c); break;
            default: throw DataError("read_png: unknown filter type in " + path.string());
            }
            cur[x] = static_cast<std::uint8_t>(value & 0xff);
        }
    }

    Image8 img;
    img.width = width;
    img.height = height;
    if (channels == 4) { // drop alpha
        img.channels = 3;
        img.pixels.resize(width * height * 3);
        for (std::size_t p = 0; p < width * height; ++p) {
            img.pixels[p * 3 + 0] = pixels[p * 4 + 0];
            img.pixels[p * 3 + 1] = pixels[p * 4 + 1];
            img.pixels[p * 3 + 2] = pixels[p * 4 + 2];
        }
    } else {
        img.channels = channels;
        img.pixels = std::move(pixels);
    }
    return img;
}

} // namespace spn
