#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "u3m/error.hpp"

namespace u3m {

/// 8-bit raster, row-major from the top-left, channels interleaved.
/// channels == 1 maps to PGM (P5), channels == 3 to PPM (P6), maxval 255.
struct Raster {
    size_t rows = 0;
    size_t cols = 0;
    size_t channels = 1;
    std::vector<uint8_t> px;

    uint8_t at(size_t r, size_t c, size_t ch = 0) const { return px[(r * cols + c) * channels + ch]; }
    uint8_t& at(size_t r, size_t c, size_t ch = 0) { return px[(r * cols + c) * channels + ch]; }
};

namespace detail {
inline void skip_pbm_space(const std::vector<uint8_t>& b, size_t& i) {
    for (;;) {
        while (i < b.size() && (b[i] == ' ' || b[i] == '\t' || b[i] == '\r' || b[i] == '\n')) ++i;
        if (i < b.size() && b[i] == '#') {
            while (i < b.size() && b[i] != '\n') ++i;
            continue;
        }
        return;
    }
}

inline size_t read_pbm_int(const std::vector<uint8_t>& b, size_t& i) {
    skip_pbm_space(b, i);
    if (i >= b.size() || b[i] < '0' || b[i] > '9') throw data_error("malformed NetPBM header");
    size_t v = 0;
    while (i < b.size() && b[i] >= '0' && b[i] <= '9') {
        v = v * 10 + (b[i] - '0');
        ++i;
    }
    return v;
}
}  // namespace detail

/// Binary P5/P6 decoder, maxval 255 only.
inline Raster decode_netpbm(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw data_error("not a binary P5/P6 NetPBM file");
    Raster r;
    r.channels = bytes[1] == '6' ? 3 : 1;
    size_t i = 2;
    r.cols = detail::read_pbm_int(bytes, i);
    r.rows = detail::read_pbm_int(bytes, i);
    size_t maxval = detail::read_pbm_int(bytes, i);
    if (maxval != 255) throw data_error("NetPBM maxval " + std::to_string(maxval) + " unsupported (need 255)");
    if (i >= bytes.size()) throw data_error("truncated NetPBM header");
    ++i;  // single whitespace byte after maxval
    size_t need = r.rows * r.cols * r.channels;
    if (bytes.size() - i < need) throw data_error("truncated NetPBM payload");
    r.px.assign(bytes.begin() + static_cast<long>(i), bytes.begin() + static_cast<long>(i + need));
    return r;
}

/// Canonical encoder: "P5\n<w> <h>\n255\n" + payload. decode(encode(x)) is
/// the identity and encode(decode(y)) == y for canonically written y.
inline std::vector<uint8_t> encode_netpbm(const Raster& r) {
    if (r.channels != 1 && r.channels != 3) throw data_error("NetPBM supports 1 or 3 channels");
    if (r.px.size() != r.rows * r.cols * r.channels) throw data_error("raster payload size mismatch");
    std::string header = std::string(r.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(r.cols) + " " +
                         std::to_string(r.rows) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), r.px.begin(), r.px.end());
    return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!out) throw io_error("short write to " + path.string());
}

inline Raster read_netpbm(const std::filesystem::path& path) { return decode_netpbm(read_file_bytes(path)); }
inline void write_netpbm(const std::filesystem::path& path, const Raster& r) {
    write_file_bytes(path, encode_netpbm(r));
}

}  // namespace u3m
