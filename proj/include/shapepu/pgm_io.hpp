#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "grid.hpp"

namespace shapepu {

// Binary PGM (P5). Writes are canonical ("P5\n<w> <h>\n<maxval>\n" + raw
// samples, 16-bit big-endian), so identical grids produce identical bytes.

namespace detail {

inline int pnm_read_token(std::istream& in) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw std::runtime_error("pgm: truncated header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("pgm: malformed header token");
    return value;
}

inline void pnm_read_header(std::istream& in, int& w, int& h, int& maxval) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("pgm: not a P5 file");
    w = pnm_read_token(in);
    h = pnm_read_token(in);
    maxval = pnm_read_token(in);
    // pnm_read_token consumed the single whitespace byte after maxval
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("pgm: invalid header fields");
}

}  // namespace detail

inline void write_pgm8(const std::filesystem::path& path, const Grid<uint8_t>& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot open for write: " + path.string());
    out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(g.v.data()), static_cast<std::streamsize>(g.size()));
    if (!out) throw std::runtime_error("pgm: write failed: " + path.string());
}

inline void write_pgm16(const std::filesystem::path& path, const Grid<uint16_t>& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot open for write: " + path.string());
    out << "P5\n" << g.width << ' ' << g.height << "\n65535\n";
    std::string buf(g.size() * 2, '\0');
    for (size_t i = 0; i < g.size(); ++i) {
        buf[2 * i] = static_cast<char>(g.v[i] >> 8);  // most significant byte first
        buf[2 * i + 1] = static_cast<char>(g.v[i] & 0xFF);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("pgm: write failed: " + path.string());
}

inline Grid<uint8_t> read_pgm8(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open: " + path.string());
    int w, h, maxval;
    detail::pnm_read_header(in, w, h, maxval);
    if (maxval > 255) throw std::runtime_error("pgm: expected 8-bit data: " + path.string());
    Grid<uint8_t> g(h, w);
    in.read(reinterpret_cast<char*>(g.v.data()), static_cast<std::streamsize>(g.size()));
    if (in.gcount() != static_cast<std::streamsize>(g.size()))
        throw std::runtime_error("pgm: truncated pixel data: " + path.string());
    return g;
}

inline Grid<uint16_t> read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open: " + path.string());
    int w, h, maxval;
    detail::pnm_read_header(in, w, h, maxval);
    if (maxval <= 255) throw std::runtime_error("pgm: expected 16-bit data: " + path.string());
    Grid<uint16_t> g(h, w);
    std::string buf(g.size() * 2, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("pgm: truncated pixel data: " + path.string());
    for (size_t i = 0; i < g.size(); ++i)
        g.v[i] = static_cast<uint16_t>((static_cast<uint8_t>(buf[2 * i]) << 8) |
                                       static_cast<uint8_t>(buf[2 * i + 1]));
    return g;
}

}  // namespace shapepu
