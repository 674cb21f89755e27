#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "grid.hpp"

namespace shapepu {

inline constexpr double kEdtInf = 1e18;

namespace edt_detail {

// Felzenszwalb-Huttenlocher 1-D squared distance transform
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * static_cast<double>(q - v[k]) + f[v[k]];
    }
}

}  // namespace edt_detail

// exact squared Euclidean distance to the nearest nonzero pixel of `set`
inline Grid<double> squared_edt(const Grid<uint8_t>& set) {
    const int H = set.height, W = set.width;
    Grid<double> dist(H, W);
    for (size_t i = 0; i < set.size(); ++i) dist.v[i] = set.v[i] ? 0.0 : kEdtInf;

    const int n = std::max(H, W);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int x = 0; x < W; ++x) {
        for (int y = 0; y < H; ++y) f[y] = dist.at(y, x);
        edt_detail::edt_1d(f, d, v, z, H);
        for (int y = 0; y < H; ++y) dist.at(y, x) = d[y];
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) f[x] = dist.at(y, x);
        edt_detail::edt_1d(f, d, v, z, W);
        for (int x = 0; x < W; ++x) dist.at(y, x) = d[x];
    }
    return dist;
}

// squared distance from each region pixel to the region boundary (frame edges
// count as boundary); zero outside the region
inline Grid<double> interior_depth(const Grid<uint8_t>& region) {
    Grid<uint8_t> complement(region.height, region.width);
    for (size_t i = 0; i < region.size(); ++i) complement.v[i] = region.v[i] ? 0 : 1;
    Grid<double> depth = squared_edt(complement);
    // account for the frame border as boundary
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x) {
            const double edge = 1.0 + std::min(std::min(y, region.height - 1 - y),
                                               std::min(x, region.width - 1 - x));
            depth.at(y, x) = region.at(y, x) ? std::min(depth.at(y, x), edge * edge) : 0.0;
        }
    return depth;
}

}  // namespace shapepu
