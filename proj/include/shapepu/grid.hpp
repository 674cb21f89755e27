#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace shapepu {

// Dense 2-D grid, row-major. Used for raw images and label masks.
template <typename T>
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int h, int w, T fill = T{}) : height(h), width(w), v(static_cast<size_t>(h) * w, fill) {
        if (h < 0 || w < 0) throw std::invalid_argument("Grid: negative dimensions");
    }

    T& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
    const T& at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return height == o.height && width == o.width; }
    bool in_bounds(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }

    bool operator==(const Grid& o) const {
        return height == o.height && width == o.width && v == o.v;
    }
};

using ImageGrid = Grid<float>;
using LabelGrid = Grid<uint8_t>;

// Scribble masks store class ids 0..m; everything else is unlabeled.
inline constexpr uint8_t kUnlabeled = 255;

}  // namespace shapepu
