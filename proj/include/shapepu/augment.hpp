#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "autodiff.hpp"
#include "grid.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace shapepu {

// The 8 exact pixel-permutation symmetries of the square: optional horizontal
// flip applied first, then a counterclockwise quarter-turn rotation.
enum class Dihedral : int {
    r0 = 0,
    r90,
    r180,
    r270,
    fr0,
    fr90,
    fr180,
    fr270,
};

inline constexpr int kDihedralCount = 8;

inline int rot_of(Dihedral t) { return static_cast<int>(t) % 4; }
inline bool flip_of(Dihedral t) { return static_cast<int>(t) >= 4; }

// maps output coordinates (y,x) of the transformed grid back to the source
// grid; output of an odd rotation of (h,w) has shape (w,h)
inline void dihedral_source(Dihedral t, int h, int w, int y, int x, int& sy, int& sx) {
    int yy, xx;
    switch (rot_of(t)) {
        case 0: yy = y; xx = x; break;
        case 1: yy = x; xx = w - 1 - y; break;
        case 2: yy = h - 1 - y; xx = w - 1 - x; break;
        default: yy = h - 1 - x; xx = y; break;
    }
    if (flip_of(t)) xx = w - 1 - xx;
    sy = yy;
    sx = xx;
}

inline void dihedral_out_dims(Dihedral t, int h, int w, int& oh, int& ow) {
    if (rot_of(t) % 2 == 1) {
        oh = w;
        ow = h;
    } else {
        oh = h;
        ow = w;
    }
}

template <typename T>
Grid<T> apply_dihedral(const Grid<T>& g, Dihedral t) {
    int oh, ow;
    dihedral_out_dims(t, g.height, g.width, oh, ow);
    Grid<T> out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int sy, sx;
            dihedral_source(t, g.height, g.width, y, x, sy, sx);
            out.at(y, x) = g.at(sy, sx);
        }
    return out;
}

// spatial permutation of a rank-4 tensor, channel planes transformed alike
template <typename T>
Tensor<T> apply_dihedral(const Tensor<T>& in, Dihedral t) {
    if (in.shape.rank() != 4) throw std::invalid_argument("apply_dihedral: expected rank-4 tensor");
    const int N = in.shape.dim(0), C = in.shape.dim(1), H = in.shape.dim(2), W = in.shape.dim(3);
    int oh, ow;
    dihedral_out_dims(t, H, W, oh, ow);
    Tensor<T> out(Shape{N, C, oh, ow});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    int sy, sx;
                    dihedral_source(t, H, W, y, x, sy, sx);
                    out.at4(n, c, y, x) = in.at4(n, c, sy, sx);
                }
    return out;
}

namespace detail {

// probe-based group tables; every element is distinguishable on a 4x4 grid
inline Grid<int> dihedral_probe(Dihedral t) {
    Grid<int> g(4, 4);
    for (int i = 0; i < 16; ++i) g.v[i] = i;
    return apply_dihedral(g, t);
}

inline std::array<std::array<int, 8>, 8> build_compose_table() {
    std::array<std::array<int, 8>, 8> table{};
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            // c = b∘a: apply a first, then b
            Grid<int> probe = apply_dihedral(dihedral_probe(static_cast<Dihedral>(a)),
                                             static_cast<Dihedral>(b));
            int found = -1;
            for (int c = 0; c < 8; ++c)
                if (dihedral_probe(static_cast<Dihedral>(c)) == probe) found = c;
            table[a][b] = found;
        }
    return table;
}

}  // namespace detail

// compose(a, b): the element equal to applying a first, then b
inline Dihedral compose(Dihedral a, Dihedral b) {
    static const auto table = detail::build_compose_table();
    return static_cast<Dihedral>(table[static_cast<int>(a)][static_cast<int>(b)]);
}

inline Dihedral inverse(Dihedral t) {
    for (int c = 0; c < 8; ++c)
        if (compose(t, static_cast<Dihedral>(c)) == Dihedral::r0) return static_cast<Dihedral>(c);
    throw std::logic_error("dihedral inverse not found");
}

// graph op: spatial permutation, backward applies the inverse permutation
template <typename T>
NodePtr<T> dihedral(const NodePtr<T>& a, Dihedral t) {
    Tensor<T> v = apply_dihedral(a->value, t);
    const Dihedral inv = inverse(t);
    return make_op<T>(std::move(v), {a}, [a, inv](Node<T>& n) {
        a->accumulate(apply_dihedral(n.grad, inv));
    });
}

// ---------------------------------------------------------------------------
// Cutout
// ---------------------------------------------------------------------------

// Binary cutout mask z (0 inside the cut square) plus a dihedral transform T.
// Together they define the perturbed input X' = T(z ⊙ X).
struct CutoutAugmentation {
    Grid<uint8_t> mask;  // H×W, 0 inside the square
    int square_size = 0;
    int top = 0, left = 0;
    Dihedral transform = Dihedral::r0;
    uint64_t seed = 0;
};

inline CutoutAugmentation sample_augmentation(int height, int width, int square_size, Rng& rng,
                                              uint64_t seed_tag = 0) {
    if (square_size > std::min(height, width))
        throw std::invalid_argument("sample_augmentation: square size " +
                                    std::to_string(square_size) + " exceeds image side");
    CutoutAugmentation aug;
    aug.square_size = square_size;
    aug.seed = seed_tag;
    aug.mask = Grid<uint8_t>(height, width, 1);
    aug.top = square_size < height ? rng.uniform_int(height - square_size + 1) : 0;
    aug.left = square_size < width ? rng.uniform_int(width - square_size + 1) : 0;
    for (int y = aug.top; y < aug.top + square_size; ++y)
        for (int x = aug.left; x < aug.left + square_size; ++x) aug.mask.at(y, x) = 0;
    aug.transform = static_cast<Dihedral>(rng.uniform_int(kDihedralCount));
    return aug;
}

template <typename T>
Tensor<T> mask_tensor(const CutoutAugmentation& aug) {
    Tensor<T> m(Shape{aug.mask.height, aug.mask.width});
    for (size_t i = 0; i < aug.mask.size(); ++i) m[i] = static_cast<T>(aug.mask.v[i]);
    return m;
}

// the mask as seen in the transformed frame, i.e. T(z)
template <typename T>
Tensor<T> transformed_mask_tensor(const CutoutAugmentation& aug) {
    Grid<uint8_t> tz = apply_dihedral(aug.mask, aug.transform);
    Tensor<T> m(Shape{tz.height, tz.width});
    for (size_t i = 0; i < tz.size(); ++i) m[i] = static_cast<T>(tz.v[i]);
    return m;
}

// X' = T(z ⊙ X) on plain tensors (no gradient)
template <typename T>
Tensor<T> apply(const CutoutAugmentation& aug, const Tensor<T>& x) {
    if (x.shape.rank() != 4 || x.shape.dim(2) != aug.mask.height ||
        x.shape.dim(3) != aug.mask.width)
        throw std::invalid_argument("apply: tensor spatial dims do not match cutout mask");
    Tensor<T> masked = x;
    const size_t plane = aug.mask.size();
    const size_t planes = x.numel() / plane;
    for (size_t p = 0; p < planes; ++p)
        for (size_t i = 0; i < plane; ++i)
            if (!aug.mask.v[i]) masked[p * plane + i] = T(0);
    return apply_dihedral(masked, aug.transform);
}

// T(z ⊙ f(X)) on graph nodes; gradients flow through the permutation and mask
template <typename T>
NodePtr<T> apply(const CutoutAugmentation& aug, const NodePtr<T>& x) {
    return dihedral(mask_hw(x, mask_tensor<T>(aug)), aug.transform);
}

// Scribble labels move with the image; labels erased by the cutout square are
// no longer grounded in visible intensity, so they become unlabeled.
inline LabelGrid transform_labels(const CutoutAugmentation& aug, const LabelGrid& labels) {
    if (labels.height != aug.mask.height || labels.width != aug.mask.width)
        throw std::invalid_argument("transform_labels: label dims do not match cutout mask");
    LabelGrid moved = apply_dihedral(labels, aug.transform);
    Grid<uint8_t> tz = apply_dihedral(aug.mask, aug.transform);
    for (size_t i = 0; i < moved.size(); ++i)
        if (!tz.v[i]) moved.v[i] = kUnlabeled;
    return moved;
}

// ---------------------------------------------------------------------------
// Intensity normalization
// ---------------------------------------------------------------------------

// Per-image shift/scale to zero mean and unit variance (population variance).
// A constant image has no scale; it maps to all zeros and sets the flag.
inline ImageGrid normalize_intensity(const ImageGrid& img, bool* constant_flag = nullptr) {
    if (constant_flag) *constant_flag = false;
    const size_t n = img.size();
    if (n == 0) return img;
    double mean = 0;
    for (float v : img.v) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (float v : img.v) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    ImageGrid out(img.height, img.width);
    if (var <= 0.0) {
        if (constant_flag) *constant_flag = true;
        return out;
    }
    const double inv_sd = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < n; ++i) out.v[i] = static_cast<float>((img.v[i] - mean) * inv_sd);
    return out;
}

}  // namespace shapepu
