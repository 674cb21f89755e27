#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "edt.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace shapepu {

// ---------------------------------------------------------------------------
// Synthetic multi-class phantom: bright disk inside a ring, with a crescent
// hugging the ring from outside. Class ids: 0 background, 1 disk, 2 ring,
// 3 crescent. Intensities are class mean + smooth bias field + Gaussian noise,
// so the class-conditional densities are known exactly.
// ---------------------------------------------------------------------------

// geometry bounds as fractions of the image side (shared with test oracles)
namespace phantom_bounds {
inline constexpr double kCenterLo = 0.40, kCenterHi = 0.60;
inline constexpr double kDiskRadiusLo = 0.095, kDiskRadiusHi = 0.135;
inline constexpr double kRingWidthLo = 0.055, kRingWidthHi = 0.095;
inline constexpr double kCrescentRadiusLo = 0.10, kCrescentRadiusHi = 0.16;
inline constexpr double kCrescentOverlapLo = 0.35, kCrescentOverlapHi = 0.60;
inline constexpr int kFrameMargin = 2;
inline constexpr int kMinCrescentPixels = 30;
}  // namespace phantom_bounds

struct PhantomSpec {
    int size = 96;
    int num_foreground = 3;                               // 1 = disk, 2 = +ring, 3 = +crescent
    std::vector<float> class_mean = {0.20f, 0.95f, 0.55f, 0.75f};  // background first
    std::vector<float> class_sigma = {0.035f, 0.035f, 0.035f, 0.035f};
    float bias_amplitude = 0.06f;
    uint64_t seed = 0;
    bool allow_missing_classes = false;
    int scribble_border_band = 8;  // background scribbles live this close to the edge

    int num_classes() const { return num_foreground + 1; }

    void validate() const {
        if (size < 32) throw std::invalid_argument("PhantomSpec: size must be at least 32");
        if (num_foreground < 1 || num_foreground > 3)
            throw std::invalid_argument("PhantomSpec: foreground class count must be 1..3");
        if (static_cast<int>(class_mean.size()) < num_classes() ||
            static_cast<int>(class_sigma.size()) < num_classes())
            throw std::invalid_argument("PhantomSpec: per-class mean/sigma lists too short");
    }
};

struct Sample {
    ImageGrid image;
    LabelGrid mask;      // full ground truth, class per pixel
    LabelGrid scribble;  // sparse labels, kUnlabeled elsewhere
    ImageGrid bias;      // additive bias field used at generation time
    std::vector<double> true_ratios;  // class frequency over unlabeled pixels
};

// ---------------------------------------------------------------------------
// Binary morphology helpers
// ---------------------------------------------------------------------------

namespace morph {

// erosion by a Euclidean disk of the given radius; out-of-frame counts as background
inline Grid<uint8_t> erode(const Grid<uint8_t>& region, int radius) {
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offsets.emplace_back(dy, dx);
    Grid<uint8_t> out(region.height, region.width, 0);
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x) {
            if (!region.at(y, x)) continue;
            bool keep = true;
            for (auto [dy, dx] : offsets) {
                const int yy = y + dy, xx = x + dx;
                if (!region.in_bounds(yy, xx) || !region.at(yy, xx)) {
                    keep = false;
                    break;
                }
            }
            out.at(y, x) = keep ? 1 : 0;
        }
    return out;
}

// Medial-axis approximation: region pixels whose interior depth is a local
// maximum along the x or the y axis. Scales with structure size for blobs
// (cross through a disk) and traces the centerline of elongated regions.
inline Grid<uint8_t> skeletonize(const Grid<uint8_t>& region) {
    const Grid<double> depth = interior_depth(region);
    Grid<uint8_t> skel(region.height, region.width, 0);
    auto d = [&](int y, int x) {
        return region.in_bounds(y, x) ? depth.at(y, x) : 0.0;
    };
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x) {
            if (!region.at(y, x)) continue;
            const double c = depth.at(y, x);
            const bool row_max = c > d(y, x - 1) && c >= d(y, x + 1);
            const bool col_max = c > d(y - 1, x) && c >= d(y + 1, x);
            skel.at(y, x) = (row_max || col_max) ? 1 : 0;
        }
    return skel;
}

inline std::pair<int, int> deepest_pixel(const Grid<uint8_t>& region) {
    const Grid<double> depth = interior_depth(region);
    std::pair<int, int> best{region.height / 2, region.width / 2};
    double best_d = -1;
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x)
            if (region.at(y, x) && depth.at(y, x) > best_d) {
                best_d = depth.at(y, x);
                best = {y, x};
            }
    return best;
}

}  // namespace morph

// ---------------------------------------------------------------------------
// Scribbles
// ---------------------------------------------------------------------------

namespace detail {

// Self-avoiding walk inside `support`, steering toward the deepest unvisited
// neighbor (random tie-break). Follows centerlines of elongated regions and
// curls through blobs, like a hand-drawn scribble.
inline std::vector<std::pair<int, int>> depth_walk(const Grid<uint8_t>& support,
                                                   const Grid<double>& depth,
                                                   const std::vector<std::pair<int, int>>& starts,
                                                   int target_len, Rng& rng) {
    if (starts.empty()) return {};
    std::vector<std::pair<int, int>> best;
    for (int attempt = 0; attempt < 8 && static_cast<int>(best.size()) < target_len; ++attempt) {
        Grid<uint8_t> visited(support.height, support.width, 0);
        auto cur = starts[rng.uniform_int(static_cast<int>(starts.size()))];
        std::vector<std::pair<int, int>> path{cur};
        visited.at(cur.first, cur.second) = 1;
        while (static_cast<int>(path.size()) < target_len) {
            std::vector<std::pair<int, int>> deepest;
            double best_depth = -1;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dy && !dx) continue;
                    const int yy = cur.first + dy, xx = cur.second + dx;
                    if (!support.in_bounds(yy, xx) || !support.at(yy, xx) || visited.at(yy, xx))
                        continue;
                    const double d = depth.at(yy, xx);
                    if (d > best_depth) {
                        best_depth = d;
                        deepest.clear();
                    }
                    if (d == best_depth) deepest.emplace_back(yy, xx);
                }
            if (deepest.empty()) break;
            cur = deepest[rng.uniform_int(static_cast<int>(deepest.size()))];
            visited.at(cur.first, cur.second) = 1;
            path.push_back(cur);
        }
        if (path.size() > best.size()) best = path;
    }
    return best;
}

}  // namespace detail

// One connected curve per present class, strictly inside the class region
// eroded by radius 2, with length drawn from 20..60% of the region skeleton.
// Background scribbles are confined to a band along the image border.
inline LabelGrid draw_scribbles(const LabelGrid& mask, Rng& rng, int num_classes,
                                int border_band = 8) {
    LabelGrid scribble(mask.height, mask.width, kUnlabeled);
    for (int cls = 0; cls < num_classes; ++cls) {
        Grid<uint8_t> region(mask.height, mask.width, 0);
        int count = 0;
        for (int y = 0; y < mask.height; ++y)
            for (int x = 0; x < mask.width; ++x) {
                const bool in_class = mask.at(y, x) == cls;
                const bool in_band = cls != 0 || y < border_band || x < border_band ||
                                     y >= mask.height - border_band || x >= mask.width - border_band;
                if (in_class && in_band) {
                    region.at(y, x) = 1;
                    ++count;
                }
            }
        if (count == 0) continue;  // class absent, no scribble

        Grid<uint8_t> eroded = morph::erode(region, 2);
        int eroded_count = 0;
        for (uint8_t v : eroded.v) eroded_count += v;
        if (eroded_count == 0) {
            auto [y, x] = morph::deepest_pixel(region);
            scribble.at(y, x) = static_cast<uint8_t>(cls);
            continue;
        }

        const Grid<uint8_t> skel = morph::skeletonize(region);
        int skel_len = 0;
        for (uint8_t v : skel.v) skel_len += v;
        const int target = std::clamp(
            static_cast<int>(std::lround(rng.uniform(0.35, 0.60) * skel_len)), 1, eroded_count);

        const Grid<double> depth = interior_depth(region);
        std::vector<std::pair<int, int>> starts;
        for (int y = 0; y < mask.height; ++y)
            for (int x = 0; x < mask.width; ++x)
                if (skel.at(y, x) && eroded.at(y, x)) starts.emplace_back(y, x);
        if (starts.empty()) starts.push_back(morph::deepest_pixel(eroded));

        auto path = detail::depth_walk(eroded, depth, starts, target, rng);
        if (path.empty()) path.push_back(morph::deepest_pixel(eroded));
        for (auto [y, x] : path) scribble.at(y, x) = static_cast<uint8_t>(cls);
    }
    return scribble;
}

// exact class frequencies of the full mask over unlabeled pixels
inline std::vector<double> true_unlabeled_ratios(const LabelGrid& mask, const LabelGrid& scribble,
                                                 int num_classes) {
    if (!mask.same_shape(scribble))
        throw std::invalid_argument("true_unlabeled_ratios: mask/scribble shape mismatch");
    std::vector<int64_t> counts(num_classes, 0);
    int64_t total = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (scribble.v[i] != kUnlabeled) continue;
        ++counts[mask.v[i]];
        ++total;
    }
    if (total == 0) throw std::runtime_error("true_unlabeled_ratios: no unlabeled pixels");
    std::vector<double> ratios(num_classes);
    for (int c = 0; c < num_classes; ++c)
        ratios[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
    return ratios;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline Sample generate_phantom(const PhantomSpec& spec, int index) {
    spec.validate();
    if (index < 0) throw std::invalid_argument("generate_phantom: index must be nonnegative");
    namespace pb = phantom_bounds;
    Rng rng(stream_seed(spec.seed, static_cast<uint64_t>(index)));
    const int S = spec.size;
    const double lo = pb::kFrameMargin, hi = S - 1 - pb::kFrameMargin;

    LabelGrid mask(S, S, 0);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        const double cy = rng.uniform(pb::kCenterLo * S, pb::kCenterHi * S);
        const double cx = rng.uniform(pb::kCenterLo * S, pb::kCenterHi * S);
        const double r1 = rng.uniform(pb::kDiskRadiusLo * S, pb::kDiskRadiusHi * S);
        const double r2 = r1 + rng.uniform(pb::kRingWidthLo * S, pb::kRingWidthHi * S);
        double c3y = 0, c3x = 0, r3 = 0;
        if (spec.num_foreground >= 3) {
            const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            r3 = rng.uniform(pb::kCrescentRadiusLo * S, pb::kCrescentRadiusHi * S);
            const double overlap = rng.uniform(pb::kCrescentOverlapLo, pb::kCrescentOverlapHi);
            const double d = r2 + r3 * (1.0 - overlap);
            c3y = cy + d * std::sin(theta);
            c3x = cx + d * std::cos(theta);
            if (c3y - r3 < lo || c3y + r3 > hi || c3x - r3 < lo || c3x + r3 > hi)
                continue;  // crescent would leave the frame
        }
        if (cy - r2 < lo || cy + r2 > hi || cx - r2 < lo || cx + r2 > hi) continue;

        mask = LabelGrid(S, S, 0);
        int crescent_pixels = 0;
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const double dy = y - cy, dx = x - cx;
                const double d2 = dy * dy + dx * dx;
                if (d2 < r1 * r1) {
                    mask.at(y, x) = 1;
                } else if (spec.num_foreground >= 2 && d2 < r2 * r2) {
                    mask.at(y, x) = 2;
                } else if (spec.num_foreground >= 3) {
                    const double ey = y - c3y, ex = x - c3x;
                    if (ey * ey + ex * ex < r3 * r3) {
                        mask.at(y, x) = 3;
                        ++crescent_pixels;
                    }
                }
            }
        placed = spec.num_foreground < 3 || crescent_pixels >= pb::kMinCrescentPixels ||
                 spec.allow_missing_classes;
    }
    if (!placed)
        throw std::runtime_error("generate_phantom: geometry does not fit in a " +
                                 std::to_string(S) + "px frame");

    Sample sample;
    sample.mask = mask;

    // smooth low-frequency bias field: mean of two random plane waves
    const double u1 = rng.uniform(0.4, 1.2), v1 = rng.uniform(0.4, 1.2);
    const double u2 = rng.uniform(0.4, 1.2), v2 = rng.uniform(0.4, 1.2);
    const double ph1 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double ph2 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double tau = 2.0 * 3.14159265358979323846 / S;
    sample.bias = ImageGrid(S, S);
    sample.image = ImageGrid(S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double b = 0.5 * spec.bias_amplitude *
                             (std::sin(tau * (u1 * x + v1 * y) + ph1) +
                              std::sin(tau * (u2 * x + v2 * y) + ph2));
            sample.bias.at(y, x) = static_cast<float>(b);
        }
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const int cls = mask.at(y, x);
            const double noise = rng.normal();  // one draw per pixel, class-independent order
            sample.image.at(y, x) = static_cast<float>(
                spec.class_mean[cls] + sample.bias.at(y, x) + spec.class_sigma[cls] * noise);
        }

    Rng scribble_rng(stream_seed(spec.seed, static_cast<uint64_t>(index), 0xA11CEull));
    sample.scribble = draw_scribbles(mask, scribble_rng, spec.num_classes(), spec.scribble_border_band);
    sample.true_ratios = true_unlabeled_ratios(mask, sample.scribble, spec.num_classes());
    return sample;
}

}  // namespace shapepu
