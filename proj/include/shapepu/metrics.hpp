#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "edt.hpp"
#include "grid.hpp"

namespace shapepu {

// 2|A∩B| / (|A|+|B|), with the both-empty convention of 1
inline double dice(const LabelGrid& pred, const LabelGrid& truth, int cls) {
    if (!pred.same_shape(truth)) throw std::invalid_argument("dice: mask shapes differ");
    int64_t a = 0, b = 0, inter = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool in_a = pred.v[i] == cls, in_b = truth.v[i] == cls;
        a += in_a;
        b += in_b;
        inter += in_a && in_b;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

// Symmetric Hausdorff distance between the class's pixel sets under Euclidean
// pixel distance; empty sets make the value undefined rather than an error.
inline std::optional<double> hausdorff(const LabelGrid& pred, const LabelGrid& truth, int cls) {
    if (!pred.same_shape(truth)) throw std::invalid_argument("hausdorff: mask shapes differ");
    Grid<uint8_t> a(pred.height, pred.width), b(pred.height, pred.width);
    int64_t na = 0, nb = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        a.v[i] = pred.v[i] == cls;
        b.v[i] = truth.v[i] == cls;
        na += a.v[i];
        nb += b.v[i];
    }
    if (na == 0 || nb == 0) return std::nullopt;
    const Grid<double> da = squared_edt(a), db = squared_edt(b);
    double worst = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (a.v[i]) worst = std::max(worst, db.v[i]);
        if (b.v[i]) worst = std::max(worst, da.v[i]);
    }
    return std::sqrt(worst);
}

// Keeps, per foreground class, only the largest 8-connected component (ties
// broken toward the component discovered first in row-major order); all other
// pixels of that class become background.
inline LabelGrid keep_largest_component(const LabelGrid& mask, int num_classes) {
    const int H = mask.height, W = mask.width;
    LabelGrid out = mask;
    Grid<int> comp(H, W, -1);
    std::deque<std::pair<int, int>> queue;
    for (int cls = 1; cls < num_classes; ++cls) {
        for (auto& c : comp.v) c = -1;
        int best_comp = -1;
        int64_t best_size = 0;
        int next_id = 0;
        std::vector<int64_t> sizes;
        for (int y0 = 0; y0 < H; ++y0)
            for (int x0 = 0; x0 < W; ++x0) {
                if (mask.at(y0, x0) != cls || comp.at(y0, x0) >= 0) continue;
                const int id = next_id++;
                sizes.push_back(0);
                comp.at(y0, x0) = id;
                queue.emplace_back(y0, x0);
                while (!queue.empty()) {
                    auto [y, x] = queue.front();
                    queue.pop_front();
                    ++sizes[id];
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if ((dy || dx) && mask.in_bounds(yy, xx) &&
                                mask.at(yy, xx) == cls && comp.at(yy, xx) < 0) {
                                comp.at(yy, xx) = id;
                                queue.emplace_back(yy, xx);
                            }
                        }
                }
                if (sizes[id] > best_size) {  // strict: first-anchored wins ties
                    best_size = sizes[id];
                    best_comp = id;
                }
            }
        if (best_comp < 0) continue;
        for (size_t i = 0; i < out.size(); ++i)
            if (mask.v[i] == cls && comp.v[i] != best_comp) out.v[i] = 0;
    }
    return out;
}

struct EvalResult {
    std::vector<double> dice_per_class;                   // index = class id
    std::vector<std::optional<double>> hd_per_class;
    double mean_foreground_dice = 0;
    std::optional<double> mean_foreground_hd;

    static EvalResult compute(const LabelGrid& pred, const LabelGrid& truth, int num_classes) {
        EvalResult r;
        r.dice_per_class.resize(num_classes);
        r.hd_per_class.resize(num_classes);
        double dice_sum = 0, hd_sum = 0;
        int hd_n = 0;
        for (int c = 0; c < num_classes; ++c) {
            r.dice_per_class[c] = dice(pred, truth, c);
            r.hd_per_class[c] = hausdorff(pred, truth, c);
            if (c > 0) {
                dice_sum += r.dice_per_class[c];
                if (r.hd_per_class[c]) {
                    hd_sum += *r.hd_per_class[c];
                    ++hd_n;
                }
            }
        }
        if (num_classes > 1) r.mean_foreground_dice = dice_sum / (num_classes - 1);
        if (hd_n > 0) r.mean_foreground_hd = hd_sum / hd_n;
        return r;
    }
};

}  // namespace shapepu
