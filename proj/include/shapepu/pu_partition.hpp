#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "mixture_em.hpp"
#include "tensor.hpp"

namespace shapepu {

// Per-class split of the unlabeled pixels: the round(alpha_j * n_u) pixels
// ranked most likely for class j form the positive set, the rest the negative
// set. Background (class 0) gets no partition. Sets of different classes may
// overlap; only the negative sets enter the loss.
struct PartitionResult {
    int num_classes = 0;
    std::vector<int> unlabeled;                // row-major pixel indices
    std::vector<std::vector<int>> positive;    // indexed by class id, ascending pixel index
    std::vector<std::vector<int>> negative;

    size_t unlabeled_count() const { return unlabeled.size(); }
};

// probmap: (1, C, H, W) or (C, H, W) probability tensor for one image
template <typename T>
PartitionResult partition(const Tensor<T>& probmap, const LabelGrid& scribble,
                          const MixtureRatios& alpha) {
    const int rank = probmap.shape.rank();
    if (rank != 3 && rank != 4)
        throw std::invalid_argument("partition: probability map must be rank 3 or 4");
    const int C = probmap.shape.dim(rank - 3);
    const int H = probmap.shape.dim(rank - 2);
    const int W = probmap.shape.dim(rank - 1);
    if (H != scribble.height || W != scribble.width)
        throw std::invalid_argument("partition: probability map and scribble dims differ");
    if (alpha.size() != static_cast<size_t>(C))
        throw std::invalid_argument("partition: alpha length does not match class count");
    const size_t plane = static_cast<size_t>(H) * W;
    const T* prob = probmap.data.data() + (rank == 4 ? 0 : 0);

    PartitionResult out;
    out.num_classes = C;
    out.positive.resize(C);
    out.negative.resize(C);
    for (size_t i = 0; i < plane; ++i)
        if (scribble.v[i] == kUnlabeled) out.unlabeled.push_back(static_cast<int>(i));
    const size_t n_u = out.unlabeled.size();
    if (n_u == 0) throw std::runtime_error("partition: no unlabeled pixels");

    std::vector<int> order(n_u);
    std::vector<uint8_t> in_positive(n_u);
    for (int cls = 1; cls < C; ++cls) {
        const T* p = prob + static_cast<size_t>(cls) * plane;
        size_t take = static_cast<size_t>(
            std::lround(std::clamp(alpha[cls], 0.0, 1.0) * static_cast<double>(n_u)));
        take = std::min(take, n_u);

        std::iota(order.begin(), order.end(), 0);
        auto ranks_before = [&](int a, int b) {
            const T pa = p[out.unlabeled[a]], pb = p[out.unlabeled[b]];
            if (pa != pb) return pa > pb;
            return out.unlabeled[a] < out.unlabeled[b];
        };
        if (take > 0 && take < n_u)
            std::nth_element(order.begin(), order.begin() + take - 1, order.end(), ranks_before);

        std::fill(in_positive.begin(), in_positive.end(), 0);
        for (size_t k = 0; k < take; ++k) in_positive[order[k]] = 1;
        auto& pos = out.positive[cls];
        auto& neg = out.negative[cls];
        pos.reserve(take);
        neg.reserve(n_u - take);
        for (size_t k = 0; k < n_u; ++k)
            (in_positive[k] ? pos : neg).push_back(out.unlabeled[k]);
    }
    return out;
}

}  // namespace shapepu
