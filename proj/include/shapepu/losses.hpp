#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "augment.hpp"
#include "autodiff.hpp"
#include "grid.hpp"
#include "pu_partition.hpp"

namespace shapepu {

struct LossWeights {
    double lambda1 = 1.0;   // weight of the negative marginal loss
    double lambda2 = 0.05;  // weight of the global consistency loss
};

enum class TrainPhase { warmup, full };

// Scalar values of the loss terms for one image (or averaged over a batch),
// with the weights that were actually applied. Invariant:
// total = l_plus + lambda1_effective*l_minus + lambda2_effective*l_global.
struct LossReport {
    double l_plus = 0, l_minus = 0, l_global = 0, total = 0;
    double lambda1_effective = 0, lambda2_effective = 0;
    long labeled_pixels = 0;
    long negative_terms = 0;
    long consistency_pixels = 0;
    bool negative_all_empty = false;
    bool negative_no_marginal = false;  // single foreground class, empty marginal sum

    void accumulate(const LossReport& o) {
        l_plus += o.l_plus;
        l_minus += o.l_minus;
        l_global += o.l_global;
        total += o.total;
        lambda1_effective = o.lambda1_effective;
        lambda2_effective = o.lambda2_effective;
        labeled_pixels += o.labeled_pixels;
        negative_terms += o.negative_terms;
        consistency_pixels += o.consistency_pixels;
        negative_all_empty = negative_all_empty || o.negative_all_empty;
        negative_no_marginal = negative_no_marginal || o.negative_no_marginal;
    }
    void scale_values(double s) {
        l_plus *= s;
        l_minus *= s;
        l_global *= s;
        total *= s;
    }
};

inline int count_labeled(const LabelGrid& scribble) {
    int n = 0;
    for (uint8_t v : scribble.v) n += (v != kUnlabeled);
    return n;
}

// Cross entropy summed over labeled pixels only. probmap is the softmax
// output (1,C,H,W); gradients reach unlabeled pixels nowhere.
template <typename T>
NodePtr<T> supervised_loss(const NodePtr<T>& probmap, const LabelGrid& scribble) {
    const Shape& s = probmap->value.shape;
    if (s.rank() != 4 || s.dim(0) != 1)
        throw std::invalid_argument("supervised_loss: expected (1,C,H,W) probability map");
    const int C = s.dim(1);
    const size_t plane = static_cast<size_t>(s.dim(2)) * s.dim(3);
    if (scribble.size() != plane)
        throw std::invalid_argument("supervised_loss: scribble dims do not match probability map");
    double acc = 0;
    long labeled = 0;
    for (size_t px = 0; px < plane; ++px) {
        const uint8_t cls = scribble.v[px];
        if (cls == kUnlabeled) continue;
        if (cls >= C) throw std::invalid_argument("supervised_loss: scribble class out of range");
        ++labeled;
        const double p = probmap->value[static_cast<size_t>(cls) * plane + px];
        acc -= std::log(std::max(p, kLogClampEps));
    }
    if (labeled == 0) throw std::invalid_argument("supervised_loss: no labeled pixels");
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {probmap},
                      [probmap, scribble, C, plane](Node<T>& n) {
                          const T up = n.grad[0];
                          for (size_t px = 0; px < plane; ++px) {
                              const uint8_t cls = scribble.v[px];
                              if (cls == kUnlabeled) continue;
                              const size_t idx = static_cast<size_t>(cls) * plane + px;
                              const double p = probmap->value[idx];
                              if (p > kLogClampEps)
                                  probmap->grad[idx] -= static_cast<T>(up / p);
                          }
                      });
}

struct NegativeLossInfo {
    long terms = 0;
    bool all_empty = false;
    bool no_marginal = false;
};

// Negative marginal loss: for every foreground class j and pixel in its
// predicted-negative set, maximize the summed probability of the other
// foreground classes. Background joins the marginal only when
// include_background is set (the written equation leaves it out).
template <typename T>
NodePtr<T> negative_loss(const NodePtr<T>& probmap, const PartitionResult& part,
                         bool include_background = false, NegativeLossInfo* info = nullptr) {
    const Shape& s = probmap->value.shape;
    if (s.rank() != 4 || s.dim(0) != 1)
        throw std::invalid_argument("negative_loss: expected (1,C,H,W) probability map");
    const int C = s.dim(1);
    if (part.num_classes != C)
        throw std::invalid_argument("negative_loss: partition class count mismatch");
    const size_t plane = static_cast<size_t>(s.dim(2)) * s.dim(3);

    NegativeLossInfo local;
    if (C <= 2 && !include_background) {
        // single foreground class: the fused complement class is an empty sum
        local.no_marginal = true;
        local.all_empty = true;
        if (info) *info = local;
        return make_op<T>(Tensor<T>::scalar(T(0)), {probmap}, [](Node<T>&) {});
    }

    double acc = 0;
    for (int j = 1; j < C; ++j) {
        for (int px : part.negative[j]) {
            double q = include_background ? probmap->value[px] : 0.0;
            for (int k = 1; k < C; ++k)
                if (k != j) q += probmap->value[static_cast<size_t>(k) * plane + px];
            acc -= std::log(std::max(q, kLogClampEps));
            ++local.terms;
        }
    }
    local.all_empty = local.terms == 0;
    if (info) *info = local;

    return make_op<T>(
        Tensor<T>::scalar(static_cast<T>(acc)), {probmap},
        [probmap, part, include_background, C, plane](Node<T>& n) {
            const T up = n.grad[0];
            for (int j = 1; j < C; ++j) {
                for (int px : part.negative[j]) {
                    double q = include_background ? probmap->value[px] : 0.0;
                    for (int k = 1; k < C; ++k)
                        if (k != j) q += probmap->value[static_cast<size_t>(k) * plane + px];
                    if (q <= kLogClampEps) continue;  // clamped, gradient frozen
                    const T g = static_cast<T>(up / q);
                    if (include_background) probmap->grad[px] -= g;
                    for (int k = 1; k < C; ++k)
                        if (k != j) probmap->grad[static_cast<size_t>(k) * plane + px] -= g;
                }
            }
        });
}

// -(a.b)/(|a||b|), flattened over all pixels and classes
template <typename T>
NodePtr<T> cosine_distance(const NodePtr<T>& a, const NodePtr<T>& b) {
    auto fa = flatten(a), fb = flatten(b);
    return neg(div(dot(fa, fb), mul(l2_norm(fa), l2_norm(fb))));
}

// Symmetric cosine penalty between f'(X) = T(z*f(X)) and f(X'). By default
// both sides are masked by the (transformed) cutout mask, so predictions
// inside the cut square are compared nowhere; the literal unmasked form of
// the paper equation is available via masked_both = false.
template <typename T>
NodePtr<T> global_consistency_loss(const NodePtr<T>& prob_orig, const NodePtr<T>& prob_aug,
                                   const CutoutAugmentation& aug, bool masked_both = true,
                                   bool stop_gradient = false) {
    require_same_shape(prob_orig->value, prob_aug->value, "global_consistency_loss");
    NodePtr<T> a = apply(aug, prob_orig);
    NodePtr<T> b = masked_both ? mask_hw(prob_aug, transformed_mask_tensor<T>(aug)) : prob_aug;

    auto norm_of = [](const Tensor<T>& t) {
        double acc = 0;
        for (size_t i = 0; i < t.numel(); ++i)
            acc += static_cast<double>(t[i]) * static_cast<double>(t[i]);
        return std::sqrt(acc);
    };
    if (norm_of(a->value) == 0.0 || norm_of(b->value) == 0.0)
        throw std::runtime_error("global_consistency_loss: zero-norm probability vector");

    NodePtr<T> first, second;
    if (stop_gradient) {
        first = cosine_distance(a, constant(b->value));
        second = cosine_distance(b, constant(a->value));
    } else {
        first = cosine_distance(a, b);
        second = cosine_distance(b, a);
    }
    return add(scale(first, 0.5), scale(second, 0.5));
}

template <typename T>
struct LossParts {
    NodePtr<T> l_plus;    // required
    NodePtr<T> l_minus;   // optional
    NodePtr<T> l_global;  // optional
    long labeled_pixels = 0;
    NegativeLossInfo negative;
    long consistency_pixels = 0;
};

// Combined objective. Warmup keeps the negative loss out of the gradient;
// its value is still reported when available.
template <typename T>
std::pair<NodePtr<T>, LossReport> total_loss(const LossParts<T>& parts, const LossWeights& weights,
                                             TrainPhase phase) {
    if (weights.lambda1 < 0 || weights.lambda2 < 0)
        throw std::invalid_argument("total_loss: loss weights must be nonnegative");
    if (!parts.l_plus) throw std::invalid_argument("total_loss: missing supervised loss");

    LossReport rep;
    rep.l_plus = parts.l_plus->value[0];
    rep.l_minus = parts.l_minus ? parts.l_minus->value[0] : 0.0;
    rep.l_global = parts.l_global ? parts.l_global->value[0] : 0.0;
    rep.lambda1_effective =
        (phase == TrainPhase::full && parts.l_minus) ? weights.lambda1 : 0.0;
    rep.lambda2_effective = parts.l_global ? weights.lambda2 : 0.0;
    rep.labeled_pixels = parts.labeled_pixels;
    rep.negative_terms = parts.negative.terms;
    rep.negative_all_empty = parts.negative.all_empty;
    rep.negative_no_marginal = parts.negative.no_marginal;
    rep.consistency_pixels = parts.consistency_pixels;

    NodePtr<T> node = parts.l_plus;
    if (rep.lambda1_effective > 0) node = add(node, scale(parts.l_minus, rep.lambda1_effective));
    if (parts.l_global && rep.lambda2_effective != 0)
        node = add(node, scale(parts.l_global, rep.lambda2_effective));
    rep.total = rep.l_plus + rep.lambda1_effective * rep.l_minus +
                rep.lambda2_effective * rep.l_global;
    return {node, rep};
}

}  // namespace shapepu
