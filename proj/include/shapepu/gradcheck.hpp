#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "augment.hpp"
#include "autodiff.hpp"
#include "losses.hpp"
#include "mixture_em.hpp"
#include "pu_partition.hpp"
#include "rng.hpp"

namespace shapepu {

struct GradCheckEntry {
    std::string name;
    double worst_rel_err = 0;
    bool pass = true;
};

struct GradCheckOptions {
    uint64_t seed = 0;
    int seeds_per_op = 20;
    double h = 1e-3;
    double rel_tol = 1e-4;
    double abs_floor = 1e-6;
    bool corrupt = false;  // test hook: falsifies one analytic gradient entry
};

namespace gradcheck_detail {

inline Tensor<double> random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// worst relative central-difference error of dLoss/dInputs[which]
inline double fd_worst(std::vector<Tensor<double>> inputs, size_t which,
                       const std::function<NodePtr<double>(std::vector<NodePtr<double>>&)>& build,
                       const GradCheckOptions& opt, bool apply_corrupt = false) {
    std::vector<NodePtr<double>> leaves;
    for (auto& t : inputs) leaves.push_back(parameter(t));
    auto loss = build(leaves);
    backward(loss);
    Tensor<double> analytic = leaves[which]->grad;
    if (apply_corrupt && analytic.numel() > 0) analytic[0] += 1.0;

    double worst = 0;
    for (size_t i = 0; i < inputs[which].numel(); ++i) {
        const double saved = inputs[which][i];
        auto eval = [&](double x) {
            inputs[which][i] = x;
            std::vector<NodePtr<double>> fresh;
            for (auto& t : inputs) fresh.push_back(parameter(t));
            return build(fresh)->value[0];
        };
        const double numeric = (eval(saved + opt.h) - eval(saved - opt.h)) / (2 * opt.h);
        inputs[which][i] = saved;
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opt.abs_floor});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

inline LabelGrid random_scribble(int h, int w, int num_classes, Rng& rng) {
    LabelGrid scr(h, w, kUnlabeled);
    int labeled = 0;
    for (int i = 0; i < h * w; ++i)
        if (rng.uniform() < 0.25) {
            scr.v[i] = static_cast<uint8_t>(rng.uniform_int(num_classes));
            ++labeled;
        }
    if (labeled == 0) scr.v[0] = 0;
    return scr;
}

}  // namespace gradcheck_detail

// Finite-difference verification of every differentiable op and of the three
// training losses (taken with respect to the logits). Double precision.
inline std::vector<GradCheckEntry> run_gradient_checks(const GradCheckOptions& opt) {
    using namespace gradcheck_detail;
    std::vector<GradCheckEntry> report;
    bool corrupt_pending = opt.corrupt;

    auto record = [&](const std::string& name, const std::function<double(Rng&)>& one_seed) {
        GradCheckEntry e;
        e.name = name;
        for (int s = 0; s < opt.seeds_per_op; ++s) {
            Rng rng(stream_seed(opt.seed, std::hash<std::string>{}(name), s));
            e.worst_rel_err = std::max(e.worst_rel_err, one_seed(rng));
        }
        e.pass = e.worst_rel_err < opt.rel_tol;
        report.push_back(e);
    };
    auto take_corrupt = [&] {
        const bool c = corrupt_pending;
        corrupt_pending = false;
        return c;
    };

    const Shape small{2, 3};
    record("add", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng), random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return sum(mul(add(l[0], l[1]), l[0])); }, opt,
                        take_corrupt());
    });
    record("mul", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng), random_tensor(small, rng)};
        double w = fd_worst(in, 0, [](auto& l) { return sum(mul(l[0], l[1])); }, opt);
        return std::max(w, fd_worst(in, 1, [](auto& l) { return sum(mul(l[0], l[1])); }, opt));
    });
    record("div", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng, 0.5, 1.5),
                                          random_tensor(small, rng, 0.5, 1.5)};
        double w = fd_worst(in, 0, [](auto& l) { return sum(div(l[0], l[1])); }, opt);
        return std::max(w, fd_worst(in, 1, [](auto& l) { return sum(div(l[0], l[1])); }, opt));
    });
    record("scale", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return scale(sum(mul(l[0], l[0])), -1.7); }, opt);
    });
    record("log", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng, 0.1, 2.0)};
        return fd_worst(in, 0, [](auto& l) { return sum(log_clamped(l[0])); }, opt);
    });
    record("relu", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return sum(mul(relu(l[0]), l[0])); }, opt);
    });
    record("sum", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return sum(mul(l[0], l[0])); }, opt);
    });
    record("mean", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return mean(mul(l[0], l[0])); }, opt);
    });
    record("flatten", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return dot(flatten(l[0]), flatten(l[0])); }, opt);
    });
    record("dot", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng), random_tensor(small, rng)};
        return fd_worst(in, 0, [](auto& l) { return dot(l[0], l[1]); }, opt);
    });
    record("l2_norm", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(small, rng, 0.2, 1.0)};
        return fd_worst(in, 0, [](auto& l) { return l2_norm(l[0]); }, opt);
    });
    record("softmax_channels", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, 3, 2, 2}, rng, -2, 2),
                                          random_tensor(Shape{1, 3, 2, 2}, rng)};
        return fd_worst(in, 0, [](auto& l) { return sum(mul(softmax_channels(l[0]), l[1])); },
                        opt);
    });
    record("conv2d", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, 2, 4, 4}, rng),
                                          random_tensor(Shape{2, 2, 3, 3}, rng),
                                          random_tensor(Shape{2}, rng)};
        double worst = 0;
        for (size_t which : {0u, 1u, 2u})
            worst = std::max(worst, fd_worst(in, which, [](auto& l) {
                auto y = conv2d(l[0], l[1], l[2]);
                return sum(mul(y, y));
            }, opt));
        return worst;
    });
    record("mask_hw", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, 2, 3, 3}, rng)};
        Tensor<double> mask(Shape{3, 3});
        for (auto& v : mask.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return fd_worst(in, 0, [mask](auto& l) { return sum(mul(mask_hw(l[0], mask), l[0])); },
                        opt);
    });
    record("dihedral", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, 2, 3, 3}, rng),
                                          random_tensor(Shape{1, 2, 3, 3}, rng)};
        const auto t = static_cast<Dihedral>(rng.uniform_int(kDihedralCount));
        return fd_worst(in, 0, [t](auto& l) { return sum(mul(dihedral(l[0], t), l[1])); }, opt);
    });

    // Losses, differentiated through the softmax down to the logits. The log
    // and cosine compositions are stiff enough that h=1e-3 leaves visible
    // O(h^2) truncation error; a smaller step isolates the analytic gradient.
    GradCheckOptions loss_opt = opt;
    loss_opt.h = std::min(opt.h, 1e-4);
    const int C = 4, H = 8, W = 8;
    record("supervised_loss", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, C, H, W}, rng, -2, 2)};
        const LabelGrid scr = random_scribble(H, W, C, rng);
        return fd_worst(in, 0, [scr](auto& l) {
            return supervised_loss(softmax_channels(l[0]), scr);
        }, loss_opt);
    });
    record("negative_loss", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, C, H, W}, rng, -2, 2)};
        const LabelGrid scr = random_scribble(H, W, C, rng);
        // the ranked sets are fixed by the unperturbed forward pass
        Tensor<double> prob;
        softmax_channels_forward(in[0], prob);
        MixtureRatios alpha = {0.4, 0.2, 0.25, 0.15};
        const PartitionResult part = partition(prob, scr, alpha);
        return fd_worst(in, 0, [part](auto& l) {
            return negative_loss(softmax_channels(l[0]), part);
        }, loss_opt);
    });
    record("global_consistency_loss", [&](Rng& rng) {
        std::vector<Tensor<double>> in = {random_tensor(Shape{1, C, H, W}, rng, -2, 2),
                                          random_tensor(Shape{1, C, H, W}, rng, -2, 2)};
        CutoutAugmentation aug = sample_augmentation(H, W, 3, rng);
        double worst = 0;
        for (size_t which : {0u, 1u})
            worst = std::max(worst, fd_worst(in, which, [aug](auto& l) {
                return global_consistency_loss(softmax_channels(l[0]), softmax_channels(l[1]), aug);
            }, loss_opt));
        return worst;
    });
    return report;
}

}  // namespace shapepu
