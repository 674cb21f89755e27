#include <gtest/gtest.h>

#include <cmath>

#include "shapepu/losses.hpp"
#include "test_util.hpp"

using namespace shapepu;
using test_util::finite_difference_check;
using test_util::random_tensor;

namespace {

// one-pixel probability map over C classes
Tensor<double> pixel_probs(std::initializer_list<double> probs) {
    Tensor<double> t(Shape{1, static_cast<int>(probs.size()), 1, 1});
    std::copy(probs.begin(), probs.end(), t.data.begin());
    return t;
}

LabelGrid sparse_scribble(int h, int w, int num_classes, Rng& rng, double density = 0.25) {
    LabelGrid scr(h, w, kUnlabeled);
    int n = 0;
    for (size_t i = 0; i < scr.size(); ++i)
        if (rng.uniform() < density) {
            scr.v[i] = static_cast<uint8_t>(rng.uniform_int(num_classes));
            ++n;
        }
    if (n == 0) scr.v[0] = 0;
    return scr;
}

}  // namespace

TEST(SupervisedLoss, PerfectPredictionGivesZero) {
    Tensor<double> prob(Shape{1, 2, 2, 2});
    LabelGrid scr(2, 2, kUnlabeled);
    scr.at(0, 0) = 1;
    scr.at(1, 1) = 0;
    // put full mass on the labeled class at labeled pixels
    prob.at4(0, 1, 0, 0) = 1.0;
    prob.at4(0, 0, 1, 1) = 1.0;
    const auto loss = supervised_loss(parameter(prob), scr);
    EXPECT_NEAR(loss->value[0], 0.0, 1e-12);
}

TEST(SupervisedLoss, HalfProbabilityGivesLnTwo) {
    auto prob = pixel_probs({0.5, 0.5});
    LabelGrid scr(1, 1, 0);
    const auto loss = supervised_loss(parameter(prob), scr);
    EXPECT_NEAR(loss->value[0], 0.6931471805599453, 1e-12);
}

TEST(SupervisedLoss, NoLabeledPixelsThrows) {
    Tensor<double> prob(Shape{1, 2, 2, 2}, 0.5);
    const LabelGrid scr(2, 2, kUnlabeled);
    EXPECT_THROW(supervised_loss(parameter(prob), scr), std::invalid_argument);
}

// gradient wrt logits equals softmax - onehot at labeled pixels, 0 elsewhere
TEST(SupervisedLoss, LogitGradientIsSoftmaxMinusOnehot) {
    Rng rng(5);
    auto logits = parameter(random_tensor(Shape{1, 3, 4, 4}, rng, -2, 2));
    LabelGrid scr = sparse_scribble(4, 4, 3, rng);
    auto prob = softmax_channels(logits);
    backward(supervised_loss(prob, scr));
    const size_t plane = 16;
    for (size_t px = 0; px < plane; ++px) {
        for (int c = 0; c < 3; ++c) {
            const double g = logits->grad[c * plane + px];
            if (scr.v[px] == kUnlabeled) {
                EXPECT_DOUBLE_EQ(g, 0.0);
            } else {
                const double want = prob->value[c * plane + px] - (scr.v[px] == c ? 1.0 : 0.0);
                EXPECT_NEAR(g, want, 1e-9);
            }
        }
    }
}

TEST(NegativeLoss, MarginalExcludesBackgroundByDefault) {
    auto probs = pixel_probs({0.1, 0.2, 0.3, 0.4});
    PartitionResult part;
    part.num_classes = 4;
    part.unlabeled = {0};
    part.positive.resize(4);
    part.negative.resize(4);
    part.negative[1] = {0};  // pixel 0 is negative for class 1 only
    const auto loss = negative_loss(parameter(probs), part);
    EXPECT_NEAR(loss->value[0], -std::log(0.7), 1e-9);
}

TEST(NegativeLoss, MarginalWithBackgroundOption) {
    auto probs = pixel_probs({0.1, 0.2, 0.3, 0.4});
    PartitionResult part;
    part.num_classes = 4;
    part.unlabeled = {0};
    part.positive.resize(4);
    part.negative.resize(4);
    part.negative[1] = {0};
    const auto loss = negative_loss(parameter(probs), part, true);
    EXPECT_NEAR(loss->value[0], -std::log(0.8), 1e-9);
}

TEST(NegativeLoss, FullForeignMassGivesZeroTerm) {
    auto probs = pixel_probs({0.0, 0.0, 0.6, 0.4});
    PartitionResult part;
    part.num_classes = 4;
    part.unlabeled = {0};
    part.positive.resize(4);
    part.negative.resize(4);
    part.negative[1] = {0};
    const auto loss = negative_loss(parameter(probs), part);
    EXPECT_NEAR(loss->value[0], 0.0, 1e-12);
}

TEST(NegativeLoss, SingleForegroundClassIsFlaggedEmptySum) {
    auto probs = pixel_probs({0.3, 0.7});
    PartitionResult part;
    part.num_classes = 2;
    part.unlabeled = {0};
    part.positive.resize(2);
    part.negative.resize(2);
    part.negative[1] = {0};
    NegativeLossInfo info;
    const auto loss = negative_loss(parameter(probs), part, false, &info);
    EXPECT_DOUBLE_EQ(loss->value[0], 0.0);
    EXPECT_TRUE(info.no_marginal);
}

TEST(NegativeLoss, EmptySetsReturnZeroWithFlag) {
    Tensor<double> prob(Shape{1, 3, 2, 2}, 1.0 / 3);
    PartitionResult part;
    part.num_classes = 3;
    part.unlabeled = {0, 1, 2, 3};
    part.positive.resize(3);
    part.negative.resize(3);
    part.positive[1] = part.positive[2] = {0, 1, 2, 3};
    NegativeLossInfo info;
    const auto loss = negative_loss(parameter(prob), part, false, &info);
    EXPECT_DOUBLE_EQ(loss->value[0], 0.0);
    EXPECT_TRUE(info.all_empty);
    EXPECT_FALSE(info.no_marginal);
}

TEST(GlobalConsistency, IdenticalMapsGiveMinusOne) {
    Rng rng(3);
    Tensor<double> prob(Shape{1, 2, 4, 4});
    for (auto& v : prob.data) v = rng.uniform(0.1, 1.0);
    CutoutAugmentation aug;
    aug.square_size = 0;
    aug.mask = Grid<uint8_t>(4, 4, 1);
    aug.transform = Dihedral::r0;
    const auto loss = global_consistency_loss(parameter(prob), parameter(prob), aug);
    EXPECT_NEAR(loss->value[0], -1.0, 1e-9);
}

TEST(GlobalConsistency, OrthogonalMapsGiveZero) {
    Tensor<double> a(Shape{1, 2, 1, 2});
    Tensor<double> b(Shape{1, 2, 1, 2});
    a.data = {1.0, 0.0, 0.0, 0.0};
    b.data = {0.0, 1.0, 0.0, 0.0};
    CutoutAugmentation aug;
    aug.square_size = 0;
    aug.mask = Grid<uint8_t>(1, 2, 1);
    aug.transform = Dihedral::r0;
    const auto loss = global_consistency_loss(parameter(a), parameter(b), aug);
    EXPECT_NEAR(loss->value[0], 0.0, 1e-12);
}

TEST(GlobalConsistency, ClosedFormCosine) {
    // vectors (1,0) and (1,1): cosine distance -1/sqrt(2)
    Tensor<double> a(Shape{1, 1, 1, 2});
    Tensor<double> b(Shape{1, 1, 1, 2});
    a.data = {1.0, 0.0};
    b.data = {1.0, 1.0};
    CutoutAugmentation aug;
    aug.square_size = 0;
    aug.mask = Grid<uint8_t>(1, 2, 1);
    aug.transform = Dihedral::r0;
    const auto loss = global_consistency_loss(parameter(a), parameter(b), aug, false);
    EXPECT_NEAR(loss->value[0], -1.0 / std::sqrt(2.0), 1e-12);
}

TEST(GlobalConsistency, ZeroNormThrows) {
    Tensor<double> a(Shape{1, 1, 2, 2}, 0.0);
    Tensor<double> b(Shape{1, 1, 2, 2}, 0.5);
    CutoutAugmentation aug;
    aug.square_size = 0;
    aug.mask = Grid<uint8_t>(2, 2, 1);
    aug.transform = Dihedral::r0;
    EXPECT_THROW(global_consistency_loss(parameter(a), parameter(b), aug), std::runtime_error);
}

TEST(GlobalConsistency, SymmetricInArguments) {
    Rng rng(17);
    Tensor<double> a(Shape{1, 3, 5, 5}), b(Shape{1, 3, 5, 5});
    for (auto& v : a.data) v = rng.uniform(0.05, 1.0);
    for (auto& v : b.data) v = rng.uniform(0.05, 1.0);
    CutoutAugmentation aug = sample_augmentation(5, 5, 2, rng);
    aug.transform = Dihedral::r0;  // keep both orders comparable without permutation
    const auto ab = global_consistency_loss(parameter(a), parameter(b), aug);
    // the two halves of the loss are equal cosines, so the value is one cosine
    const auto l1 = cosine_distance(
        dihedral(mask_hw(parameter(a), mask_tensor<double>(aug)), aug.transform),
        mask_hw(parameter(b), transformed_mask_tensor<double>(aug)));
    EXPECT_NEAR(ab->value[0], l1->value[0], 1e-12);
}

TEST(GlobalConsistency, RangeOnSimplexInputs) {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor<double> logits_a = random_tensor(Shape{1, 3, 6, 6}, rng, -3, 3);
        Tensor<double> logits_b = random_tensor(Shape{1, 3, 6, 6}, rng, -3, 3);
        Tensor<double> a, b;
        softmax_channels_forward(logits_a, a);
        softmax_channels_forward(logits_b, b);
        CutoutAugmentation aug = sample_augmentation(6, 6, 2, rng);
        const auto loss = global_consistency_loss(parameter(a), parameter(b), aug);
        EXPECT_GE(loss->value[0], -1.0 - 1e-12);
        EXPECT_LE(loss->value[0], 0.0 + 1e-12);
    }
}

// changing predictions only inside the cutout square leaves the loss bits
TEST(GlobalConsistency, CutoutExclusionInvariant) {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> a(Shape{1, 3, 8, 8}), b(Shape{1, 3, 8, 8});
        for (auto& v : a.data) v = rng.uniform(0.05, 1.0);
        for (auto& v : b.data) v = rng.uniform(0.05, 1.0);
        CutoutAugmentation aug = sample_augmentation(8, 8, 3, rng);
        const double base = global_consistency_loss(parameter(a), parameter(b), aug)->value[0];

        Tensor<double> a2 = a;
        for (int c = 0; c < 3; ++c)
            for (int y = aug.top; y < aug.top + 3; ++y)
                for (int x = aug.left; x < aug.left + 3; ++x)
                    a2.at4(0, c, y, x) += rng.uniform(0.1, 2.0);
        // perturb the augmented-view map inside the transformed square too
        Grid<uint8_t> tz = apply_dihedral(aug.mask, aug.transform);
        Tensor<double> b2 = b;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    if (!tz.at(y, x)) b2.at4(0, c, y, x) += rng.uniform(0.1, 2.0);
        const double perturbed =
            global_consistency_loss(parameter(a2), parameter(b2), aug)->value[0];
        EXPECT_EQ(base, perturbed);
    }
}

TEST(TotalLoss, DegenerateWeights) {
    auto lp = parameter(Tensor<double>::scalar(2.0));
    auto lm = parameter(Tensor<double>::scalar(1.0));
    auto lg = parameter(Tensor<double>::scalar(-0.8));
    LossParts<double> parts;
    parts.l_plus = lp;
    parts.l_minus = lm;
    parts.l_global = lg;
    auto [node, rep] = total_loss(parts, {0.0, 0.0}, TrainPhase::full);
    EXPECT_NEAR(rep.total, 2.0, 1e-12);
}

TEST(TotalLoss, WarmupExcludesNegative) {
    auto lp = parameter(Tensor<double>::scalar(2.0));
    auto lm = parameter(Tensor<double>::scalar(1.0));
    auto lg = parameter(Tensor<double>::scalar(-0.8));
    LossParts<double> parts;
    parts.l_plus = lp;
    parts.l_minus = lm;
    parts.l_global = lg;
    auto [node, rep] = total_loss(parts, {1.0, 0.05}, TrainPhase::warmup);
    EXPECT_NEAR(rep.total, 2.0 + 0.05 * -0.8, 1e-12);
    EXPECT_NEAR(node->value[0], rep.total, 1e-6);
    EXPECT_DOUBLE_EQ(rep.lambda1_effective, 0.0);
    EXPECT_DOUBLE_EQ(rep.l_minus, 1.0);  // reported but excluded
}

TEST(TotalLoss, FullPhaseArithmetic) {
    auto lp = parameter(Tensor<double>::scalar(2.0));
    auto lm = parameter(Tensor<double>::scalar(1.0));
    auto lg = parameter(Tensor<double>::scalar(-0.8));
    LossParts<double> parts;
    parts.l_plus = lp;
    parts.l_minus = lm;
    parts.l_global = lg;
    auto [node, rep] = total_loss(parts, {1.0, 0.05}, TrainPhase::full);
    EXPECT_NEAR(rep.total, 2.96, 1e-12);
    EXPECT_NEAR(node->value[0], 2.96, 1e-6);
    EXPECT_NEAR(rep.total,
                rep.l_plus + rep.lambda1_effective * rep.l_minus +
                    rep.lambda2_effective * rep.l_global,
                1e-6);
}

// all three losses, differentiated to the logits, against finite differences
TEST(Losses, FiniteDifferenceWrtLogits) {
    const int C = 4, H = 8, W = 8;
    double worst = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(7000 + seed);
        std::vector<Tensor<double>> inputs = {random_tensor(Shape{1, C, H, W}, rng, -2, 2),
                                              random_tensor(Shape{1, C, H, W}, rng, -2, 2)};
        const LabelGrid scr = sparse_scribble(H, W, C, rng);
        Tensor<double> prob;
        softmax_channels_forward(inputs[0], prob);
        MixtureRatios alpha = {0.4, 0.25, 0.2, 0.15};
        const PartitionResult part = partition(prob, scr, alpha);
        CutoutAugmentation aug = sample_augmentation(H, W, 3, rng);

        auto res = finite_difference_check(inputs, 0, [&](std::vector<NodePtr<double>>& l) {
            return supervised_loss(softmax_channels(l[0]), scr);
        }, 1e-4);
        worst = std::max(worst, res.worst_rel_err);
        res = finite_difference_check(inputs, 0, [&](std::vector<NodePtr<double>>& l) {
            return negative_loss(softmax_channels(l[0]), part);
        }, 1e-4);
        worst = std::max(worst, res.worst_rel_err);
        res = finite_difference_check(inputs, 0, [&](std::vector<NodePtr<double>>& l) {
            return negative_loss(softmax_channels(l[0]), part, true);
        }, 1e-4);
        worst = std::max(worst, res.worst_rel_err);
        for (size_t which : {0u, 1u}) {
            res = finite_difference_check(inputs, which, [&](std::vector<NodePtr<double>>& l) {
                return global_consistency_loss(softmax_channels(l[0]), softmax_channels(l[1]), aug);
            }, 1e-4);
            worst = std::max(worst, res.worst_rel_err);
        }
    }
    EXPECT_LT(worst, 1e-4);
}
