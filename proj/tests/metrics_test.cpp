#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "shapepu/metrics.hpp"
#include "shapepu/rng.hpp"

using namespace shapepu;

namespace {

LabelGrid random_mask(int h, int w, int num_classes, Rng& rng, double fg_density = 0.3) {
    LabelGrid m(h, w, 0);
    for (auto& v : m.v)
        if (rng.uniform() < fg_density) v = static_cast<uint8_t>(1 + rng.uniform_int(num_classes - 1));
    return m;
}

// quadratic-time reference for the symmetric Hausdorff distance
std::optional<double> brute_force_hausdorff(const LabelGrid& a, const LabelGrid& b, int cls) {
    std::vector<std::pair<int, int>> pa, pb;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (a.at(y, x) == cls) pa.emplace_back(y, x);
            if (b.at(y, x) == cls) pb.emplace_back(y, x);
        }
    if (pa.empty() || pb.empty()) return std::nullopt;
    auto directed = [](const auto& from, const auto& to) {
        double worst = 0;
        for (auto [fy, fx] : from) {
            double best = 1e300;
            for (auto [ty, tx] : to) {
                const double d = (fy - ty) * double(fy - ty) + (fx - tx) * double(fx - tx);
                best = std::min(best, d);
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::sqrt(std::max(directed(pa, pb), directed(pb, pa)));
}

// union-find connected components as an independent reference
int count_components_8(const LabelGrid& m, int cls) {
    const int H = m.height, W = m.width;
    std::vector<int> parent(H * W);
    for (int i = 0; i < H * W; ++i) parent[i] = i;
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (m.at(y, x) != cls) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if ((dy || dx) && m.in_bounds(yy, xx) && m.at(yy, xx) == cls)
                        unite(y * W + x, yy * W + xx);
                }
        }
    std::set<int> roots;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (m.at(y, x) == cls) roots.insert(find(y * W + x));
    return static_cast<int>(roots.size());
}

}  // namespace

TEST(Dice, IdenticalMasks) {
    Rng rng(1);
    const LabelGrid m = random_mask(8, 8, 3, rng);
    EXPECT_DOUBLE_EQ(dice(m, m, 1), 1.0);
}

TEST(Dice, DisjointMasks) {
    LabelGrid a(2, 2, 0), b(2, 2, 0);
    a.at(0, 0) = 1;
    b.at(1, 1) = 1;
    EXPECT_DOUBLE_EQ(dice(a, b, 1), 0.0);
}

TEST(Dice, HalfOverlap) {
    LabelGrid a(4, 4, 0), b(4, 4, 0);
    for (int i = 0; i < 4; ++i) a.v[i] = 1;       // pixels 0..3
    for (int i = 2; i < 6; ++i) b.v[i] = 1;       // pixels 2..5
    EXPECT_DOUBLE_EQ(dice(a, b, 1), 0.5);         // |A|=4, |B|=4, |A∩B|=2
}

TEST(Dice, BothEmptyConvention) {
    const LabelGrid a(3, 3, 0), b(3, 3, 0);
    EXPECT_DOUBLE_EQ(dice(a, b, 2), 1.0);
}

TEST(Dice, Symmetry) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const LabelGrid a = random_mask(6, 6, 3, rng);
        const LabelGrid b = random_mask(6, 6, 3, rng);
        EXPECT_DOUBLE_EQ(dice(a, b, 1), dice(b, a, 1));
    }
}

TEST(Hausdorff, IdenticalSetsGiveZero) {
    Rng rng(3);
    const LabelGrid m = random_mask(8, 8, 2, rng);
    const auto hd = hausdorff(m, m, 1);
    ASSERT_TRUE(hd.has_value());
    EXPECT_DOUBLE_EQ(*hd, 0.0);
}

TEST(Hausdorff, SinglePixelPair) {
    LabelGrid a(6, 6, 0), b(6, 6, 0);
    a.at(0, 0) = 1;
    b.at(3, 4) = 1;
    const auto hd = hausdorff(a, b, 1);
    ASSERT_TRUE(hd.has_value());
    EXPECT_DOUBLE_EQ(*hd, 5.0);
}

TEST(Hausdorff, EmptySetUndefined) {
    LabelGrid a(4, 4, 0), b(4, 4, 0);
    a.at(1, 1) = 1;
    EXPECT_FALSE(hausdorff(a, b, 1).has_value());
    EXPECT_FALSE(hausdorff(b, a, 1).has_value());
    EXPECT_FALSE(hausdorff(b, b, 1).has_value());
}

TEST(Hausdorff, MatchesBruteForceOracle) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = 2 + rng.uniform_int(15), w = 2 + rng.uniform_int(15);
        const LabelGrid a = random_mask(h, w, 2, rng, 0.2);
        const LabelGrid b = random_mask(h, w, 2, rng, 0.2);
        const auto fast = hausdorff(a, b, 1);
        const auto slow = brute_force_hausdorff(a, b, 1);
        ASSERT_EQ(fast.has_value(), slow.has_value());
        if (fast) EXPECT_DOUBLE_EQ(*fast, *slow);
    }
}

TEST(Hausdorff, SymmetryProperty) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const LabelGrid a = random_mask(10, 10, 2, rng, 0.25);
        const LabelGrid b = random_mask(10, 10, 2, rng, 0.25);
        const auto ab = hausdorff(a, b, 1), ba = hausdorff(b, a, 1);
        ASSERT_EQ(ab.has_value(), ba.has_value());
        if (ab) EXPECT_DOUBLE_EQ(*ab, *ba);
    }
}

TEST(KeepLargest, SingleComponentUnchanged) {
    LabelGrid m(8, 8, 0);
    for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) m.at(y, x) = 1;
    EXPECT_EQ(keep_largest_component(m, 2).v, m.v);
}

TEST(KeepLargest, SmallComponentRemoved) {
    LabelGrid m(16, 16, 0);
    int big = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            m.at(y, x) = 1;
            ++big;
        }
    m.at(14, 14) = 1;
    m.at(14, 15) = 1;
    m.at(15, 14) = 1;
    const LabelGrid out = keep_largest_component(m, 2);
    int count = 0;
    for (auto v : out.v) count += v == 1;
    EXPECT_EQ(count, big);
    EXPECT_EQ(out.at(14, 14), 0);
}

TEST(KeepLargest, RetainedPixelsUntouched) {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const LabelGrid m = random_mask(12, 12, 3, rng, 0.35);
        const LabelGrid out = keep_largest_component(m, 3);
        for (size_t i = 0; i < m.size(); ++i) {
            // pixels only ever become background
            if (out.v[i] != m.v[i]) EXPECT_EQ(out.v[i], 0);
        }
    }
}

TEST(KeepLargest, AtMostOneComponentPerClassAndIdempotent) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 4 + rng.uniform_int(20), w = 4 + rng.uniform_int(20);
        const LabelGrid m = random_mask(h, w, 4, rng, 0.4);
        const LabelGrid once = keep_largest_component(m, 4);
        for (int cls = 1; cls < 4; ++cls) EXPECT_LE(count_components_8(once, cls), 1);
        const LabelGrid twice = keep_largest_component(once, 4);
        EXPECT_EQ(once.v, twice.v);
    }
}

TEST(KeepLargest, TieBrokenTowardFirstAnchor) {
    LabelGrid m(6, 6, 0);
    m.at(0, 0) = 1;  // first component in row-major order
    m.at(5, 5) = 1;  // equal size, later anchor
    const LabelGrid out = keep_largest_component(m, 2);
    EXPECT_EQ(out.at(0, 0), 1);
    EXPECT_EQ(out.at(5, 5), 0);
}

TEST(EvalResultSummary, SelfEvaluationIsPerfect) {
    Rng rng(8);
    const LabelGrid m = random_mask(10, 10, 4, rng, 0.4);
    const EvalResult r = EvalResult::compute(m, m, 4);
    for (int c = 0; c < 4; ++c) {
        EXPECT_DOUBLE_EQ(r.dice_per_class[c], 1.0);
        if (r.hd_per_class[c]) EXPECT_DOUBLE_EQ(*r.hd_per_class[c], 0.0);
    }
    EXPECT_DOUBLE_EQ(r.mean_foreground_dice, 1.0);
}
