#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "shapepu/mixture_em.hpp"
#include "shapepu/rng.hpp"

using namespace shapepu;

namespace {

// Eq-style brute-force reference, written independently of em_step:
// alpha_j' = (1/n) sum_i p_u(c_j|x_i) with p_u(c_j|x_i) recomputed from the
// definition via Bayes substitution.
std::vector<double> brute_force_update(const std::vector<std::vector<double>>& posteriors,
                                       const std::vector<double>& labeled_freqs,
                                       const std::vector<double>& alpha) {
    const size_t K = alpha.size();
    std::vector<double> next(K, 0.0);
    for (const auto& row : posteriors) {
        double denom = 0.0;
        for (size_t k = 0; k < K; ++k) denom += alpha[k] * row[k] / labeled_freqs[k];
        for (size_t j = 0; j < K; ++j)
            next[j] += (alpha[j] * row[j] / labeled_freqs[j]) / denom;
    }
    for (auto& a : next) a /= static_cast<double>(posteriors.size());
    return next;
}

EmInputs four_pixel_fixture() {
    EmInputs in;
    in.num_classes = 2;
    in.labeled_freqs = {0.5, 0.5};
    // posterior of class 1 per pixel: 0.9, 0.9, 0.9, 0.1
    in.posteriors = {0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.9, 0.1};
    return in;
}

}  // namespace

TEST(EmInit, AlreadyNormalized) {
    const MixtureRatios a = em_init({0.5, 0.5});
    EXPECT_NEAR(a[0], 0.5, 1e-12);
    EXPECT_NEAR(a[1], 0.5, 1e-12);
}

TEST(EmInit, NormalizesCounts) {
    const MixtureRatios a = em_init({2, 2, 4});
    EXPECT_NEAR(a[0], 0.25, 1e-12);
    EXPECT_NEAR(a[1], 0.25, 1e-12);
    EXPECT_NEAR(a[2], 0.5, 1e-12);
}

TEST(EmInit, FloorsZeroEntries) {
    const MixtureRatios a = em_init({0.7, 0.3, 0.0});
    const double denom = 1.0 + 1e-8;
    EXPECT_NEAR(a[0], 0.7 / denom, 1e-15);
    EXPECT_NEAR(a[1], 0.3 / denom, 1e-15);
    EXPECT_NEAR(a[2], 1e-8 / denom, 1e-20);
    EXPECT_GT(a[2], 0.0);
}

TEST(EmInit, RejectsDegenerateInput) {
    EXPECT_THROW(em_init({0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(em_init({0.5, -0.1}), std::invalid_argument);
}

TEST(EmStep, HandIterationFirstStep) {
    const EmInputs in = four_pixel_fixture();
    const MixtureRatios a1 = em_step(in, {0.5, 0.5});
    EXPECT_NEAR(a1[1], 0.7, 1e-12);
    EXPECT_NEAR(a1[0], 0.3, 1e-12);
}

TEST(EmStep, HandIterationSecondStep) {
    const EmInputs in = four_pixel_fixture();
    const MixtureRatios a2 = em_step(in, {0.3, 0.7});
    // per-pixel weights (1.4 s) / (1.4 s + 0.6 (1-s)); mean over the 4 pixels
    const double expected = (3.0 * (1.26 / 1.32) + 0.14 / 0.68) / 4.0;
    EXPECT_NEAR(a2[1], expected, 1e-12);
    EXPECT_NEAR(a2[1], 0.7674, 5e-5);
}

TEST(EmStep, MatchesBruteForceReference) {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int K = 2 + rng.uniform_int(3);
        const int n = 1 + rng.uniform_int(40);
        std::vector<std::vector<double>> rows(n, std::vector<double>(K));
        EmInputs in;
        in.num_classes = K;
        for (auto& row : rows) {
            double s = 0;
            for (auto& v : row) {
                v = rng.uniform(0.01, 1.0);
                s += v;
            }
            for (auto& v : row) v /= s;
            in.posteriors.insert(in.posteriors.end(), row.begin(), row.end());
        }
        auto simplex = [&rng](int k) {
            std::vector<double> v(k);
            double s = 0;
            for (auto& x : v) {
                x = rng.uniform(0.05, 1.0);
                s += x;
            }
            for (auto& x : v) x /= s;
            return v;
        };
        in.labeled_freqs = simplex(K);
        const MixtureRatios alpha = simplex(K);
        const MixtureRatios got = em_step(in, alpha);
        const auto want = brute_force_update(rows, in.labeled_freqs, alpha);
        for (int j = 0; j < K; ++j) EXPECT_NEAR(got[j], want[j], 1e-9);
    }
}

// when s_ij = f_j for all pixels, em_step fixes every starting simplex point
TEST(EmStep, ConstantPosteriorFixedPointIdentity) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 2 + rng.uniform_int(3);
        std::vector<double> f(K);
        double s = 0;
        for (auto& v : f) {
            v = rng.uniform(0.05, 1.0);
            s += v;
        }
        for (auto& v : f) v /= s;
        EmInputs in;
        in.num_classes = K;
        in.labeled_freqs = f;
        const int n = 1 + rng.uniform_int(20);
        for (int i = 0; i < n; ++i) in.posteriors.insert(in.posteriors.end(), f.begin(), f.end());
        std::vector<double> alpha(K);
        s = 0;
        for (auto& v : alpha) {
            v = rng.uniform(0.01, 1.0);
            s += v;
        }
        for (auto& v : alpha) v /= s;
        const MixtureRatios next = em_step(in, alpha);
        for (int j = 0; j < K; ++j) EXPECT_NEAR(next[j], alpha[j], 1e-12);
    }
}

TEST(EmStep, OutputOnSimplex) {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const int K = 2 + rng.uniform_int(4);
        const int n = 1 + rng.uniform_int(30);
        EmInputs in;
        in.num_classes = K;
        for (int i = 0; i < n; ++i) {
            double s = 0;
            std::vector<double> row(K);
            for (auto& v : row) {
                v = rng.uniform(1e-6, 1.0);
                s += v;
            }
            for (auto& v : row) in.posteriors.push_back(v / s);
        }
        std::vector<double> f(K), alpha(K);
        double fs = 0, as = 0;
        for (int j = 0; j < K; ++j) {
            f[j] = rng.uniform(0.01, 1.0);
            fs += f[j];
            alpha[j] = rng.uniform(0.01, 1.0);
            as += alpha[j];
        }
        for (int j = 0; j < K; ++j) {
            f[j] /= fs;
            alpha[j] /= as;
        }
        in.labeled_freqs = f;
        EXPECT_TRUE(on_simplex(em_step(in, alpha), 1e-9));
    }
}

TEST(EmStep, PermutationEquivariance) {
    const EmInputs in = four_pixel_fixture();
    EmInputs swapped;
    swapped.num_classes = 2;
    swapped.labeled_freqs = {in.labeled_freqs[1], in.labeled_freqs[0]};
    for (size_t i = 0; i < in.posteriors.size(); i += 2) {
        swapped.posteriors.push_back(in.posteriors[i + 1]);
        swapped.posteriors.push_back(in.posteriors[i]);
    }
    const MixtureRatios a = em_step(in, {0.3, 0.7});
    const MixtureRatios b = em_step(swapped, {0.7, 0.3});
    EXPECT_NEAR(a[0], b[1], 1e-15);
    EXPECT_NEAR(a[1], b[0], 1e-15);
}

TEST(EmStep, ZeroDenominatorNamesPixel) {
    EmInputs in;
    in.num_classes = 2;
    in.labeled_freqs = {0.5, 0.5};
    in.posteriors = {0.5, 0.5, 0.0, 0.0};
    try {
        em_step(in, {0.5, 0.5});
        FAIL() << "expected zero-denominator error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("pixel 1"), std::string::npos) << e.what();
    }
}

TEST(EmEstimate, FixedPointConvergesInOneIteration) {
    EmInputs in;
    in.num_classes = 2;
    in.labeled_freqs = {0.5, 0.5};
    in.posteriors = {0.5, 0.5, 0.5, 0.5};
    const EmResult res = em_estimate(in);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.iterations, 1);
}

TEST(EmEstimate, ParameterValidation) {
    const EmInputs in = four_pixel_fixture();
    EXPECT_THROW(em_estimate(in, 0.0), std::invalid_argument);
    EXPECT_THROW(em_estimate(in, 1e-6, 0), std::invalid_argument);
}

namespace {

// exact Bayes posteriors for a three-Gaussian mixture sampled at the true
// mixing ratios; the labeled prior is uniform
EmInputs gaussian_oracle_inputs(int n, uint64_t seed) {
    const double means[3] = {-2.5, 0.0, 2.5};
    const double truth[3] = {0.2, 0.5, 0.3};
    Rng rng(seed);
    EmInputs in;
    in.num_classes = 3;
    in.labeled_freqs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const int cls = u < truth[0] ? 0 : (u < truth[0] + truth[1] ? 1 : 2);
        const double x = rng.normal(means[cls], 1.0);
        double dens[3], denom = 0;
        for (int k = 0; k < 3; ++k) {
            dens[k] = std::exp(-0.5 * (x - means[k]) * (x - means[k])) / 3.0;
            denom += dens[k];
        }
        for (int k = 0; k < 3; ++k) in.posteriors.push_back(dens[k] / denom);
    }
    return in;
}

}  // namespace

TEST(EmEstimate, GaussianOracleRecovery) {
    const auto t0 = std::chrono::steady_clock::now();
    const EmInputs in = gaussian_oracle_inputs(5000, 2024);
    const EmResult res = em_estimate(in);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.iterations, 100);
    EXPECT_NEAR(res.alpha[0], 0.2, 0.02);
    EXPECT_NEAR(res.alpha[1], 0.5, 0.02);
    EXPECT_NEAR(res.alpha[2], 0.3, 0.02);
    EXPECT_LT(seconds, 5.0);
}

TEST(EmEstimate, OracleTrajectoryMaxChangeDecreases) {
    const EmInputs in = gaussian_oracle_inputs(5000, 2024);
    const EmResult res = em_estimate(in, 1e-6, 100, true);
    ASSERT_GE(res.trajectory.size(), 4u);
    std::vector<double> deltas;
    for (size_t t = 1; t < res.trajectory.size(); ++t) {
        double d = 0;
        for (size_t j = 0; j < res.trajectory[t].size(); ++j)
            d = std::max(d, std::abs(res.trajectory[t][j] - res.trajectory[t - 1][j]));
        deltas.push_back(d);
    }
    for (size_t t = 2; t < deltas.size(); ++t) EXPECT_LT(deltas[t], deltas[t - 1]) << "step " << t;
}
