#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapepu {

// Mixture proportions over the m+1 classes; entries in [0,1] summing to 1.
using MixtureRatios = std::vector<double>;

inline constexpr double kEmFreqFloor = 1e-8;

inline bool on_simplex(const std::vector<double>& v, double tol = 1e-9) {
    double s = 0;
    for (double x : v) {
        if (x < -tol || x > 1 + tol) return false;
        s += x;
    }
    return std::abs(s - 1.0) <= tol;
}

// Inputs of one EM estimation problem: network posteriors at the unlabeled
// pixels (rows on the simplex) and the class frequencies of labeled pixels.
struct EmInputs {
    int num_classes = 0;
    std::vector<double> posteriors;     // row-major, n_u rows of num_classes
    std::vector<double> labeled_freqs;  // simplex after eps-flooring

    size_t rows() const {
        return num_classes > 0 ? posteriors.size() / static_cast<size_t>(num_classes) : 0;
    }

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("EmInputs: need at least 2 classes");
        if (posteriors.size() % static_cast<size_t>(num_classes) != 0)
            throw std::invalid_argument("EmInputs: posterior matrix size not divisible by classes");
        if (rows() == 0) throw std::invalid_argument("EmInputs: no unlabeled pixels");
        if (labeled_freqs.size() != static_cast<size_t>(num_classes))
            throw std::invalid_argument("EmInputs: labeled frequency length mismatch");
    }
};

// Floors the labeled class frequencies at eps and renormalizes; this is the
// EM initialization (classes unseen in scribbles keep a vanishing share).
inline MixtureRatios em_init(const std::vector<double>& labeled_freqs, double eps = kEmFreqFloor) {
    double sum = 0;
    for (double f : labeled_freqs) {
        if (f < 0) throw std::invalid_argument("em_init: negative class frequency");
        sum += f;
    }
    if (sum <= 0) throw std::invalid_argument("em_init: all class frequencies are zero");
    MixtureRatios out(labeled_freqs.size());
    double floored_sum = 0;
    for (size_t j = 0; j < labeled_freqs.size(); ++j) {
        out[j] = std::max(labeled_freqs[j], eps);
        floored_sum += out[j];
    }
    for (double& a : out) a /= floored_sum;
    return out;
}

// One fixed-point update of the mixture proportions:
//   alpha_j' = (1/n_u) sum_i [alpha_j s_ij / f_j] / sum_k [alpha_k s_ik / f_k]
// where s is the per-pixel posterior and f the labeled class frequency.
inline MixtureRatios em_step(const EmInputs& inputs, const MixtureRatios& alpha) {
    inputs.validate();
    const int K = inputs.num_classes;
    if (alpha.size() != static_cast<size_t>(K))
        throw std::invalid_argument("em_step: alpha length mismatch");
    const size_t n = inputs.rows();
    std::vector<double> ratio(K);  // alpha_j / f_j
    for (int j = 0; j < K; ++j) {
        const double f = std::max(inputs.labeled_freqs[j], kEmFreqFloor);
        ratio[j] = alpha[j] / f;
    }
    MixtureRatios next(K, 0.0);
    std::vector<double> w(K);
    for (size_t i = 0; i < n; ++i) {
        const double* row = &inputs.posteriors[i * K];
        double denom = 0;
        for (int j = 0; j < K; ++j) {
            w[j] = ratio[j] * row[j];
            denom += w[j];
        }
        if (denom <= 0)
            throw std::runtime_error("em_step: zero weighted-posterior denominator at pixel " +
                                     std::to_string(i));
        for (int j = 0; j < K; ++j) next[j] += w[j] / denom;
    }
    double total = 0;
    for (int j = 0; j < K; ++j) {
        next[j] /= static_cast<double>(n);
        total += next[j];
    }
    for (double& a : next) a /= total;  // exact simplex despite rounding
    return next;
}

struct EmResult {
    MixtureRatios alpha;
    int iterations = 0;
    bool converged = false;
    std::vector<MixtureRatios> trajectory;  // filled only when requested; includes init
};

// Iterates em_step from the labeled-frequency initialization until the
// largest componentwise change drops below tol.
inline EmResult em_estimate(const EmInputs& inputs, double tol = 1e-6, int max_iters = 100,
                            bool record_trajectory = false) {
    if (tol <= 0) throw std::invalid_argument("em_estimate: tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("em_estimate: max_iters must be at least 1");
    EmResult res;
    res.alpha = em_init(inputs.labeled_freqs);
    if (record_trajectory) res.trajectory.push_back(res.alpha);
    for (int it = 0; it < max_iters; ++it) {
        MixtureRatios next = em_step(inputs, res.alpha);
        double delta = 0;
        for (size_t j = 0; j < next.size(); ++j)
            delta = std::max(delta, std::abs(next[j] - res.alpha[j]));
        res.alpha = std::move(next);
        res.iterations = it + 1;
        if (record_trajectory) res.trajectory.push_back(res.alpha);
        if (delta < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace shapepu
