#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "augment.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "mixture_em.hpp"
#include "model.hpp"
#include "phantom.hpp"
#include "pu_partition.hpp"
#include "util.hpp"

namespace shapepu {

struct TrainConfig {
    int epochs = 200;
    int warmup_epochs = 20;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    LossWeights loss_weights;  // lambda1 = 1, lambda2 = 0.05
    int cutout_size = 16;
    uint64_t seed = 0;

    // ablation switches, mirroring the loss-term table rows
    bool enable_cutout = true;
    bool enable_negative = true;
    bool enable_consistency = true;

    // variant flags, all off by default
    bool include_background_in_marginal = false;
    bool literal_unmasked_consistency = false;
    bool stop_gradient_consistency = false;

    double em_tol = 1e-6;
    int em_max_iters = 100;
    int threads = 0;  // 0 = hardware, capped by SHAPEPU_THREADS

    void validate() const {
        if (epochs < 0 || warmup_epochs < 0 || warmup_epochs > epochs)
            throw std::invalid_argument("TrainConfig: need 0 <= warmup_epochs <= epochs");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (learning_rate < 0) throw std::invalid_argument("TrainConfig: negative learning rate");
        if (loss_weights.lambda1 < 0 || loss_weights.lambda2 < 0)
            throw std::invalid_argument("TrainConfig: negative loss weight");
        if (cutout_size < 0) throw std::invalid_argument("TrainConfig: negative cutout size");
        if (enable_consistency && !enable_cutout)
            throw std::invalid_argument("TrainConfig: consistency loss requires cutout");
    }
};

// One preprocessed training sample: normalized intensity as network input.
struct TrainItem {
    Tensor<float> input;  // (1,1,H,W), zero mean, unit variance
    LabelGrid scribble;
    LabelGrid mask;
};

inline TrainItem make_train_item(const ImageGrid& image, const LabelGrid& scribble,
                                 const LabelGrid& mask) {
    TrainItem item;
    const ImageGrid norm = normalize_intensity(image);
    item.input = Tensor<float>(Shape{1, 1, norm.height, norm.width});
    std::copy(norm.v.begin(), norm.v.end(), item.input.data.begin());
    item.scribble = scribble;
    item.mask = mask;
    return item;
}

inline TrainItem make_train_item(const Sample& s) {
    return make_train_item(s.image, s.scribble, s.mask);
}

// raw class frequencies among labeled pixels (no flooring; em_init floors)
inline std::vector<double> labeled_frequencies(const LabelGrid& scribble, int num_classes) {
    std::vector<int64_t> counts(num_classes, 0);
    int64_t total = 0;
    for (uint8_t v : scribble.v) {
        if (v == kUnlabeled) continue;
        if (v >= num_classes) throw std::invalid_argument("labeled_frequencies: class out of range");
        ++counts[v];
        ++total;
    }
    std::vector<double> freqs(num_classes, 0.0);
    if (total > 0)
        for (int c = 0; c < num_classes; ++c)
            freqs[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
    return freqs;
}

struct AlphaEstimate {
    MixtureRatios alpha;
    int iterations = 0;
    bool converged = false;
    std::vector<int> floored_classes;  // classes absent from the scribbles
};

inline EmInputs em_inputs_from_posteriors(const Tensor<float>& prob, const LabelGrid& scribble,
                                          int num_classes) {
    const size_t plane = static_cast<size_t>(scribble.height) * scribble.width;
    EmInputs in;
    in.num_classes = num_classes;
    in.labeled_freqs = labeled_frequencies(scribble, num_classes);
    for (size_t px = 0; px < plane; ++px) {
        if (scribble.v[px] != kUnlabeled) continue;
        for (int c = 0; c < num_classes; ++c)
            in.posteriors.push_back(prob[static_cast<size_t>(c) * plane + px]);
    }
    return in;
}

// per-image mixture proportion estimate from the current model (inference mode)
inline AlphaEstimate estimate_alpha(const SegModel<float>& model, const TrainItem& item,
                                    double tol = 1e-6, int max_iters = 100) {
    const Tensor<float> prob = model.infer(item.input);
    EmInputs in = em_inputs_from_posteriors(prob, item.scribble, model.num_classes);
    AlphaEstimate est;
    for (int c = 0; c < model.num_classes; ++c)
        if (in.labeled_freqs[c] <= 0.0) est.floored_classes.push_back(c);
    EmResult res = em_estimate(in, tol, max_iters);
    est.alpha = std::move(res.alpha);
    est.iterations = res.iterations;
    est.converged = res.converged;
    return est;
}

inline LabelGrid argmax_classes(const Tensor<float>& prob) {
    const int rank = prob.shape.rank();
    const int C = prob.shape.dim(rank - 3), H = prob.shape.dim(rank - 2),
              W = prob.shape.dim(rank - 1);
    const size_t plane = static_cast<size_t>(H) * W;
    LabelGrid out(H, W, 0);
    for (size_t px = 0; px < plane; ++px) {
        int best = 0;
        float best_p = prob[px];
        for (int c = 1; c < C; ++c) {
            const float p = prob[static_cast<size_t>(c) * plane + px];
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        out.v[px] = static_cast<uint8_t>(best);
    }
    return out;
}

struct Adam {
    double lr, beta1, beta2, eps;
    long steps = 0;
    std::vector<std::vector<double>> m, v;

    Adam(double lr_, double b1, double b2, double eps_) : lr(lr_), beta1(b1), beta2(b2), eps(eps_) {}

    void step(const std::vector<NodePtr<float>>& params) {
        if (m.empty()) {
            for (const auto& p : params) {
                m.emplace_back(p->value.numel(), 0.0);
                v.emplace_back(p->value.numel(), 0.0);
            }
        }
        ++steps;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& val = params[pi]->value;
            const auto& grad = params[pi]->grad;
            for (size_t i = 0; i < val.numel(); ++i) {
                const double g = grad[i];
                m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * g;
                v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * g * g;
                const double update = lr * (m[pi][i] / bc1) / (std::sqrt(v[pi][i] / bc2) + eps);
                val[i] = static_cast<float>(static_cast<double>(val[i]) - update);
            }
        }
    }
};

struct EpochMetrics {
    int epoch = 0;
    TrainPhase phase = TrainPhase::warmup;
    LossReport mean_report;             // per-image mean of the loss parts
    std::vector<double> val_dice;       // per class, post-processed
    double val_mean_fg_dice = 0;
    double seconds = 0;
};

struct StepRecord {
    int epoch = 0, step = 0;
    LossReport report;  // summed over the batch images
};

struct FitResult {
    Checkpoint best;
    std::vector<EpochMetrics> history;
};

class Trainer {
public:
    Trainer(SegModel<float>& model, const TrainConfig& cfg)
        : model_(model),
          cfg_(cfg),
          adam_(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {
        cfg_.validate();
    }

    TrainPhase phase_of(int epoch) const {
        return epoch < cfg_.warmup_epochs ? TrainPhase::warmup : TrainPhase::full;
    }

    // One pass over the training set in fixed order. Re-estimates the mixture
    // proportions per image before the first batch (full phase only, since the
    // negative loss is inactive during warmup).
    LossReport train_epoch(const std::vector<TrainItem>& train, int epoch,
                           std::vector<StepRecord>* steps = nullptr) {
        if (train.empty()) throw std::invalid_argument("train_epoch: empty dataset");
        const TrainPhase phase = phase_of(epoch);
        const bool use_negative = cfg_.enable_negative && phase == TrainPhase::full;
        const int n = static_cast<int>(train.size());

        std::vector<MixtureRatios> alphas(n);
        if (use_negative) {
            const int threads = effective_threads(cfg_.threads);
            parallel_for(n, threads, [&](int i) {
                alphas[i] = estimate_alpha(model_, train[i], cfg_.em_tol, cfg_.em_max_iters).alpha;
            });
        }

        LossReport epoch_sum;
        const auto params = model_.parameters();
        int step_index = 0;
        for (int start = 0; start < n; start += cfg_.batch_size, ++step_index) {
            const int end = std::min(n, start + cfg_.batch_size);
            model_.zero_grads();
            LossReport batch_sum;
            for (int i = start; i < end; ++i) {
                LossReport rep = image_step(train[i], i, epoch, phase,
                                            use_negative ? &alphas[i] : nullptr);
                if (!std::isfinite(rep.total))
                    throw std::runtime_error("train_epoch: non-finite loss at epoch " +
                                             std::to_string(epoch) + " step " +
                                             std::to_string(step_index) + " image " +
                                             std::to_string(i));
                batch_sum.accumulate(rep);
            }
            adam_.step(params);
            if (steps) steps->push_back({epoch, step_index, batch_sum});
            epoch_sum.accumulate(batch_sum);
        }
        epoch_sum.scale_values(1.0 / n);
        return epoch_sum;
    }

    // post-processed per-class Dice means over a validation set
    std::pair<std::vector<double>, double> evaluate(const std::vector<TrainItem>& items) const {
        const int K = model_.num_classes;
        std::vector<double> dice_sum(K, 0.0);
        double fg_sum = 0;
        if (items.empty()) return {dice_sum, 0.0};
        std::vector<EvalResult> results(items.size());
        const int threads = effective_threads(cfg_.threads);
        parallel_for(static_cast<int>(items.size()), threads, [&](int i) {
            LabelGrid pred = argmax_classes(model_.infer(items[i].input));
            pred = keep_largest_component(pred, K);
            results[i] = EvalResult::compute(pred, items[i].mask, K);
        });
        for (const auto& r : results) {
            for (int c = 0; c < K; ++c) dice_sum[c] += r.dice_per_class[c];
            fg_sum += r.mean_foreground_dice;
        }
        for (auto& d : dice_sum) d /= static_cast<double>(items.size());
        return {dice_sum, fg_sum / static_cast<double>(items.size())};
    }

private:
    LossReport image_step(const TrainItem& item, int image_index, int epoch, TrainPhase phase,
                          const MixtureRatios* alpha) {
        const int H = item.input.shape.dim(2), W = item.input.shape.dim(3);
        auto input = constant(item.input);
        auto prob = model_.forward(input);

        LossParts<float> parts;
        parts.l_plus = supervised_loss(prob, item.scribble);
        parts.labeled_pixels = count_labeled(item.scribble);

        NodePtr<float> prob_aug;
        CutoutAugmentation aug;
        if (cfg_.enable_cutout) {
            Rng aug_rng(stream_seed(cfg_.seed, static_cast<uint64_t>(image_index),
                                    static_cast<uint64_t>(epoch)));
            aug = sample_augmentation(H, W, cfg_.cutout_size, aug_rng);
            prob_aug = model_.forward(constant(apply(aug, item.input)));
            const LabelGrid aug_scribble = transform_labels(aug, item.scribble);
            const int aug_labeled = count_labeled(aug_scribble);
            if (aug_labeled > 0) {
                parts.l_plus = add(parts.l_plus, supervised_loss(prob_aug, aug_scribble));
                parts.labeled_pixels += aug_labeled;
            }
            if (cfg_.enable_consistency) {
                parts.l_global = global_consistency_loss(prob, prob_aug, aug,
                                                         !cfg_.literal_unmasked_consistency,
                                                         cfg_.stop_gradient_consistency);
                parts.consistency_pixels =
                    static_cast<long>(item.input.numel()) - static_cast<long>(aug.square_size) *
                                                                aug.square_size;
            }
        }
        if (alpha && phase == TrainPhase::full) {
            PartitionResult part = partition(prob->value, item.scribble, *alpha);
            parts.l_minus = negative_loss(prob, part, cfg_.include_background_in_marginal,
                                          &parts.negative);
        }
        auto [loss, report] = total_loss(parts, cfg_.loss_weights, phase);
        backward(loss);
        return report;
    }

    SegModel<float>& model_;
    TrainConfig cfg_;
    Adam adam_;
};

// Full training protocol: warmup then full objective, best-validation
// checkpoint retention, one history row per epoch.
inline FitResult fit(SegModel<float>& model, const std::vector<TrainItem>& train,
                     const std::vector<TrainItem>& val, const TrainConfig& cfg,
                     const std::string& config_hash = "",
                     const std::function<void(const EpochMetrics&, const SegModel<float>&,
                                              const std::vector<StepRecord>&)>& epoch_cb = {},
                     int start_epoch = 0) {
    cfg.validate();
    FitResult out;
    out.best.model = model.clone();
    out.best.epoch = start_epoch;
    out.best.config_hash = config_hash;
    double best_dice = -1.0;

    Trainer trainer(model, cfg);
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<StepRecord> steps;
        EpochMetrics m;
        m.epoch = epoch;
        m.phase = trainer.phase_of(epoch);
        m.mean_report = trainer.train_epoch(train, epoch, &steps);
        auto [per_class, mean_fg] = trainer.evaluate(val);
        m.val_dice = std::move(per_class);
        m.val_mean_fg_dice = mean_fg;
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (m.val_mean_fg_dice > best_dice) {
            best_dice = m.val_mean_fg_dice;
            out.best.model = model.clone();
            out.best.epoch = epoch;
        }
        out.history.push_back(m);
        if (epoch_cb) epoch_cb(m, model, steps);
    }
    return out;
}

}  // namespace shapepu
