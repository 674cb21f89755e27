// Command-line surface of the scribble-supervised PU segmentation toolkit.
// Subcommands: gen-data, estimate-alpha, train, eval, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 verification
// failure (gradcheck).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shapepu/shapepu.hpp"

namespace fs = std::filesystem;
using namespace shapepu;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    bool force = false;
};

RunConfig build_config(const GlobalArgs& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg.load_file(g.config_path);
    if (g.seed) cfg.apply("seed", std::to_string(*g.seed));
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    return cfg;
}

void write_config_copy(const fs::path& dir, const RunConfig& cfg) {
    std::ofstream out(dir / "config.txt");
    out << "# config_hash=" << cfg.hash() << "\n" << cfg.serialize();
    if (!out) throw std::runtime_error("cannot write config copy in " + dir.string());
}

std::vector<TrainItem> to_items(const std::vector<LoadedSample>& samples) {
    std::vector<TrainItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) items.push_back(make_train_item(s.image, s.scribble, s.mask));
    return items;
}

std::string fmt9(double v) { return fmt_double(v, 9); }

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, bool force) {
    generate_dataset(cfg, force);
    int total = 0;
    for (const auto& s : split_layout(cfg)) total += s.count;
    std::cout << "wrote " << total << " samples (" << cfg.train_count << " train, "
              << cfg.val_count << " val, " << cfg.test_count << " test) under " << cfg.data_root
              << " [config " << cfg.hash() << "]\n";
    return 0;
}

// posteriors from the known generative densities, prior = labeled frequencies
EmInputs oracle_em_inputs(const RunConfig& cfg, int index, const LabelGrid& scribble) {
    const Sample s = generate_phantom(cfg.phantom, index);
    const int K = cfg.phantom.num_classes();
    const MixtureRatios prior = em_init(labeled_frequencies(scribble, K));
    EmInputs in;
    in.num_classes = K;
    in.labeled_freqs = labeled_frequencies(scribble, K);
    const size_t plane = s.image.size();
    std::vector<double> dens(K);
    for (size_t px = 0; px < plane; ++px) {
        if (scribble.v[px] != kUnlabeled) continue;
        double denom = 0;
        for (int c = 0; c < K; ++c) {
            const double sigma = cfg.phantom.class_sigma[c];
            const double z = (s.image.v[px] - cfg.phantom.class_mean[c] - s.bias.v[px]) / sigma;
            dens[c] = prior[c] * std::exp(-0.5 * z * z) / sigma;
            denom += dens[c];
        }
        for (int c = 0; c < K; ++c) in.posteriors.push_back(dens[c] / denom);
    }
    return in;
}

int cmd_estimate_alpha(const RunConfig& cfg, const std::string& split,
                       const std::string& checkpoint_path, bool oracle, bool trajectories) {
    const auto samples = load_split(cfg.data_root, split);
    const int K = cfg.phantom.num_classes();

    SegModel<float> model;
    if (!checkpoint_path.empty()) {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        if (ck.model.num_classes != K)
            throw std::runtime_error("checkpoint has " + std::to_string(ck.model.num_classes) +
                                     " classes, dataset config has " + std::to_string(K));
        model = ck.model;
    } else if (!oracle) {
        model = SegModel<float>::create(K, cfg.seed);  // diagnostic mode: untrained network
    }

    const fs::path out_dir(cfg.out_dir.empty() ? "alpha_estimates" : cfg.out_dir);
    fs::create_directories(out_dir);
    write_config_copy(out_dir, cfg);
    std::ofstream csv(out_dir / "alpha_estimates.csv", std::ios::binary);
    std::vector<std::string> header = {"index", "iterations", "converged", "l1_error"};
    for (int c = 0; c < K; ++c) header.push_back("alpha_est_" + std::to_string(c));
    for (int c = 0; c < K; ++c) header.push_back("alpha_true_" + std::to_string(c));
    csv << csv_row(header);

    double l1_sum = 0;
    for (const auto& s : samples) {
        EmInputs in;
        if (oracle) {
            in = oracle_em_inputs(cfg, s.index, s.scribble);
        } else {
            const TrainItem item = make_train_item(s.image, s.scribble, s.mask);
            in = em_inputs_from_posteriors(model.infer(item.input), s.scribble, K);
        }
        EmResult res = em_estimate(in, cfg.train.em_tol, cfg.train.em_max_iters, trajectories);
        double l1 = 0;
        for (int c = 0; c < K; ++c) l1 += std::abs(res.alpha[c] - s.true_ratios[c]);
        l1_sum += l1;

        std::vector<std::string> row = {std::to_string(s.index), std::to_string(res.iterations),
                                        res.converged ? "1" : "0", fmt_double(l1, 12)};
        for (int c = 0; c < K; ++c) row.push_back(fmt_double(res.alpha[c], 12));
        for (int c = 0; c < K; ++c) row.push_back(fmt_double(s.true_ratios[c], 12));
        csv << csv_row(row);

        if (trajectories) {
            std::ofstream traj(out_dir / ("alpha_traj_" + std::to_string(s.index) + ".csv"),
                               std::ios::binary);
            std::vector<std::string> thead = {"iter"};
            for (int c = 0; c < K; ++c) thead.push_back("alpha_" + std::to_string(c));
            traj << csv_row(thead);
            for (size_t it = 0; it < res.trajectory.size(); ++it) {
                std::vector<std::string> trow = {std::to_string(it)};
                for (int c = 0; c < K; ++c) trow.push_back(fmt_double(res.trajectory[it][c], 12));
                traj << csv_row(trow);
            }
        }
    }
    std::cout << "estimated alpha for " << samples.size() << " images (" << split
              << "), mean L1 error " << fmt9(l1_sum / samples.size()) << ", results in "
              << out_dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, bool force, bool resume) {
    if (cfg.out_dir.empty())
        throw std::invalid_argument("train: an output run directory is required (--out)");
    const fs::path run_dir(cfg.out_dir);
    if (fs::exists(run_dir) && !fs::is_empty(run_dir) && !resume) {
        if (!force)
            throw std::runtime_error("train: run directory " + run_dir.string() +
                                     " exists (use --force for a fresh run or --resume)");
        fs::remove_all(run_dir);
    }
    fs::create_directories(run_dir);

    const auto train_samples = load_split(cfg.data_root, "train");
    const auto val_samples = load_split(cfg.data_root, "val");
    const auto train_items = to_items(train_samples);
    const auto val_items = to_items(val_samples);
    const int K = cfg.phantom.num_classes();

    SegModel<float> model;
    int start_epoch = 0;
    const fs::path last_path = run_dir / "last.ckpt";
    if (resume && fs::exists(last_path)) {
        Checkpoint ck = load_checkpoint(last_path);
        model = ck.model;
        start_epoch = ck.epoch + 1;
        std::cout << "resuming from epoch " << start_epoch << "\n";
    } else {
        model = SegModel<float>::create(K, cfg.seed);
    }

    write_config_copy(run_dir, cfg);
    const std::string hash = cfg.hash();
    const bool fresh = start_epoch == 0;
    std::ofstream history(run_dir / "history.csv",
                          fresh ? std::ios::binary | std::ios::trunc
                                : std::ios::binary | std::ios::app);
    std::ofstream steps_csv(run_dir / "steps.csv",
                            fresh ? std::ios::binary | std::ios::trunc
                                  : std::ios::binary | std::ios::app);
    if (fresh) {
        std::vector<std::string> hh = {"epoch", "phase", "l_plus", "l_minus", "l_global", "total"};
        for (int c = 1; c < K; ++c) hh.push_back("val_dice_" + std::to_string(c));
        hh.push_back("val_mean_dice");
        history << csv_row(hh);
        steps_csv << csv_row({"epoch", "step", "l_plus", "l_minus", "l_global", "total",
                              "labeled_pixels", "negative_terms"});
    }

    auto epoch_cb = [&](const EpochMetrics& m, const SegModel<float>& mdl,
                        const std::vector<StepRecord>& steps) {
        std::vector<std::string> row = {
            std::to_string(m.epoch), m.phase == TrainPhase::warmup ? "warmup" : "full",
            fmt9(m.mean_report.l_plus), fmt9(m.mean_report.l_minus), fmt9(m.mean_report.l_global),
            fmt9(m.mean_report.total)};
        for (int c = 1; c < K; ++c) row.push_back(fmt9(m.val_dice[c]));
        row.push_back(fmt9(m.val_mean_fg_dice));
        history << csv_row(row);
        history.flush();
        for (const auto& s : steps)
            steps_csv << csv_row({std::to_string(s.epoch), std::to_string(s.step),
                                  fmt9(s.report.l_plus), fmt9(s.report.l_minus),
                                  fmt9(s.report.l_global), fmt9(s.report.total),
                                  std::to_string(s.report.labeled_pixels),
                                  std::to_string(s.report.negative_terms)});
        steps_csv.flush();
        save_checkpoint(last_path, mdl, m.epoch, hash);
        std::cout << "epoch " << m.epoch << " ["
                  << (m.phase == TrainPhase::warmup ? "warmup" : "full") << "] total "
                  << fmt9(m.mean_report.total) << " val dice " << fmt9(m.val_mean_fg_dice) << " ("
                  << fmt_double(m.seconds, 3) << "s)\n";
    };

    FitResult result = fit(model, train_items, val_items, cfg.train, hash, epoch_cb, start_epoch);
    save_checkpoint(run_dir / "best.ckpt", result.best.model, result.best.epoch, hash);
    save_checkpoint(run_dir / "final.ckpt", model,
                    cfg.train.epochs > 0 ? cfg.train.epochs - 1 : 0, hash);
    double best_val = -1;
    for (const auto& m : result.history) best_val = std::max(best_val, m.val_mean_fg_dice);
    std::cout << "done: " << result.history.size() << " epochs, best val mean dice "
              << fmt9(std::max(0.0, best_val)) << " at epoch " << result.best.epoch << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& split,
             bool postprocess) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    const auto samples = load_split(cfg.data_root, split);
    const int K = cfg.phantom.num_classes();
    if (ck.model.num_classes != K)
        throw std::runtime_error("eval: checkpoint has " + std::to_string(ck.model.num_classes) +
                                 " classes, dataset config has " + std::to_string(K));

    const fs::path out_dir(cfg.out_dir.empty() ? "eval_out" : cfg.out_dir);
    fs::create_directories(out_dir);
    write_config_copy(out_dir, cfg);
    std::ofstream csv(out_dir / "eval.csv", std::ios::binary);
    csv << csv_row({"image_id", "class", "dice", "hd"});

    std::vector<double> dice_sum(K, 0.0);
    std::vector<double> hd_sum(K, 0.0);
    std::vector<int> hd_n(K, 0);
    for (const auto& s : samples) {
        const TrainItem item = make_train_item(s.image, s.scribble, s.mask);
        LabelGrid pred = argmax_classes(ck.model.infer(item.input));
        if (postprocess) pred = keep_largest_component(pred, K);
        write_pgm8(out_dir / ("pred_" + std::to_string(s.index) + ".pgm"), pred);
        const EvalResult r = EvalResult::compute(pred, s.mask, K);
        for (int c = 0; c < K; ++c) {
            dice_sum[c] += r.dice_per_class[c];
            std::string hd_str = "undefined";
            if (r.hd_per_class[c]) {
                hd_str = fmt9(*r.hd_per_class[c]);
                hd_sum[c] += *r.hd_per_class[c];
                ++hd_n[c];
            }
            csv << csv_row({std::to_string(s.index), std::to_string(c),
                            fmt_double(r.dice_per_class[c], 12), hd_str});
        }
    }
    double fg_dice = 0;
    for (int c = 0; c < K; ++c) {
        const double mean_dice = dice_sum[c] / static_cast<double>(samples.size());
        if (c > 0) fg_dice += mean_dice;
        csv << csv_row({"mean", std::to_string(c), fmt_double(mean_dice, 12),
                        hd_n[c] ? fmt9(hd_sum[c] / hd_n[c]) : "undefined"});
    }
    fg_dice /= (K - 1);
    std::cout << "evaluated " << samples.size() << " images (" << split
              << "), mean foreground dice " << fmt9(fg_dice)
              << (postprocess ? "" : " [no postprocess]") << ", results in " << out_dir.string()
              << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed, int seeds_per_op, bool corrupt) {
    GradCheckOptions opt;
    opt.seed = seed;
    opt.seeds_per_op = seeds_per_op;
    opt.corrupt = corrupt;
    const auto report = run_gradient_checks(opt);
    bool all_pass = true;
    double worst = 0;
    for (const auto& e : report) {
        std::printf("%-26s worst rel err %.3e  %s\n", e.name.c_str(), e.worst_rel_err,
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
        worst = std::max(worst, e.worst_rel_err);
    }
    std::printf("gradcheck: %zu checks, worst rel err %.3e, %s\n", report.size(), worst,
                all_pass ? "all passed" : "FAILURES present");
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scribble-supervised PU segmentation toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key=value configuration file");
    app.add_option("--seed", g.seed, "global RNG seed (overrides config)");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_flag("--force", g.force, "overwrite existing outputs");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic phantom dataset");
    gen->fallthrough();
    int gen_size = 0;
    gen->add_option("--size", gen_size, "image side length in pixels");

    auto* est = app.add_subcommand("estimate-alpha", "estimate mixture proportions per image");
    est->fallthrough();
    std::string est_checkpoint, est_split = "test";
    bool est_oracle = false, est_traj = false;
    est->add_option("--checkpoint", est_checkpoint, "model checkpoint (default: untrained model)");
    est->add_option("--split", est_split, "dataset split (default: test)");
    est->add_flag("--oracle-posteriors", est_oracle,
                  "use the generator's exact posteriors instead of a network");
    est->add_flag("--trajectories", est_traj, "dump per-image alpha trajectories");

    auto* train = app.add_subcommand("train", "train the segmentation model");
    train->fallthrough();
    std::string ablation;
    bool resume = false;
    train->add_option("--ablation", ablation, "loss arm: l+, l+cutout, l+l-, l+l-cutout, full");
    train->add_flag("--resume", resume, "continue from the run directory's last checkpoint");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->fallthrough();
    std::string eval_checkpoint, eval_split = "test";
    bool no_postprocess = false;
    eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval->add_option("--split", eval_split, "dataset split (default: test)");
    eval->add_flag("--no-postprocess", no_postprocess, "skip largest-component filtering");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
    gc->fallthrough();
    int gc_seeds = 20;
    bool gc_corrupt = false;
    gc->add_option("--seeds", gc_seeds, "random seeds per op (default 20)");
    gc->add_flag("--self-test-corrupt", gc_corrupt)->group("");  // harness self-test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        RunConfig cfg = build_config(g);
        if (gen->parsed()) {
            if (gen_size > 0) cfg.apply("size", std::to_string(gen_size));
            if (!g.out_dir.empty()) cfg.data_root = g.out_dir;
            return cmd_gen_data(cfg, g.force);
        }
        if (est->parsed())
            return cmd_estimate_alpha(cfg, est_split, est_checkpoint, est_oracle, est_traj);
        if (train->parsed()) {
            if (!ablation.empty()) apply_ablation(cfg.train, ablation);
            return cmd_train(cfg, g.force, resume);
        }
        if (eval->parsed()) return cmd_eval(cfg, eval_checkpoint, eval_split, !no_postprocess);
        if (gc->parsed()) return cmd_gradcheck(g.seed.value_or(0), gc_seeds, gc_corrupt);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
