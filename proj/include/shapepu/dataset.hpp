#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "grid.hpp"
#include "pgm_io.hpp"
#include "phantom.hpp"
#include "util.hpp"

namespace shapepu {

namespace fs = std::filesystem;

// On-disk layout per split directory:
//   img_<i>.pgm  P5 16-bit, intensities mapped linearly to [0, 65535]
//   msk_<i>.pgm  P5 8-bit class ids
//   scr_<i>.pgm  P5 8-bit class ids, 255 = unlabeled
//   meta_<i>.txt key=value: seed, index, intensity range, true ratios
// Image indices are global across splits so every sample has a unique
// generator stream.

struct LoadedSample {
    int index = 0;
    uint64_t seed = 0;
    ImageGrid image;
    LabelGrid mask;
    LabelGrid scribble;
    std::vector<double> true_ratios;
};

inline void write_sample(const fs::path& dir, int index, const Sample& s, uint64_t seed,
                         const std::string& config_hash) {
    float lo = s.image.v.empty() ? 0.0f : s.image.v[0], hi = lo;
    for (float v : s.image.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Grid<uint16_t> q(s.image.height, s.image.width);
    const double range = static_cast<double>(hi) - lo;
    for (size_t i = 0; i < s.image.size(); ++i)
        q.v[i] = range > 0 ? static_cast<uint16_t>(
                                 std::lround((s.image.v[i] - lo) / range * 65535.0))
                           : 0;
    const std::string suffix = std::to_string(index) + ".pgm";
    write_pgm16(dir / ("img_" + suffix), q);
    write_pgm8(dir / ("msk_" + suffix), s.mask);
    write_pgm8(dir / ("scr_" + suffix), s.scribble);

    std::ofstream meta(dir / ("meta_" + std::to_string(index) + ".txt"));
    meta << "index=" << index << "\n";
    meta << "seed=" << seed << "\n";
    meta << "config_hash=" << config_hash << "\n";
    meta << "intensity_min=" << fmt_double(lo, 9) << "\n";
    meta << "intensity_max=" << fmt_double(hi, 9) << "\n";
    meta << "true_ratios=";
    for (size_t c = 0; c < s.true_ratios.size(); ++c)
        meta << (c ? "," : "") << fmt_double(s.true_ratios[c], 17);
    meta << "\n";
    if (!meta) throw std::runtime_error("dataset: meta write failed for index " +
                                        std::to_string(index));
}

inline LoadedSample read_sample(const fs::path& dir, int index) {
    LoadedSample out;
    out.index = index;
    const std::string suffix = std::to_string(index) + ".pgm";
    const Grid<uint16_t> q = read_pgm16(dir / ("img_" + suffix));
    out.mask = read_pgm8(dir / ("msk_" + suffix));
    out.scribble = read_pgm8(dir / ("scr_" + suffix));

    std::ifstream meta(dir / ("meta_" + std::to_string(index) + ".txt"));
    if (!meta) throw std::runtime_error("dataset: missing meta for index " + std::to_string(index));
    std::string line;
    float lo = 0, hi = 0;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "seed") out.seed = std::stoull(value);
        else if (key == "intensity_min") lo = std::stof(value);
        else if (key == "intensity_max") hi = std::stof(value);
        else if (key == "true_ratios") {
            std::istringstream is(value);
            std::string tok;
            while (std::getline(is, tok, ',')) out.true_ratios.push_back(std::stod(tok));
        }
    }
    out.image = ImageGrid(q.height, q.width);
    const double range = static_cast<double>(hi) - lo;
    for (size_t i = 0; i < q.size(); ++i)
        out.image.v[i] = static_cast<float>(lo + q.v[i] / 65535.0 * range);
    return out;
}

struct SplitLayout {
    std::string name;
    int count = 0;
    int offset = 0;  // global index of the split's first sample
};

inline std::vector<SplitLayout> split_layout(const RunConfig& cfg) {
    return {{"train", cfg.train_count, 0},
            {"val", cfg.val_count, cfg.train_count},
            {"test", cfg.test_count, cfg.train_count + cfg.val_count}};
}

// Generates the full phantom dataset. Refuses to touch an existing non-empty
// root unless force is set.
inline void generate_dataset(const RunConfig& cfg, bool force) {
    const fs::path root(cfg.data_root);
    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!force)
            throw std::runtime_error("dataset: " + root.string() +
                                     " exists and is not empty (use --force to overwrite)");
        fs::remove_all(root);
    }
    fs::create_directories(root);
    const std::string hash = cfg.hash();

    std::ofstream manifest(root / "manifest.txt");
    manifest << "config_hash=" << hash << "\n";
    manifest << "seed=" << cfg.seed << "\n";

    for (const auto& split : split_layout(cfg)) {
        const fs::path dir = root / split.name;
        fs::create_directories(dir);
        std::vector<Sample> samples(split.count);
        parallel_for(split.count, effective_threads(cfg.train.threads), [&](int i) {
            samples[i] = generate_phantom(cfg.phantom, split.offset + i);
        });
        for (int i = 0; i < split.count; ++i) {
            const int index = split.offset + i;
            write_sample(dir, index, samples[i], cfg.seed, hash);
            manifest << split.name << "/" << index << " true_ratios=";
            for (size_t c = 0; c < samples[i].true_ratios.size(); ++c)
                manifest << (c ? "," : "") << fmt_double(samples[i].true_ratios[c], 17);
            manifest << "\n";
        }
    }
    if (!manifest) throw std::runtime_error("dataset: manifest write failed");
}

inline std::vector<LoadedSample> load_split(const std::string& data_root,
                                            const std::string& split) {
    const fs::path dir = fs::path(data_root) / split;
    if (!fs::exists(dir))
        throw std::runtime_error("dataset: split directory missing: " + dir.string());
    std::vector<int> indices;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("img_", 0) == 0 && name.size() > 8)
            indices.push_back(std::stoi(name.substr(4, name.size() - 8)));
    }
    std::sort(indices.begin(), indices.end());
    if (indices.empty()) throw std::runtime_error("dataset: split is empty: " + dir.string());
    std::vector<LoadedSample> out;
    out.reserve(indices.size());
    for (int idx : indices) out.push_back(read_sample(dir, idx));
    return out;
}

}  // namespace shapepu
