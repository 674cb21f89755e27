#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phantom.hpp"
#include "trainer.hpp"

namespace shapepu {

inline std::string fmt_double(double v, int precision = 15) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

// RFC 4180 field escaping
inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    out += "\r\n";
    return out;
}

// All knobs of the toolkit in one place. Text form is line-oriented
// key=value with '#' comments; unknown keys are rejected.
struct RunConfig {
    PhantomSpec phantom;
    TrainConfig train;
    int train_count = 40, val_count = 10, test_count = 15;
    uint64_t seed = 0;
    std::string data_root = "data";
    std::string out_dir = "";

    void apply(const std::string& key, const std::string& value) {
        auto to_int = [&](const std::string& v) {
            size_t pos = 0;
            const int r = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("config: bad integer for " + key);
            return r;
        };
        auto to_double = [&](const std::string& v) {
            size_t pos = 0;
            const double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("config: bad number for " + key);
            return r;
        };
        auto to_bool = [&](const std::string& v) {
            if (v == "1" || v == "true") return true;
            if (v == "0" || v == "false") return false;
            throw std::invalid_argument("config: bad boolean for " + key);
        };
        auto to_float_list = [&](const std::string& v) {
            std::vector<float> out;
            std::istringstream is(v);
            std::string tok;
            while (std::getline(is, tok, ',')) out.push_back(std::stof(tok));
            return out;
        };

        if (key == "size") phantom.size = to_int(value);
        else if (key == "foreground_classes") phantom.num_foreground = to_int(value);
        else if (key == "class_means") phantom.class_mean = to_float_list(value);
        else if (key == "class_sigmas") phantom.class_sigma = to_float_list(value);
        else if (key == "bias_amplitude") phantom.bias_amplitude = static_cast<float>(to_double(value));
        else if (key == "scribble_border_band") phantom.scribble_border_band = to_int(value);
        else if (key == "train_count") train_count = to_int(value);
        else if (key == "val_count") val_count = to_int(value);
        else if (key == "test_count") test_count = to_int(value);
        else if (key == "epochs") train.epochs = to_int(value);
        else if (key == "warmup_epochs") train.warmup_epochs = to_int(value);
        else if (key == "batch_size") train.batch_size = to_int(value);
        else if (key == "learning_rate") train.learning_rate = to_double(value);
        else if (key == "cutout_size") train.cutout_size = to_int(value);
        else if (key == "lambda1") train.loss_weights.lambda1 = to_double(value);
        else if (key == "lambda2") train.loss_weights.lambda2 = to_double(value);
        else if (key == "enable_cutout") train.enable_cutout = to_bool(value);
        else if (key == "enable_negative") train.enable_negative = to_bool(value);
        else if (key == "enable_consistency") train.enable_consistency = to_bool(value);
        else if (key == "background_in_marginal") train.include_background_in_marginal = to_bool(value);
        else if (key == "literal_unmasked_consistency") train.literal_unmasked_consistency = to_bool(value);
        else if (key == "stop_gradient_consistency") train.stop_gradient_consistency = to_bool(value);
        else if (key == "em_tol") train.em_tol = to_double(value);
        else if (key == "em_max_iters") train.em_max_iters = to_int(value);
        else if (key == "threads") train.threads = to_int(value);
        else if (key == "seed") {
            seed = static_cast<uint64_t>(std::stoull(value));
            phantom.seed = seed;
            train.seed = seed;
        } else if (key == "data_root") data_root = value;
        else if (key == "out_dir") out_dir = value;
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            // trim
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                            " is not key=value");
            std::string key = line.substr(0, eq), value = line.substr(eq + 1);
            const auto ke = key.find_last_not_of(" \t");
            key = key.substr(0, ke + 1);
            const auto vb = value.find_first_not_of(" \t");
            value = vb == std::string::npos ? "" : value.substr(vb);
            apply(key, value);
        }
    }

    // Canonical form: every semantic key in fixed order; the config hash is
    // over this. Paths (data_root, out_dir) identify an invocation, not an
    // experiment, so they stay out.
    std::string serialize() const {
        std::ostringstream os;
        os << "size=" << phantom.size << "\n";
        os << "foreground_classes=" << phantom.num_foreground << "\n";
        os << "class_means=";
        for (size_t i = 0; i < phantom.class_mean.size(); ++i)
            os << (i ? "," : "") << fmt_double(phantom.class_mean[i]);
        os << "\n";
        os << "class_sigmas=";
        for (size_t i = 0; i < phantom.class_sigma.size(); ++i)
            os << (i ? "," : "") << fmt_double(phantom.class_sigma[i]);
        os << "\n";
        os << "bias_amplitude=" << fmt_double(phantom.bias_amplitude) << "\n";
        os << "scribble_border_band=" << phantom.scribble_border_band << "\n";
        os << "train_count=" << train_count << "\n";
        os << "val_count=" << val_count << "\n";
        os << "test_count=" << test_count << "\n";
        os << "epochs=" << train.epochs << "\n";
        os << "warmup_epochs=" << train.warmup_epochs << "\n";
        os << "batch_size=" << train.batch_size << "\n";
        os << "learning_rate=" << fmt_double(train.learning_rate) << "\n";
        os << "cutout_size=" << train.cutout_size << "\n";
        os << "lambda1=" << fmt_double(train.loss_weights.lambda1) << "\n";
        os << "lambda2=" << fmt_double(train.loss_weights.lambda2) << "\n";
        os << "enable_cutout=" << (train.enable_cutout ? 1 : 0) << "\n";
        os << "enable_negative=" << (train.enable_negative ? 1 : 0) << "\n";
        os << "enable_consistency=" << (train.enable_consistency ? 1 : 0) << "\n";
        os << "background_in_marginal=" << (train.include_background_in_marginal ? 1 : 0) << "\n";
        os << "literal_unmasked_consistency=" << (train.literal_unmasked_consistency ? 1 : 0)
           << "\n";
        os << "stop_gradient_consistency=" << (train.stop_gradient_consistency ? 1 : 0) << "\n";
        os << "em_tol=" << fmt_double(train.em_tol) << "\n";
        os << "em_max_iters=" << train.em_max_iters << "\n";
        os << "threads=" << train.threads << "\n";
        os << "seed=" << seed << "\n";
        return os.str();
    }

    std::string hash() const {
        const std::string s = serialize();
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

// ablation presets mirroring the loss-term table rows
inline void apply_ablation(TrainConfig& cfg, const std::string& name) {
    if (name == "l+") {
        cfg.enable_cutout = cfg.enable_negative = cfg.enable_consistency = false;
    } else if (name == "l+cutout") {
        cfg.enable_cutout = true;
        cfg.enable_negative = cfg.enable_consistency = false;
    } else if (name == "l+l-") {
        cfg.enable_negative = true;
        cfg.enable_cutout = cfg.enable_consistency = false;
    } else if (name == "l+l-cutout") {
        cfg.enable_cutout = cfg.enable_negative = true;
        cfg.enable_consistency = false;
    } else if (name == "full") {
        cfg.enable_cutout = cfg.enable_negative = cfg.enable_consistency = true;
    } else {
        throw std::invalid_argument(
            "unknown ablation '" + name +
            "' (expected l+, l+cutout, l+l-, l+l-cutout, full)");
    }
}

}  // namespace shapepu
