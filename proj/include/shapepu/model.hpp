#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "grid.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace shapepu {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

struct ConvLayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    bool relu_after = true;
};

// Compact fixed-resolution segmentation network: three 3x3 conv+relu stages
// and a 1x1 projection to class logits, followed by a channel softmax.
template <typename T = float>
struct SegModel {
    int num_classes = 0;
    std::vector<ConvLayerSpec> layers;
    std::vector<NodePtr<T>> weights;
    std::vector<NodePtr<T>> biases;

    static std::vector<ConvLayerSpec> default_arch(int num_classes) {
        return {{1, 16, 3, true}, {16, 32, 3, true}, {32, 16, 3, true}, {16, num_classes, 1, false}};
    }

    // Kaiming fan-in scaled normal weights, zero biases. The relu gain of
    // sqrt(2) only applies where a relu follows; the logit head gets a small
    // gain so a fresh model predicts near-uniform probabilities.
    static SegModel create(int num_classes, uint64_t seed) {
        if (num_classes < 2) throw std::invalid_argument("SegModel: need at least 2 classes");
        SegModel m;
        m.num_classes = num_classes;
        m.layers = default_arch(num_classes);
        for (size_t li = 0; li < m.layers.size(); ++li) {
            const auto& l = m.layers[li];
            Rng rng(stream_seed(seed, 0x5EC0DEull, li));
            const double gain = l.relu_after ? 2.0 : 1.0;
            const double std_dev = std::sqrt(gain / (l.in_channels * l.kernel * l.kernel));
            Tensor<T> w(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel});
            for (auto& v : w.data) v = static_cast<T>(rng.normal() * std_dev);
            m.weights.push_back(parameter(std::move(w)));
            m.biases.push_back(parameter(Tensor<T>(Shape{l.out_channels})));
        }
        return m;
    }

    // deep copy with fresh parameter nodes
    SegModel clone() const {
        SegModel m;
        m.num_classes = num_classes;
        m.layers = layers;
        for (size_t i = 0; i < weights.size(); ++i) {
            m.weights.push_back(parameter(weights[i]->value));
            m.biases.push_back(parameter(biases[i]->value));
        }
        return m;
    }

    std::vector<NodePtr<T>> parameters() const {
        std::vector<NodePtr<T>> out;
        for (size_t i = 0; i < weights.size(); ++i) {
            out.push_back(weights[i]);
            out.push_back(biases[i]);
        }
        return out;
    }

    void zero_grads() const {
        for (auto& p : parameters()) p->zero_grad();
    }

    // graph forward; input (1,1,H,W), output per-pixel class probabilities
    NodePtr<T> forward(const NodePtr<T>& input) const {
        NodePtr<T> x = input;
        for (size_t li = 0; li < layers.size(); ++li) {
            x = conv2d(x, weights[li], biases[li]);
            if (layers[li].relu_after) x = relu(x);
            if (!x->value.all_finite())
                throw std::runtime_error("forward: non-finite values after layer " +
                                         std::to_string(li) + " (" + layer_str(li) + ")");
        }
        return softmax_channels(x);
    }

    // inference forward without graph bookkeeping
    Tensor<T> infer(const Tensor<T>& input) const {
        Tensor<T> x = input, y;
        for (size_t li = 0; li < layers.size(); ++li) {
            conv2d_forward(x, weights[li]->value, biases[li]->value, y);
            if (layers[li].relu_after) {
                for (auto& v : y.data) v = v > T(0) ? v : T(0);
            }
            if (!y.all_finite())
                throw std::runtime_error("forward: non-finite values after layer " +
                                         std::to_string(li) + " (" + layer_str(li) + ")");
            x = std::move(y);
        }
        Tensor<T> prob;
        softmax_channels_forward(x, prob);
        return prob;
    }

    std::string layer_str(size_t li) const {
        const auto& l = layers[li];
        std::ostringstream os;
        os << "conv" << l.kernel << "x" << l.kernel << " " << l.in_channels << "->"
           << l.out_channels << (l.relu_after ? " relu" : "");
        return os.str();
    }

    // FNV-1a over parameter bytes; detects any mutation of the weights
    uint64_t parameter_hash() const {
        uint64_t h = 0xcbf29ce484222325ull;
        auto eat = [&h](const Tensor<T>& t) {
            const auto* p = reinterpret_cast<const unsigned char*>(t.data.data());
            for (size_t i = 0; i < t.data.size() * sizeof(T); ++i) {
                h ^= p[i];
                h *= 0x100000001b3ull;
            }
        };
        for (size_t i = 0; i < weights.size(); ++i) {
            eat(weights[i]->value);
            eat(biases[i]->value);
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Checkpoints: a line-oriented text manifest followed by raw little-endian
// 32-bit float parameter blocks, in manifest order (weight, bias per layer).
// ---------------------------------------------------------------------------

struct Checkpoint {
    SegModel<float> model;
    int epoch = 0;
    std::string config_hash;
};

inline void save_checkpoint(const std::filesystem::path& path, const SegModel<float>& model,
                            int epoch, const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path.string());
    out << "shapepu-checkpoint v1\n";
    out << "epoch=" << epoch << "\n";
    out << "config_hash=" << config_hash << "\n";
    out << "num_classes=" << model.num_classes << "\n";
    out << "layers=" << model.layers.size() << "\n";
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& l = model.layers[i];
        out << "layer" << i << "=in:" << l.in_channels << " out:" << l.out_channels
            << " k:" << l.kernel << " relu:" << (l.relu_after ? 1 : 0) << "\n";
    }
    out << "end\n";
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& w = model.weights[i]->value.data;
        const auto& b = model.biases[i]->value.data;
        out.write(reinterpret_cast<const char*>(w.data()),
                  static_cast<std::streamsize>(w.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(b.data()),
                  static_cast<std::streamsize>(b.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "shapepu-checkpoint v1")
        throw std::runtime_error("checkpoint: bad magic in " + path.string());

    Checkpoint ck;
    int num_layers = -1;
    std::vector<ConvLayerSpec> layers;
    while (std::getline(in, line) && line != "end") {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("checkpoint: malformed manifest line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "epoch") {
            ck.epoch = std::stoi(val);
        } else if (key == "config_hash") {
            ck.config_hash = val;
        } else if (key == "num_classes") {
            ck.model.num_classes = std::stoi(val);
        } else if (key == "layers") {
            num_layers = std::stoi(val);
        } else if (key.rfind("layer", 0) == 0) {
            ConvLayerSpec l;
            int relu_flag = 0;
            if (std::sscanf(val.c_str(), "in:%d out:%d k:%d relu:%d", &l.in_channels,
                            &l.out_channels, &l.kernel, &relu_flag) != 4)
                throw std::runtime_error("checkpoint: malformed layer spec: " + val);
            l.relu_after = relu_flag != 0;
            layers.push_back(l);
        } else {
            throw std::runtime_error("checkpoint: unknown manifest key: " + key);
        }
    }
    if (num_layers < 0 || static_cast<int>(layers.size()) != num_layers)
        throw std::runtime_error("checkpoint: layer count mismatch in " + path.string());
    ck.model.layers = layers;
    for (const auto& l : layers) {
        Tensor<float> w(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel});
        Tensor<float> b(Shape{l.out_channels});
        in.read(reinterpret_cast<char*>(w.data.data()),
                static_cast<std::streamsize>(w.data.size() * sizeof(float)));
        in.read(reinterpret_cast<char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated parameter data: " + path.string());
        ck.model.weights.push_back(parameter(std::move(w)));
        ck.model.biases.push_back(parameter(std::move(b)));
    }
    return ck;
}

}  // namespace shapepu
