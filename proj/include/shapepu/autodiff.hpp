#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace shapepu {

// ---------------------------------------------------------------------------
// Plain tensor kernels, shared by the graph ops and the inference-only path.
// Accumulation order is fixed, so results are bit-reproducible per build.
// ---------------------------------------------------------------------------

template <typename T>
void check_conv_shapes(const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (in.shape.rank() != 4 || kernel.shape.rank() != 4)
        throw std::invalid_argument("conv2d: input and kernel must be rank 4");
    if (in.shape.dim(1) != kernel.shape.dim(1))
        throw std::invalid_argument("conv2d: input channels " + std::to_string(in.shape.dim(1)) +
                                    " do not match kernel channels " +
                                    std::to_string(kernel.shape.dim(1)));
    if (kernel.shape.dim(2) % 2 == 0 || kernel.shape.dim(3) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel spatial size must be odd");
    if (bias.shape.rank() != 1 || bias.shape.dim(0) != kernel.shape.dim(0))
        throw std::invalid_argument("conv2d: bias length must equal output channels");
}

namespace conv_detail {

// Fused 3x3 correlation of one H*W plane added into out, zero padding.
// Nine multiply-adds per store; the interior-column loop vectorizes.
template <typename T>
void stencil3x3_add(const T* in, T* out, int H, int W, const T* k) {
    for (int oy = 0; oy < H; ++oy) {
        const T* r0 = oy > 0 ? in + static_cast<size_t>(oy - 1) * W : nullptr;
        const T* r1 = in + static_cast<size_t>(oy) * W;
        const T* r2 = oy < H - 1 ? in + static_cast<size_t>(oy + 1) * W : nullptr;
        T* orow = out + static_cast<size_t>(oy) * W;
        auto edge = [&](int x) {
            T acc = orow[x];
            const bool has_l = x > 0, has_r = x < W - 1;
            if (r0) {
                if (has_l) acc += k[0] * r0[x - 1];
                acc += k[1] * r0[x];
                if (has_r) acc += k[2] * r0[x + 1];
            }
            if (has_l) acc += k[3] * r1[x - 1];
            acc += k[4] * r1[x];
            if (has_r) acc += k[5] * r1[x + 1];
            if (r2) {
                if (has_l) acc += k[6] * r2[x - 1];
                acc += k[7] * r2[x];
                if (has_r) acc += k[8] * r2[x + 1];
            }
            orow[x] = acc;
        };
        edge(0);
        if (r0 && r2) {
            for (int x = 1; x < W - 1; ++x) {
                T acc = orow[x];
                acc += k[0] * r0[x - 1] + k[1] * r0[x] + k[2] * r0[x + 1];
                acc += k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1];
                acc += k[6] * r2[x - 1] + k[7] * r2[x] + k[8] * r2[x + 1];
                orow[x] = acc;
            }
        } else {
            const T* ra = r0 ? r0 : r2;
            const T* ka = r0 ? k : k + 6;
            for (int x = 1; x < W - 1; ++x) {
                T acc = orow[x];
                acc += ka[0] * ra[x - 1] + ka[1] * ra[x] + ka[2] * ra[x + 1];
                acc += k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1];
                orow[x] = acc;
            }
        }
        if (W > 1) edge(W - 1);
    }
}

// Lane-blocked dot product: fixed summation order (vectorizable without
// reassociation), bit-reproducible across runs.
template <typename T>
T laned_dot(const T* a, const T* b, int len) {
    T lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= len; i += 8)
        for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    T tail = 0;
    for (; i < len; ++i) tail += a[i] * b[i];
    return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
           ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

}  // namespace conv_detail

// stride 1, zero padding, output spatial size equals input
template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& bias,
                    Tensor<T>& out) {
    const int N = in.shape.dim(0), Ci = in.shape.dim(1), H = in.shape.dim(2), W = in.shape.dim(3);
    const int Co = kernel.shape.dim(0), KH = kernel.shape.dim(2), KW = kernel.shape.dim(3);
    const int ph = KH / 2, pw = KW / 2;
    out = Tensor<T>(Shape{N, Co, H, W});
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            T* outp = &out.at4(n, co, 0, 0);
            std::fill(outp, outp + static_cast<size_t>(H) * W, bias[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const T* inp = &in.at4(n, ci, 0, 0);
                if (KH == 3 && KW == 3) {
                    conv_detail::stencil3x3_add(inp, outp, H, W, &kernel.at4(co, ci, 0, 0));
                    continue;
                }
                for (int dy = 0; dy < KH; ++dy) {
                    const int oy0 = std::max(0, ph - dy), oy1 = std::min(H, H + ph - dy);
                    for (int dx = 0; dx < KW; ++dx) {
                        const T kv = kernel.at4(co, ci, dy, dx);
                        const int ox0 = std::max(0, pw - dx), ox1 = std::min(W, W + pw - dx);
                        for (int oy = oy0; oy < oy1; ++oy) {
                            const T* irow = inp + static_cast<size_t>(oy + dy - ph) * W + (ox0 + dx - pw);
                            T* orow = outp + static_cast<size_t>(oy) * W + ox0;
                            const int len = ox1 - ox0;
                            for (int i = 0; i < len; ++i) orow[i] += kv * irow[i];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& kernel, Tensor<T>& gin) {
    const int N = gout.shape.dim(0), Co = gout.shape.dim(1), H = gout.shape.dim(2),
              W = gout.shape.dim(3);
    const int Ci = kernel.shape.dim(1), KH = kernel.shape.dim(2), KW = kernel.shape.dim(3);
    const int ph = KH / 2, pw = KW / 2;
    for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Ci; ++ci) {
            T* ginp = &gin.at4(n, ci, 0, 0);
            for (int co = 0; co < Co; ++co) {
                const T* goutp = &gout.at4(n, co, 0, 0);
                if (KH == 3 && KW == 3) {
                    // correlation with the 180-degree-flipped kernel
                    const T* k = &kernel.at4(co, ci, 0, 0);
                    const T kf[9] = {k[8], k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]};
                    conv_detail::stencil3x3_add(goutp, ginp, H, W, kf);
                    continue;
                }
                for (int dy = 0; dy < KH; ++dy) {
                    const int oy0 = std::max(0, ph - dy), oy1 = std::min(H, H + ph - dy);
                    for (int dx = 0; dx < KW; ++dx) {
                        const T kv = kernel.at4(co, ci, dy, dx);
                        const int ox0 = std::max(0, pw - dx), ox1 = std::min(W, W + pw - dx);
                        for (int oy = oy0; oy < oy1; ++oy) {
                            T* grow = ginp + static_cast<size_t>(oy + dy - ph) * W + (ox0 + dx - pw);
                            const T* orow = goutp + static_cast<size_t>(oy) * W + ox0;
                            const int len = ox1 - ox0;
                            for (int i = 0; i < len; ++i) grow[i] += kv * orow[i];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_kernel(const Tensor<T>& gout, const Tensor<T>& in, Tensor<T>& gkernel) {
    const int N = in.shape.dim(0), Ci = in.shape.dim(1), H = in.shape.dim(2), W = in.shape.dim(3);
    const int Co = gkernel.shape.dim(0), KH = gkernel.shape.dim(2), KW = gkernel.shape.dim(3);
    const int ph = KH / 2, pw = KW / 2;
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            const T* goutp = &gout.at4(n, co, 0, 0);
            for (int ci = 0; ci < Ci; ++ci) {
                const T* inp = &in.at4(n, ci, 0, 0);
                for (int dy = 0; dy < KH; ++dy) {
                    const int oy0 = std::max(0, ph - dy), oy1 = std::min(H, H + ph - dy);
                    for (int dx = 0; dx < KW; ++dx) {
                        const int ox0 = std::max(0, pw - dx), ox1 = std::min(W, W + pw - dx);
                        T acc = 0;
                        for (int oy = oy0; oy < oy1; ++oy) {
                            const T* irow = inp + static_cast<size_t>(oy + dy - ph) * W + (ox0 + dx - pw);
                            const T* orow = goutp + static_cast<size_t>(oy) * W + ox0;
                            acc += conv_detail::laned_dot(orow, irow, ox1 - ox0);
                        }
                        gkernel.at4(co, ci, dy, dx) += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_bias(const Tensor<T>& gout, Tensor<T>& gbias) {
    const int N = gout.shape.dim(0), Co = gout.shape.dim(1);
    const size_t plane = static_cast<size_t>(gout.shape.dim(2)) * gout.shape.dim(3);
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            const T* p = &gout.at4(n, co, 0, 0);
            double acc = 0;
            for (size_t i = 0; i < plane; ++i) acc += p[i];
            gbias[co] += static_cast<T>(acc);
        }
    }
}

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out) {
    out = Tensor<T>(in.shape);
    for (size_t i = 0; i < in.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// per-pixel softmax over the channel dimension, stabilized by max subtraction
template <typename T>
void softmax_channels_forward(const Tensor<T>& logits, Tensor<T>& out) {
    if (logits.shape.rank() != 4)
        throw std::invalid_argument("softmax_channels: expected rank-4 (n,c,h,w) input");
    const int N = logits.shape.dim(0), C = logits.shape.dim(1);
    const size_t plane = static_cast<size_t>(logits.shape.dim(2)) * logits.shape.dim(3);
    out = Tensor<T>(logits.shape);
    for (int n = 0; n < N; ++n) {
        const T* lp = &logits.at4(n, 0, 0, 0);
        T* op = &out.at4(n, 0, 0, 0);
        for (size_t px = 0; px < plane; ++px) {
            T mx = lp[px];
            for (int c = 1; c < C; ++c) mx = std::max(mx, lp[px + c * plane]);
            double denom = 0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(static_cast<double>(lp[px + c * plane] - mx));
                op[px + c * plane] = static_cast<T>(e);
                denom += e;
            }
            for (int c = 0; c < C; ++c)
                op[px + c * plane] = static_cast<T>(op[px + c * plane] / denom);
        }
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode graph
// ---------------------------------------------------------------------------

template <typename T>
class Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
class Node {
public:
    Tensor<T> value;
    Tensor<T> grad;  // same shape as value, zero-initialized; empty for constants
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<NodePtr<T>> parents;
    std::function<void(Node<T>&)> backward_op;

    Node(Tensor<T> v, bool req) : value(std::move(v)), requires_grad(req) {
        if (requires_grad) grad = Tensor<T>(value.shape);
    }

    void zero_grad() {
        if (requires_grad) grad.fill(T(0));
    }

    // adds g into the gradient slot
    void accumulate(const Tensor<T>& g) {
        for (size_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
    }
};

template <typename T>
NodePtr<T> parameter(Tensor<T> v) {
    return std::make_shared<Node<T>>(std::move(v), true);
}

template <typename T>
NodePtr<T> constant(Tensor<T> v) {
    return std::make_shared<Node<T>>(std::move(v), false);
}

template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backward_op) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto n = std::make_shared<Node<T>>(std::move(value), req);
    n->is_leaf = false;
    if (req) {
        n->parents = std::move(parents);
        n->backward_op = std::move(backward_op);
    }
    return n;
}

// ---- elementwise ----

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor<T> v(a->value.shape);
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] + b->value[i];
    return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad);
    });
}

template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor<T> v(a->value.shape);
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] * b->value[i];
    return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    });
}

template <typename T>
NodePtr<T> div(const NodePtr<T>& a, const NodePtr<T>& b) {
    require_same_shape(a->value, b->value, "div");
    Tensor<T> v(a->value.shape);
    for (size_t i = 0; i < v.numel(); ++i) v[i] = a->value[i] / b->value[i];
    return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] / b->value[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.numel(); ++i)
                b->grad[i] -= n.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
    });
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& a, double c) {
    Tensor<T> v(a->value.shape);
    for (size_t i = 0; i < v.numel(); ++i) v[i] = static_cast<T>(a->value[i] * c);
    return make_op<T>(std::move(v), {a}, [a, c](Node<T>& n) {
        for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += static_cast<T>(n.grad[i] * c);
    });
}

template <typename T>
NodePtr<T> neg(const NodePtr<T>& a) {
    return scale(a, -1.0);
}

inline constexpr double kLogClampEps = 1e-12;

// ln(max(x, eps)); the clamp freezes the gradient on saturated entries
template <typename T>
NodePtr<T> log_clamped(const NodePtr<T>& a, double eps = kLogClampEps) {
    Tensor<T> v(a->value.shape);
    for (size_t i = 0; i < v.numel(); ++i)
        v[i] = static_cast<T>(std::log(std::max(static_cast<double>(a->value[i]), eps)));
    return make_op<T>(std::move(v), {a}, [a, eps](Node<T>& n) {
        for (size_t i = 0; i < n.grad.numel(); ++i)
            if (static_cast<double>(a->value[i]) > eps) a->grad[i] += n.grad[i] / a->value[i];
    });
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& a) {
    Tensor<T> v;
    relu_forward(a->value, v);
    return make_op<T>(std::move(v), {a}, [a](Node<T>& n) {
        for (size_t i = 0; i < n.grad.numel(); ++i)
            if (a->value[i] > T(0)) a->grad[i] += n.grad[i];
    });
}

// multiply every channel plane by a (H,W) mask that carries no gradient
template <typename T>
NodePtr<T> mask_hw(const NodePtr<T>& a, const Tensor<T>& mask) {
    if (a->value.shape.rank() != 4 || mask.shape.rank() != 2 ||
        a->value.shape.dim(2) != mask.shape.dim(0) || a->value.shape.dim(3) != mask.shape.dim(1))
        throw std::invalid_argument("mask_hw: mask shape " + mask.shape.str() +
                                    " does not match input " + a->value.shape.str());
    const size_t plane = mask.numel();
    const size_t planes = a->value.numel() / plane;
    Tensor<T> v(a->value.shape);
    for (size_t p = 0; p < planes; ++p)
        for (size_t i = 0; i < plane; ++i) v[p * plane + i] = a->value[p * plane + i] * mask[i];
    return make_op<T>(std::move(v), {a}, [a, mask, plane, planes](Node<T>& n) {
        for (size_t p = 0; p < planes; ++p)
            for (size_t i = 0; i < plane; ++i) a->grad[p * plane + i] += n.grad[p * plane + i] * mask[i];
    });
}

// ---- reductions (64-bit accumulation) ----

template <typename T>
NodePtr<T> sum(const NodePtr<T>& a) {
    double acc = 0;
    for (size_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {a}, [a](Node<T>& n) {
        const T g = n.grad[0];
        for (size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

template <typename T>
NodePtr<T> mean(const NodePtr<T>& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double acc = 0;
    for (size_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc * inv)), {a}, [a, inv](Node<T>& n) {
        const T g = static_cast<T>(n.grad[0] * inv);
        for (size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

template <typename T>
NodePtr<T> flatten(const NodePtr<T>& a) {
    Tensor<T> v(Shape{static_cast<int>(a->value.numel())}, a->value.data);
    return make_op<T>(std::move(v), {a}, [a](Node<T>& n) {
        for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
    });
}

template <typename T>
NodePtr<T> dot(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->value.numel() != b->value.numel())
        throw std::invalid_argument("dot: operand lengths differ");
    double acc = 0;
    for (size_t i = 0; i < a->value.numel(); ++i)
        acc += static_cast<double>(a->value[i]) * static_cast<double>(b->value[i]);
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {a, b}, [a, b](Node<T>& n) {
        const T g = n.grad[0];
        if (a->requires_grad)
            for (size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g * b->value[i];
        if (b->requires_grad)
            for (size_t i = 0; i < b->grad.numel(); ++i) b->grad[i] += g * a->value[i];
    });
}

template <typename T>
NodePtr<T> l2_norm(const NodePtr<T>& a) {
    double acc = 0;
    for (size_t i = 0; i < a->value.numel(); ++i)
        acc += static_cast<double>(a->value[i]) * static_cast<double>(a->value[i]);
    const double norm = std::sqrt(acc);
    return make_op<T>(Tensor<T>::scalar(static_cast<T>(norm)), {a}, [a, norm](Node<T>& n) {
        if (norm == 0.0) return;  // subgradient 0 at the origin
        const double g = static_cast<double>(n.grad[0]) / norm;
        for (size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += static_cast<T>(g * a->value[i]);
    });
}

// ---- network ops ----

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& input, const NodePtr<T>& kernel, const NodePtr<T>& bias) {
    check_conv_shapes(input->value, kernel->value, bias->value);
    Tensor<T> v;
    conv2d_forward(input->value, kernel->value, bias->value, v);
    return make_op<T>(std::move(v), {input, kernel, bias}, [input, kernel, bias](Node<T>& n) {
        if (input->requires_grad) conv2d_backward_input(n.grad, kernel->value, input->grad);
        if (kernel->requires_grad) conv2d_backward_kernel(n.grad, input->value, kernel->grad);
        if (bias->requires_grad) conv2d_backward_bias(n.grad, bias->grad);
    });
}

template <typename T>
NodePtr<T> softmax_channels(const NodePtr<T>& logits) {
    Tensor<T> v;
    softmax_channels_forward(logits->value, v);
    const int C = logits->value.shape.dim(1);
    const int N = logits->value.shape.dim(0);
    const size_t plane =
        static_cast<size_t>(logits->value.shape.dim(2)) * logits->value.shape.dim(3);
    auto out = make_op<T>(std::move(v), {logits}, [logits, N, C, plane](Node<T>& n) {
        for (int b = 0; b < N; ++b) {
            const size_t base = static_cast<size_t>(b) * C * plane;
            for (size_t px = 0; px < plane; ++px) {
                double s = 0;
                for (int c = 0; c < C; ++c) {
                    const size_t idx = base + c * plane + px;
                    s += static_cast<double>(n.grad[idx]) * static_cast<double>(n.value[idx]);
                }
                for (int c = 0; c < C; ++c) {
                    const size_t idx = base + c * plane + px;
                    logits->grad[idx] +=
                        static_cast<T>(n.value[idx] * (static_cast<double>(n.grad[idx]) - s));
                }
            }
        }
    });
    return out;
}

// ---- backward pass ----

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

// Propagates dLoss into every reachable parameter's gradient slot. Interior
// gradients are recomputed from scratch; leaf (parameter) slots accumulate, so
// calling backward twice doubles the parameter gradients.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss->value.shape.str());
    if (!loss->requires_grad) return;
    auto order = topo_order(loss.get());
    for (Node<T>* n : order)
        if (!n->is_leaf) n->zero_grad();
    loss->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_op) (*it)->backward_op(**it);
}

}  // namespace shapepu
