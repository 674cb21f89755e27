#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapepu {

// Shape of a dense tensor, rank 0..4. Rank-0 is a scalar with one element.
class Shape {
public:
    Shape() : rank_(0), d_{1, 1, 1, 1} {}

    Shape(std::initializer_list<int> dims) : rank_(static_cast<int>(dims.size())), d_{1, 1, 1, 1} {
        if (dims.size() > 4) throw std::invalid_argument("Shape: rank above 4 unsupported");
        int i = 0;
        for (int d : dims) {
            if (d < 0) throw std::invalid_argument("Shape: negative dimension");
            d_[i++] = d;
        }
    }

    int rank() const { return rank_; }
    int dim(int i) const { return d_[i]; }

    size_t numel() const {
        size_t n = 1;
        for (int i = 0; i < rank_; ++i) n *= static_cast<size_t>(d_[i]);
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (d_[i] != o.d_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << '(';
        for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << d_[i];
        os << ')';
        return os.str();
    }

private:
    int rank_;
    std::array<int, 4> d_;
};

// Dense row-major tensor. T is float in the training path; tests also
// instantiate double where finite-difference tolerances demand it.
template <typename T>
struct Tensor {
    static_assert(std::is_floating_point_v<T>);

    Shape shape;
    std::vector<T> data;

    Tensor() : shape({}), data(1, T(0)) {}
    explicit Tensor(const Shape& s, T fill = T(0)) : shape(s), data(s.numel(), fill) {}
    Tensor(const Shape& s, std::vector<T> d) : shape(s), data(std::move(d)) {
        if (data.size() != shape.numel())
            throw std::invalid_argument("Tensor: data length does not match shape " + shape.str());
    }

    static Tensor scalar(T v) {
        Tensor t;
        t.data[0] = v;
        return t;
    }

    size_t numel() const { return data.size(); }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    // rank-4 (n,c,h,w) accessors; lower-rank tensors use leading dims of 1
    size_t index4(int n, int c, int h, int w) const {
        return ((static_cast<size_t>(n) * shape.dim(1) + c) * shape.dim(2) + h) * shape.dim(3) + w;
    }
    T& at4(int n, int c, int h, int w) { return data[index4(n, c, h, w)]; }
    const T& at4(int n, int c, int h, int w) const { return data[index4(n, c, h, w)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape.str() + " vs " +
                                    b.shape.str());
}

}  // namespace shapepu
