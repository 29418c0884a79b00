#pragma once

// Dense row-major tensor value type shared by the autodiff graph, the
// diffusion math and the metric suite. Training code instantiates with
// float, verification code with double.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace s2c {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e <= 0) {
            throw std::invalid_argument("tensor extent must be positive");
        }
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << s[i] << (i + 1 < s.size() ? "x" : "");
    }
    os << ")";
    return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) {
    return a == b;
}

template <class T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(Shape s, T fill = T(0))
        : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

    TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
            throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
        }
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    // rank-2 helpers; most network code works on frames x channels matrices
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.empty() ? 1 : shape.back(); }

    T& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const T& operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    T& at(std::size_t i) { return data[i]; }
    const T& at(std::size_t i) const { return data[i]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) {
                return false;
            }
        }
        return true;
    }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class T>
void ensure_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (!same_shape(a.shape, b.shape)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    }
}

// NaN/Inf anywhere is a hard error; every op output goes through this.
template <class T>
void ensure_finite(const TensorT<T>& t, const char* op) {
    if (!t.all_finite()) {
        throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
}

template <class To, class From>
TensorT<To> tensor_cast(const TensorT<From>& t) {
    TensorT<To> out(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        out.data[i] = static_cast<To>(t.data[i]);
    }
    return out;
}

}  // namespace s2c
