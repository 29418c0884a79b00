#pragma once

// Shared helpers for the test suites.

#include <cmath>
#include <vector>

#include "s2c/autodiff.hpp"
#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"

namespace testutil {

inline s2c::TensorT<double> random_tensor(s2c::Shape shape, s2c::RngStream& rng, double lo = -1.0,
                                          double hi = 1.0) {
    s2c::TensorT<double> t(std::move(shape));
    rng.fill_uniform(t, lo, hi);
    return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

template <class T>
double max_abs_diff_t(const s2c::TensorT<T>& a, const s2c::TensorT<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    }
    return m;
}

// FD check of a single op: loss = sum(op(params...) * fixed_weights)
inline double op_grad_check(const std::vector<s2c::ParamPtr<double>>& params,
                            const std::function<s2c::VarT<double>(s2c::GraphT<double>&)>& op_builder,
                            s2c::RngStream rng, int coords = 24, double h = 1e-5) {
    return s2c::grad_check(params, op_builder, h, coords, rng);
}

}  // namespace testutil
