#pragma once

// Trainable layer building blocks on top of the autodiff graph: linear,
// 1-D convolution, layer norm, multi-head self-attention and the sinusoidal
// timestep embedding. A ParamStore owns every parameter of a model and is
// the single source of checkpoint names.

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "s2c/autodiff.hpp"
#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"

namespace s2c {

template <class T>
struct ParamStoreT {
    std::vector<ParamPtr<T>> items;

    ParamPtr<T> add(const std::string& name, TensorT<T> value) {
        for (const auto& p : items) {
            if (p->name == name) {
                throw std::invalid_argument("duplicate parameter name: " + name);
            }
        }
        auto p = std::make_shared<ParamT<T>>(name, std::move(value));
        items.push_back(p);
        return p;
    }

    ParamPtr<T> find(const std::string& name) const {
        for (const auto& p : items) {
            if (p->name == name) {
                return p;
            }
        }
        return nullptr;
    }

    void zero_grads() {
        for (auto& p : items) {
            p->zero_grad();
        }
    }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& p : items) {
            n += p->value.numel();
        }
        return n;
    }
};

// Kaiming-style uniform fan-in init: U(-sqrt(6/fan_in), +sqrt(6/fan_in))
template <class T>
TensorT<T> kaiming_uniform(Shape shape, int fan_in, RngStream& rng) {
    TensorT<T> t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    rng.fill_uniform(t, -limit, limit);
    return t;
}

template <class T>
struct LinearT {
    ParamPtr<T> w;  // in x out
    ParamPtr<T> b;  // out

    static LinearT make(ParamStoreT<T>& store, const std::string& name, int in, int out, RngStream& rng,
                        bool zero_init = false) {
        LinearT l;
        l.w = store.add(name + ".w", zero_init ? TensorT<T>(Shape{in, out}, T(0))
                                               : kaiming_uniform<T>(Shape{in, out}, in, rng));
        l.b = store.add(name + ".b", TensorT<T>(Shape{out}, T(0)));
        return l;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return add_rowvec(matmul(x, g.param(w)), g.param(b));
    }

    int in_dim() const { return w->value.shape[0]; }
    int out_dim() const { return w->value.shape[1]; }
};

template <class T>
struct Conv1dT {
    ParamPtr<T> w;  // K x in x out
    ParamPtr<T> b;  // out
    int stride = 1;

    static Conv1dT make(ParamStoreT<T>& store, const std::string& name, int kernel, int in, int out,
                        RngStream& rng, int stride = 1, bool zero_init = false) {
        Conv1dT c;
        c.w = store.add(name + ".w", zero_init ? TensorT<T>(Shape{kernel, in, out}, T(0))
                                               : kaiming_uniform<T>(Shape{kernel, in, out}, kernel * in, rng));
        c.b = store.add(name + ".b", TensorT<T>(Shape{out}, T(0)));
        c.stride = stride;
        return c;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return conv1d(x, g.param(w), g.param(b), stride);
    }
};

template <class T>
struct LayerNormT {
    ParamPtr<T> gain;
    ParamPtr<T> bias;

    static LayerNormT make(ParamStoreT<T>& store, const std::string& name, int dim) {
        LayerNormT n;
        n.gain = store.add(name + ".g", TensorT<T>(Shape{dim}, T(1)));
        n.bias = store.add(name + ".b", TensorT<T>(Shape{dim}, T(0)));
        return n;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return layer_norm(x, g.param(gain), g.param(bias));
    }
};

// Per-head scaled dot-product attention contexts. Q, K, V are full-width
// N x d projections; each head works on its own column slice.
template <class T>
std::vector<VarT<T>> per_head_contexts(GraphT<T>&, VarT<T> q, VarT<T> k, VarT<T> v, int heads) {
    const int d = q.val().cols();
    if (d % heads != 0) {
        throw std::invalid_argument("attention width must be divisible by head count");
    }
    const int dk = d / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<VarT<T>> ctx;
    ctx.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        VarT<T> qh = slice_cols(q, h * dk, dk);
        VarT<T> kh = slice_cols(k, h * dk, dk);
        VarT<T> vh = slice_cols(v, h * dk, dk);
        VarT<T> att = softmax_lastdim(scale(matmul_nt(qh, kh), scl));
        ctx.push_back(matmul(att, vh));
    }
    return ctx;
}

template <class T>
VarT<T> concat_heads(GraphT<T>&, const std::vector<VarT<T>>& ctx) {
    VarT<T> out = ctx[0];
    for (std::size_t h = 1; h < ctx.size(); ++h) {
        out = concat_cols(out, ctx[h]);
    }
    return out;
}

// Multi-head self-attention block. The output projection is zero-initialized
// so a residual caller starts as the identity.
template <class T>
struct MhsaT {
    LinearT<T> wq, wk, wv, wo;
    int heads = 1;

    static MhsaT make(ParamStoreT<T>& store, const std::string& name, int dim, int heads, RngStream& rng) {
        MhsaT m;
        m.wq = LinearT<T>::make(store, name + ".wq", dim, dim, rng);
        m.wk = LinearT<T>::make(store, name + ".wk", dim, dim, rng);
        m.wv = LinearT<T>::make(store, name + ".wv", dim, dim, rng);
        m.wo = LinearT<T>::make(store, name + ".wo", dim, dim, rng, /*zero_init=*/true);
        m.heads = heads;
        return m;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        auto ctx = per_head_contexts(g, wq(g, x), wk(g, x), wv(g, x), heads);
        return wo(g, concat_heads(g, ctx));
    }
};

template <class T>
struct FfnT {
    LinearT<T> lin1, lin2;

    static FfnT make(ParamStoreT<T>& store, const std::string& name, int dim, int hidden, RngStream& rng) {
        FfnT f;
        f.lin1 = LinearT<T>::make(store, name + ".lin1", dim, hidden, rng);
        f.lin2 = LinearT<T>::make(store, name + ".lin2", hidden, dim, rng, /*zero_init=*/true);
        return f;
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const { return lin2(g, gelu(lin1(g, x))); }
};

// Sinusoidal embedding of a discrete timestep: [sin(t w_i), cos(t w_i)] with
// geometrically spaced frequencies. t = 0 maps to all-zero sines and all-one
// cosines; values are bounded by 1.
template <class T>
TensorT<T> sinusoidal_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("sinusoidal_embedding: dim must be even and >= 2");
    }
    const int half = dim / 2;
    TensorT<T> out(Shape{dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out.data[static_cast<std::size_t>(i)] = static_cast<T>(std::sin(t * freq));
        out.data[static_cast<std::size_t>(half + i)] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

}  // namespace s2c
