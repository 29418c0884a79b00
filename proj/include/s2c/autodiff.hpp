#pragma once

// Reverse-mode tape over TensorT values. Nodes are appended in evaluation
// order, which is a valid topological order for the backward sweep, so the
// gradient of a fixed graph is bitwise reproducible. Callers that
// parallelize across batch items give each item its own graph and merge
// parameter gradients in item order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "s2c/rng.hpp"
#include "s2c/tensor.hpp"

namespace s2c {

template <class T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;

    ParamT(std::string n, TensorT<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape, T(0)) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <class T>
using ParamPtr = std::shared_ptr<ParamT<T>>;

template <class T>
class GraphT;

template <class T>
struct VarT {
    GraphT<T>* g = nullptr;
    int idx = -1;

    bool valid() const { return g != nullptr && idx >= 0; }
    const TensorT<T>& val() const;
    const Shape& shape() const { return val().shape; }
};

template <class T>
class GraphT {
public:
    using BackFn = std::function<void(GraphT&, int self)>;

    explicit GraphT(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

    bool grad_enabled() const { return grad_enabled_; }

    VarT<T> input(TensorT<T> v) {
        ensure_finite(v, "graph input");
        return push(std::move(v), nullptr, false);
    }

    VarT<T> param(const ParamPtr<T>& p) {
        VarT<T> v = push(p->value, p.get(), grad_enabled_);
        return v;
    }

    VarT<T> make(TensorT<T> value, const char* op, std::initializer_list<VarT<T>> parents, BackFn back) {
        ensure_finite(value, op);
        bool needs = grad_enabled_;
        if (needs) {
            bool any = false;
            for (const auto& p : parents) {
                any = any || nodes_[p.idx].needs_grad;
            }
            needs = any;
        }
        VarT<T> v = push(std::move(value), nullptr, needs);
        if (needs) {
            nodes_[v.idx].back = std::move(back);
        }
        return v;
    }

    const TensorT<T>& value(VarT<T> v) const { return nodes_[v.idx].value; }
    const TensorT<T>& value_at(int idx) const { return nodes_[idx].value; }
    const TensorT<T>& grad(VarT<T> v) const { return nodes_[v.idx].grad; }
    const TensorT<T>& grad_at(int idx) const { return nodes_[idx].grad; }
    bool needs_grad(int idx) const { return nodes_[idx].needs_grad; }

    // accumulate `d` into node idx's gradient, skipping constant nodes
    void add_grad(int idx, const TensorT<T>& d) {
        if (!nodes_[idx].needs_grad) {
            return;
        }
        auto& g = nodes_[idx].grad.data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += d.data[i];
        }
    }

    TensorT<T>* grad_buf(int idx) { return nodes_[idx].needs_grad ? &nodes_[idx].grad : nullptr; }

    // seed_scale lets batched callers seed d(loss)/d(loss) = 1/batch so that
    // per-item graphs sum to the mean-loss gradient
    void backward(VarT<T> loss, T seed_scale = T(1)) {
        if (!grad_enabled_) {
            throw std::logic_error("backward on a grad-disabled graph");
        }
        if (nodes_[loss.idx].value.numel() != 1) {
            throw std::invalid_argument("backward: loss must be scalar");
        }
        for (auto& n : nodes_) {
            if (n.needs_grad && n.grad.data.empty()) {
                n.grad = TensorT<T>(n.value.shape, T(0));
            }
        }
        if (!nodes_[loss.idx].needs_grad) {
            return;  // nothing trainable contributed
        }
        nodes_[loss.idx].grad.data[0] = seed_scale;
        for (int i = loss.idx; i >= 0; --i) {
            if (nodes_[i].back && nodes_[i].needs_grad) {
                nodes_[i].back(*this, i);
            }
        }
    }

    // Adds node gradients into their ParamT::grad buffers, in node order.
    void accumulate_param_grads() {
        for (auto& n : nodes_) {
            if (n.param != nullptr && !n.grad.data.empty()) {
                auto& g = n.param->grad.data;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += n.grad.data[i];
                }
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        BackFn back;
        ParamT<T>* param = nullptr;
        bool needs_grad = false;
    };

    VarT<T> push(TensorT<T> value, ParamT<T>* param, bool needs_grad) {
        Node n;
        n.value = std::move(value);
        n.param = param;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return VarT<T>{this, static_cast<int>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

template <class T>
const TensorT<T>& VarT<T>::val() const {
    return g->value(*this);
}

// --- raw matmul kernels ------------------------------------------------------

namespace kernel {

// c[m x n] += a[m x k] * b[k x n]
template <class T>
void matmul_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

// c[m x n] += a[k x m]^T * b[k x n]
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<std::size_t>(p) * m;
        const T* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace kernel

// --- elementwise ops ---------------------------------------------------------

template <class T>
VarT<T> add(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    ensure_same_shape(a.val(), b.val(), "add");
    TensorT<T> out = a.val();
    const auto& bd = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += bd[i];
    }
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "add", {a, b}, [ai, bi](GraphT<T>& gr, int self) {
        gr.add_grad(ai, gr.grad_at(self));
        gr.add_grad(bi, gr.grad_at(self));
    });
}

template <class T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    ensure_same_shape(a.val(), b.val(), "sub");
    TensorT<T> out = a.val();
    const auto& bd = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] -= bd[i];
    }
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "sub", {a, b}, [ai, bi](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        gr.add_grad(ai, d);
        if (TensorT<T>* gb = gr.grad_buf(bi)) {
            for (std::size_t i = 0; i < gb->data.size(); ++i) {
                gb->data[i] -= d.data[i];
            }
        }
    });
}

template <class T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    ensure_same_shape(a.val(), b.val(), "mul");
    TensorT<T> out = a.val();
    const auto& bd = b.val().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= bd[i];
    }
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "mul", {a, b}, [ai, bi](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& av = gr.value_at(ai);
        const auto& bv = gr.value_at(bi);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            for (std::size_t i = 0; i < ga->data.size(); ++i) {
                ga->data[i] += d.data[i] * bv.data[i];
            }
        }
        if (TensorT<T>* gb = gr.grad_buf(bi)) {
            for (std::size_t i = 0; i < gb->data.size(); ++i) {
                gb->data[i] += d.data[i] * av.data[i];
            }
        }
    });
}

template <class T>
VarT<T> scale(VarT<T> a, double c) {
    GraphT<T>& g = *a.g;
    TensorT<T> out = a.val();
    const T cc = static_cast<T>(c);
    for (auto& v : out.data) {
        v *= cc;
    }
    const int ai = a.idx;
    return g.make(std::move(out), "scale", {a}, [ai, cc](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            for (std::size_t i = 0; i < ga->data.size(); ++i) {
                ga->data[i] += d.data[i] * cc;
            }
        }
    });
}

template <class T>
VarT<T> add_scalar(VarT<T> a, double c) {
    GraphT<T>& g = *a.g;
    TensorT<T> out = a.val();
    for (auto& v : out.data) {
        v += static_cast<T>(c);
    }
    const int ai = a.idx;
    return g.make(std::move(out), "add_scalar", {a}, [ai](GraphT<T>& gr, int self) {
        gr.add_grad(ai, gr.grad_at(self));
    });
}

// y = x * s where s is a 1-element variable (lambda scaling in HCAA)
template <class T>
VarT<T> mul_scalar_var(VarT<T> x, VarT<T> s) {
    GraphT<T>& g = *x.g;
    if (s.val().numel() != 1) {
        throw std::invalid_argument("mul_scalar_var: scalar operand must have one element");
    }
    const T sv = s.val().data[0];
    TensorT<T> out = x.val();
    for (auto& v : out.data) {
        v *= sv;
    }
    const int xi = x.idx, si = s.idx;
    return g.make(std::move(out), "mul_scalar_var", {x, s}, [xi, si, sv](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& xv = gr.value_at(xi);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (std::size_t i = 0; i < gx->data.size(); ++i) {
                gx->data[i] += d.data[i] * sv;
            }
        }
        if (TensorT<T>* gs = gr.grad_buf(si)) {
            T acc = T(0);
            for (std::size_t i = 0; i < d.data.size(); ++i) {
                acc += d.data[i] * xv.data[i];
            }
            gs->data[0] += acc;
        }
    });
}

template <class T>
VarT<T> exp_of(VarT<T> a) {
    GraphT<T>& g = *a.g;
    TensorT<T> out = a.val();
    for (auto& v : out.data) {
        v = std::exp(v);
    }
    const int ai = a.idx;
    return g.make(std::move(out), "exp", {a}, [ai](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& y = gr.value_at(self);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            for (std::size_t i = 0; i < ga->data.size(); ++i) {
                ga->data[i] += d.data[i] * y.data[i];
            }
        }
    });
}

// gradient passes through strictly inside (lo, hi), zero outside
template <class T>
VarT<T> clamp_of(VarT<T> a, double lo, double hi) {
    GraphT<T>& g = *a.g;
    TensorT<T> out = a.val();
    for (auto& v : out.data) {
        v = std::min(static_cast<T>(hi), std::max(static_cast<T>(lo), v));
    }
    const int ai = a.idx;
    const T tlo = static_cast<T>(lo), thi = static_cast<T>(hi);
    return g.make(std::move(out), "clamp", {a}, [ai, tlo, thi](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& x = gr.value_at(ai);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            for (std::size_t i = 0; i < ga->data.size(); ++i) {
                if (x.data[i] > tlo && x.data[i] < thi) {
                    ga->data[i] += d.data[i];
                }
            }
        }
    });
}

template <class T>
VarT<T> gelu(VarT<T> a) {
    GraphT<T>& g = *a.g;
    TensorT<T> out = a.val();
    for (auto& v : out.data) {
        const double x = static_cast<double>(v);
        v = static_cast<T>(0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)));
    }
    const int ai = a.idx;
    return g.make(std::move(out), "gelu", {a}, [ai](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& xv = gr.value_at(ai);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            for (std::size_t i = 0; i < ga->data.size(); ++i) {
                const double x = static_cast<double>(xv.data[i]);
                const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
                const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
                ga->data[i] += d.data[i] * static_cast<T>(cdf + x * pdf);
            }
        }
    });
}

// --- matrix ops ---------------------------------------------------------------

template <class T>
VarT<T> matmul(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape) + " x " +
                                    shape_str(bv.shape));
    }
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    TensorT<T> out(Shape{m, n}, T(0));
    kernel::matmul_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "matmul", {a, b}, [ai, bi, m, k, n](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& av2 = gr.value_at(ai);
        const auto& bv2 = gr.value_at(bi);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            kernel::matmul_nt_acc(d.data.data(), bv2.data.data(), ga->data.data(), m, n, k);
        }
        if (TensorT<T>* gb = gr.grad_buf(bi)) {
            kernel::matmul_tn_acc(av2.data.data(), d.data.data(), gb->data.data(), k, m, n);
        }
    });
}

// c = a * b^T with a: m x k, b: n x k (attention scores)
template <class T>
VarT<T> matmul_nt(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[1]) {
        throw std::invalid_argument("matmul_nt: incompatible shapes " + shape_str(av.shape) + " x " +
                                    shape_str(bv.shape));
    }
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[0];
    TensorT<T> out(Shape{m, n}, T(0));
    kernel::matmul_nt_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "matmul_nt", {a, b}, [ai, bi, m, k, n](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& av2 = gr.value_at(ai);
        const auto& bv2 = gr.value_at(bi);
        if (TensorT<T>* ga = gr.grad_buf(ai)) {
            // dA[m x k] += d[m x n] * B[n x k]
            kernel::matmul_acc(d.data.data(), bv2.data.data(), ga->data.data(), m, n, k);
        }
        if (TensorT<T>* gb = gr.grad_buf(bi)) {
            // dB[n x k] += d^T[n x m] * A[m x k]
            kernel::matmul_tn_acc(d.data.data(), av2.data.data(), gb->data.data(), n, m, k);
        }
    });
}

// --- frame-axis ops -------------------------------------------------------------

// 1-D convolution along the frame axis with replicate padding.
// x: N x Cin, w: K x Cin x Cout, b: Cout. stride 1 keeps N, stride 2 halves it.
template <class T>
VarT<T> conv1d(VarT<T> x, VarT<T> w, VarT<T> b, int stride = 1) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    const auto& wv = w.val();
    const auto& bv = b.val();
    if (xv.rank() != 2 || wv.rank() != 3 || bv.rank() != 1) {
        throw std::invalid_argument("conv1d: expected x(N x Cin), w(K x Cin x Cout), b(Cout)");
    }
    const int n = xv.shape[0], cin = xv.shape[1];
    const int kk = wv.shape[0], cout = wv.shape[2];
    if (wv.shape[1] != cin || bv.shape[0] != cout) {
        throw std::invalid_argument("conv1d: channel mismatch");
    }
    if (stride != 1 && stride != 2) {
        throw std::invalid_argument("conv1d: stride must be 1 or 2");
    }
    if (n % stride != 0) {
        throw std::invalid_argument("conv1d: frame count must be divisible by stride");
    }
    const int no = n / stride;
    const int half = kk / 2;
    TensorT<T> out(Shape{no, cout});
    for (int o = 0; o < no; ++o) {
        T* yrow = out.data.data() + static_cast<std::size_t>(o) * cout;
        for (int c = 0; c < cout; ++c) {
            yrow[c] = bv.data[c];
        }
        for (int k = 0; k < kk; ++k) {
            int src = o * stride + k - half;
            src = std::min(n - 1, std::max(0, src));
            const T* xrow = xv.data.data() + static_cast<std::size_t>(src) * cin;
            const T* wk = wv.data.data() + static_cast<std::size_t>(k) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const T xvv = xrow[ci];
                const T* wrow = wk + static_cast<std::size_t>(ci) * cout;
                for (int c = 0; c < cout; ++c) {
                    yrow[c] += xvv * wrow[c];
                }
            }
        }
    }
    const int xi = x.idx, wi = w.idx, bi = b.idx;
    return g.make(std::move(out), "conv1d", {x, w, b},
                  [xi, wi, bi, n, cin, kk, cout, stride, half, no](GraphT<T>& gr, int self) {
                      const auto& d = gr.grad_at(self);
                      const auto& xv2 = gr.value_at(xi);
                      const auto& wv2 = gr.value_at(wi);
                      TensorT<T>* gx = gr.grad_buf(xi);
                      TensorT<T>* gw = gr.grad_buf(wi);
                      TensorT<T>* gb = gr.grad_buf(bi);
                      if (gb != nullptr) {
                          for (int o = 0; o < no; ++o) {
                              const T* drow = d.data.data() + static_cast<std::size_t>(o) * cout;
                              for (int c = 0; c < cout; ++c) {
                                  gb->data[c] += drow[c];
                              }
                          }
                      }
                      for (int o = 0; o < no; ++o) {
                          const T* drow = d.data.data() + static_cast<std::size_t>(o) * cout;
                          for (int k = 0; k < kk; ++k) {
                              int src = o * stride + k - half;
                              src = std::min(n - 1, std::max(0, src));
                              const T* xrow = xv2.data.data() + static_cast<std::size_t>(src) * cin;
                              const T* wk = wv2.data.data() + static_cast<std::size_t>(k) * cin * cout;
                              for (int ci = 0; ci < cin; ++ci) {
                                  const T* wrow = wk + static_cast<std::size_t>(ci) * cout;
                                  T acc = T(0);
                                  for (int c = 0; c < cout; ++c) {
                                      acc += drow[c] * wrow[c];
                                  }
                                  if (gx != nullptr) {
                                      gx->data[static_cast<std::size_t>(src) * cin + ci] += acc;
                                  }
                                  if (gw != nullptr) {
                                      const T xvv = xrow[ci];
                                      T* gwrow = gw->data.data() +
                                                 (static_cast<std::size_t>(k) * cin + ci) * cout;
                                      for (int c = 0; c < cout; ++c) {
                                          gwrow[c] += xvv * drow[c];
                                      }
                                  }
                              }
                          }
                      }
                  });
}

template <class T>
VarT<T> avgpool2_rows(VarT<T> x) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    if (xv.rank() != 2 || xv.shape[0] % 2 != 0) {
        throw std::invalid_argument("avgpool2_rows: need rank-2 input with even frame count");
    }
    const int n = xv.shape[0], c = xv.shape[1];
    TensorT<T> out(Shape{n / 2, c});
    for (int o = 0; o < n / 2; ++o) {
        for (int j = 0; j < c; ++j) {
            out(o, j) = static_cast<T>(0.5) * (xv(2 * o, j) + xv(2 * o + 1, j));
        }
    }
    const int xi = x.idx;
    return g.make(std::move(out), "avgpool2_rows", {x}, [xi, n, c](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (int o = 0; o < n / 2; ++o) {
                for (int j = 0; j < c; ++j) {
                    const T h = static_cast<T>(0.5) * d.data[static_cast<std::size_t>(o) * c + j];
                    gx->data[static_cast<std::size_t>(2 * o) * c + j] += h;
                    gx->data[static_cast<std::size_t>(2 * o + 1) * c + j] += h;
                }
            }
        }
    });
}

template <class T>
VarT<T> upsample2_rows(VarT<T> x) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    if (xv.rank() != 2) {
        throw std::invalid_argument("upsample2_rows: need rank-2 input");
    }
    const int n = xv.shape[0], c = xv.shape[1];
    TensorT<T> out(Shape{2 * n, c});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
            out(2 * i, j) = xv(i, j);
            out(2 * i + 1, j) = xv(i, j);
        }
    }
    const int xi = x.idx;
    return g.make(std::move(out), "upsample2_rows", {x}, [xi, n, c](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < c; ++j) {
                    gx->data[static_cast<std::size_t>(i) * c + j] +=
                        d.data[static_cast<std::size_t>(2 * i) * c + j] +
                        d.data[static_cast<std::size_t>(2 * i + 1) * c + j];
                }
            }
        }
    });
}

// --- row/column structure --------------------------------------------------------

// broadcast-add a length-C vector to every row of an R x C matrix
template <class T>
VarT<T> add_rowvec(VarT<T> x, VarT<T> v) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    const auto& vv = v.val();
    if (xv.rank() != 2 || vv.numel() != xv.shape[1]) {
        throw std::invalid_argument("add_rowvec: shape mismatch");
    }
    const int r = xv.shape[0], c = xv.shape[1];
    TensorT<T> out = xv;
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            out.data[static_cast<std::size_t>(i) * c + j] += vv.data[j];
        }
    }
    const int xi = x.idx, vi = v.idx;
    return g.make(std::move(out), "add_rowvec", {x, v}, [xi, vi, r, c](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        gr.add_grad(xi, d);
        if (TensorT<T>* gv = gr.grad_buf(vi)) {
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) {
                    gv->data[j] += d.data[static_cast<std::size_t>(i) * c + j];
                }
            }
        }
    });
}

template <class T>
VarT<T> concat_cols(VarT<T> a, VarT<T> b) {
    GraphT<T>& g = *a.g;
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[0] != bv.shape[0]) {
        throw std::invalid_argument("concat_cols: row mismatch");
    }
    const int r = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
    TensorT<T> out(Shape{r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) {
            out(i, j) = av(i, j);
        }
        for (int j = 0; j < cb; ++j) {
            out(i, ca + j) = bv(i, j);
        }
    }
    const int ai = a.idx, bi = b.idx;
    return g.make(std::move(out), "concat_cols", {a, b}, [ai, bi, r, ca, cb](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        TensorT<T>* ga = gr.grad_buf(ai);
        TensorT<T>* gb = gr.grad_buf(bi);
        for (int i = 0; i < r; ++i) {
            const T* drow = d.data.data() + static_cast<std::size_t>(i) * (ca + cb);
            if (ga != nullptr) {
                T* garow = ga->data.data() + static_cast<std::size_t>(i) * ca;
                for (int j = 0; j < ca; ++j) {
                    garow[j] += drow[j];
                }
            }
            if (gb != nullptr) {
                T* gbrow = gb->data.data() + static_cast<std::size_t>(i) * cb;
                for (int j = 0; j < cb; ++j) {
                    gbrow[j] += drow[ca + j];
                }
            }
        }
    });
}

template <class T>
VarT<T> slice_cols(VarT<T> x, int start, int len) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    if (xv.rank() != 2 || start < 0 || len <= 0 || start + len > xv.shape[1]) {
        throw std::invalid_argument("slice_cols: range out of bounds");
    }
    const int r = xv.shape[0], c = xv.shape[1];
    TensorT<T> out(Shape{r, len});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < len; ++j) {
            out(i, j) = xv(i, start + j);
        }
    }
    const int xi = x.idx;
    return g.make(std::move(out), "slice_cols", {x}, [xi, r, c, start, len](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < len; ++j) {
                    gx->data[static_cast<std::size_t>(i) * c + start + j] +=
                        d.data[static_cast<std::size_t>(i) * len + j];
                }
            }
        }
    });
}

template <class T>
VarT<T> reshape(VarT<T> x, Shape s) {
    GraphT<T>& g = *x.g;
    if (shape_numel(s) != x.val().numel()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    TensorT<T> out(std::move(s), x.val().data);
    const int xi = x.idx;
    return g.make(std::move(out), "reshape", {x}, [xi](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (std::size_t i = 0; i < gx->data.size(); ++i) {
                gx->data[i] += d.data[i];
            }
        }
    });
}

// value copy with no gradient path (feature exchange between streams)
template <class T>
VarT<T> stop_grad(VarT<T> x) {
    return x.g->make(x.val(), "stop_grad", {}, nullptr);
}

// --- normalization / activation over the last dimension -----------------------------

template <class T>
VarT<T> layer_norm(VarT<T> x, VarT<T> gain, VarT<T> bias, double eps = 1e-5) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    const int c = xv.cols();
    const int r = static_cast<int>(xv.numel() / c);
    if (gain.val().numel() != c || bias.val().numel() != c) {
        throw std::invalid_argument("layer_norm: gain/bias width mismatch");
    }
    TensorT<T> out(xv.shape);
    TensorT<T> xhat(xv.shape);
    std::vector<T> inv_std(static_cast<std::size_t>(r));
    const auto& gv = gain.val();
    const auto& bv = bias.val();
    for (int i = 0; i < r; ++i) {
        const T* row = xv.data.data() + static_cast<std::size_t>(i) * c;
        double mu = 0;
        for (int j = 0; j < c; ++j) {
            mu += row[j];
        }
        mu /= c;
        double var = 0;
        for (int j = 0; j < c; ++j) {
            const double dv = row[j] - mu;
            var += dv * dv;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = static_cast<T>(is);
        for (int j = 0; j < c; ++j) {
            const T xh = static_cast<T>((row[j] - mu) * is);
            xhat.data[static_cast<std::size_t>(i) * c + j] = xh;
            out.data[static_cast<std::size_t>(i) * c + j] = xh * gv.data[j] + bv.data[j];
        }
    }
    const int xi = x.idx, gi = gain.idx, bi = bias.idx;
    return g.make(std::move(out), "layer_norm", {x, gain, bias},
                  [xi, gi, bi, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](GraphT<T>& gr,
                                                                                           int self) {
                      const auto& d = gr.grad_at(self);
                      const auto& gv2 = gr.value_at(gi);
                      TensorT<T>* gx = gr.grad_buf(xi);
                      TensorT<T>* gg = gr.grad_buf(gi);
                      TensorT<T>* gb = gr.grad_buf(bi);
                      for (int i = 0; i < r; ++i) {
                          const T* drow = d.data.data() + static_cast<std::size_t>(i) * c;
                          const T* xh = xhat.data.data() + static_cast<std::size_t>(i) * c;
                          if (gg != nullptr) {
                              for (int j = 0; j < c; ++j) {
                                  gg->data[j] += drow[j] * xh[j];
                              }
                          }
                          if (gb != nullptr) {
                              for (int j = 0; j < c; ++j) {
                                  gb->data[j] += drow[j];
                              }
                          }
                          if (gx != nullptr) {
                              double sum_dxh = 0, sum_dxh_xh = 0;
                              for (int j = 0; j < c; ++j) {
                                  const double dxh = static_cast<double>(drow[j]) * gv2.data[j];
                                  sum_dxh += dxh;
                                  sum_dxh_xh += dxh * xh[j];
                              }
                              const double m1 = sum_dxh / c;
                              const double m2 = sum_dxh_xh / c;
                              const double is = inv_std[static_cast<std::size_t>(i)];
                              for (int j = 0; j < c; ++j) {
                                  const double dxh = static_cast<double>(drow[j]) * gv2.data[j];
                                  gx->data[static_cast<std::size_t>(i) * c + j] +=
                                      static_cast<T>(is * (dxh - m1 - xh[j] * m2));
                              }
                          }
                      }
                  });
}

// stable softmax over the last dimension (max subtraction per slice)
template <class T>
VarT<T> softmax_lastdim(VarT<T> x) {
    GraphT<T>& g = *x.g;
    const auto& xv = x.val();
    const int c = xv.cols();
    const int r = static_cast<int>(xv.numel() / c);
    TensorT<T> out(xv.shape);
    for (int i = 0; i < r; ++i) {
        const T* row = xv.data.data() + static_cast<std::size_t>(i) * c;
        T* yrow = out.data.data() + static_cast<std::size_t>(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) {
            mx = std::max(mx, row[j]);
        }
        double z = 0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - mx));
            yrow[j] = static_cast<T>(e);
            z += e;
        }
        const double iz = 1.0 / z;
        for (int j = 0; j < c; ++j) {
            yrow[j] = static_cast<T>(yrow[j] * iz);
        }
    }
    const int xi = x.idx;
    return g.make(std::move(out), "softmax_lastdim", {x}, [xi, r, c](GraphT<T>& gr, int self) {
        const auto& d = gr.grad_at(self);
        const auto& y = gr.value_at(self);
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (int i = 0; i < r; ++i) {
                const T* drow = d.data.data() + static_cast<std::size_t>(i) * c;
                const T* yrow = y.data.data() + static_cast<std::size_t>(i) * c;
                double dot = 0;
                for (int j = 0; j < c; ++j) {
                    dot += static_cast<double>(drow[j]) * yrow[j];
                }
                T* gxrow = gx->data.data() + static_cast<std::size_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    gxrow[j] += static_cast<T>(yrow[j] * (drow[j] - dot));
                }
            }
        }
    });
}

// --- reductions ------------------------------------------------------------------

template <class T>
VarT<T> sum_all(VarT<T> x) {
    GraphT<T>& g = *x.g;
    double acc = 0;
    for (T v : x.val().data) {
        acc += v;
    }
    TensorT<T> out(Shape{1});
    out.data[0] = static_cast<T>(acc);
    const int xi = x.idx;
    return g.make(std::move(out), "sum_all", {x}, [xi](GraphT<T>& gr, int self) {
        const T d = gr.grad_at(self).data[0];
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (auto& v : gx->data) {
                v += d;
            }
        }
    });
}

template <class T>
VarT<T> mean_all(VarT<T> x) {
    GraphT<T>& g = *x.g;
    const std::int64_t n = x.val().numel();
    double acc = 0;
    for (T v : x.val().data) {
        acc += v;
    }
    TensorT<T> out(Shape{1});
    out.data[0] = static_cast<T>(acc / static_cast<double>(n));
    const int xi = x.idx;
    return g.make(std::move(out), "mean_all", {x}, [xi, n](GraphT<T>& gr, int self) {
        const T d = static_cast<T>(gr.grad_at(self).data[0] / static_cast<T>(n));
        if (TensorT<T>* gx = gr.grad_buf(xi)) {
            for (auto& v : gx->data) {
                v += d;
            }
        }
    });
}

// mean squared error, the workhorse loss
template <class T>
VarT<T> mse(VarT<T> pred, VarT<T> target) {
    VarT<T> diff = sub(pred, target);
    return mean_all(mul(diff, diff));
}

// --- finite-difference gradient verification ---------------------------------------

// Max over sampled coordinates of |analytic - central difference| / max(1, |cd|).
// The loss builder is re-evaluated on perturbed parameter values, so it must be
// a pure function of the parameter set.
inline double grad_check(const std::vector<ParamPtr<double>>& params,
                         const std::function<VarT<double>(GraphT<double>&)>& make_loss, double h,
                         int coords_per_param, RngStream rng) {
    if (h <= 0) {
        throw std::invalid_argument("grad_check: step must be positive");
    }
    for (const auto& p : params) {
        p->zero_grad();
    }
    {
        GraphT<double> g(true);
        VarT<double> loss = make_loss(g);
        g.backward(loss);
        g.accumulate_param_grads();
    }
    std::vector<TensorT<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p->grad);
    }

    auto eval = [&]() {
        GraphT<double> g(false);
        VarT<double> loss = make_loss(g);
        return static_cast<double>(loss.val().data[0]);
    };

    double worst = 0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        const std::int64_t n = p.value.numel();
        const int samples = (n <= coords_per_param) ? static_cast<int>(n) : coords_per_param;
        for (int s = 0; s < samples; ++s) {
            const std::size_t i =
                (n <= coords_per_param) ? static_cast<std::size_t>(s)
                                        : static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
            const double saved = p.value.data[i];
            p.value.data[i] = saved + h;
            const double up = eval();
            p.value.data[i] = saved - h;
            const double dn = eval();
            p.value.data[i] = saved;
            const double fd = (up - dn) / (2.0 * h);
            const double rel = std::abs(analytic[pi].data[i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace s2c
