#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "actuforge/common.hpp"

// Minimal dense-tensor engine with reverse-mode autodiff. The graph is
// dynamic: every op allocates a fresh node referencing its parents, and
// backward() replays the reachable subgraph in reverse topological order.
// Templated on the scalar type so training runs in float while gradient
// checks run in double.

namespace af {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

namespace detail {
inline thread_local bool no_grad_flag = false;
}

// Disables graph recording in scope (inference / frozen models).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::no_grad_flag) { detail::no_grad_flag = true; }
    ~NoGradGuard() { detail::no_grad_flag = prev; }
};

template <class S>
struct TensorNode {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;  // sized lazily, only when needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    std::function<void(TensorNode<S>&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), S(0));
    }
};

template <class S>
class TensorT {
public:
    std::shared_ptr<TensorNode<S>> node;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<TensorNode<S>> n) : node(std::move(n)) {}

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<S>>();
        n->values.assign(shape_numel(shape), S(0));
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT full(Shape shape, S v) {
        auto t = zeros(std::move(shape));
        std::fill(t.node->values.begin(), t.node->values.end(), v);
        return t;
    }

    static TensorT from(Shape shape, std::vector<S> vals, bool requires_grad = false) {
        require(static_cast<int64_t>(vals.size()) == shape_numel(shape),
                str("tensor data size ", vals.size(), " does not match shape ", shape_str(shape)));
        auto n = std::make_shared<TensorNode<S>>();
        n->shape = std::move(shape);
        n->values = std::move(vals);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT scalar(S v) { return from({1}, {v}); }

    bool defined() const { return static_cast<bool>(node); }
    const Shape& shape() const { return node->shape; }
    int64_t size() const { return static_cast<int64_t>(node->values.size()); }
    std::vector<S>& values() { return node->values; }
    const std::vector<S>& values() const { return node->values; }
    bool requires_grad() const { return node->requires_grad; }
    void set_requires_grad(bool rg) { node->requires_grad = rg; }

    std::vector<S>& grad() {
        node->ensure_grad();
        return node->grad;
    }
    const std::vector<S>& grad() const {
        node->ensure_grad();
        return node->grad;
    }
    void zero_grad() { node->grad.assign(node->values.size(), S(0)); }

    S item() const {
        require(size() == 1, str("item() on non-scalar tensor of shape ", shape_str(shape())));
        return node->values[0];
    }
};

namespace detail {

template <class S>
TensorT<S> make_op(Shape shape, std::vector<S> vals,
                   std::vector<TensorT<S>> parents,
                   std::function<void(TensorNode<S>&)> bwd) {
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->values = std::move(vals);
    bool rg = false;
    if (!no_grad_flag) {
        for (auto& p : parents) rg = rg || p.node->requires_grad;
    }
    n->requires_grad = rg;
    if (rg) {
        for (auto& p : parents) n->parents.push_back(p.node);
        n->backward_fn = std::move(bwd);
    }
    return TensorT<S>(std::move(n));
}

template <class S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    require(a.shape() == b.shape(),
            str(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto an = a.node, bn = b.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto an = a.node, bn = b.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto an = a.node, bn = b.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->values[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->values[i];
        }
    });
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * c;
    auto an = a.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [an, c](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

template <class S>
TensorT<S> silu(const TensorT<S>& a) {
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) {
        S x = a.values()[i];
        out[i] = x / (S(1) + std::exp(-x));
    }
    auto an = a.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            S x = an->values[i];
            S sig = S(1) / (S(1) + std::exp(-x));
            an->grad[i] += self.grad[i] * sig * (S(1) + x * (S(1) - sig));
        }
    });
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] > S(0) ? a.values()[i] : S(0);
    auto an = a.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->values[i] > S(0)) an->grad[i] += self.grad[i];
    });
}

template <class S>
TensorT<S> tanh_op(const TensorT<S>& a) {
    std::vector<S> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a.values()[i]);
    auto an = a.node;
    return detail::make_op<S>(a.shape(), std::move(out), {a}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            S y = self.values[i];
            an->grad[i] += self.grad[i] * (S(1) - y * y);
        }
    });
}

template <class S>
TensorT<S> sum(const TensorT<S>& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a.values()[i]);
    auto an = a.node;
    return detail::make_op<S>({1}, {static_cast<S>(acc)}, {a}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        S g = self.grad[0];
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
}

template <class S>
TensorT<S> mean(const TensorT<S>& a) {
    return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

// Stops gradient flow; values are copied, the result is a constant leaf.
template <class S>
TensorT<S> detach(const TensorT<S>& a) {
    return TensorT<S>::from(a.shape(), a.values());
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
    require(shape_numel(new_shape) == a.size(),
            str("reshape: cannot view ", shape_str(a.shape()), " as ", shape_str(new_shape)));
    auto an = a.node;
    return detail::make_op<S>(std::move(new_shape), a.values(), {a}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// matmul (BLAS-backed; see gemm in tensor.cpp)

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2,
            str("matmul: expected rank-2 operands, got ", shape_str(a.shape()), " and ",
                shape_str(b.shape())));
    int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    require(k == k2, str("matmul: inner dimensions do not match: ", shape_str(a.shape()), " x ",
                         shape_str(b.shape())));
    std::vector<S> out(static_cast<size_t>(m) * n, S(0));
    gemm(false, false, m, n, k, S(1), a.values().data(), k, b.values().data(), n, S(0), out.data(), n);
    auto an = a.node, bn = b.node;
    return detail::make_op<S>({m, n}, std::move(out), {a, b}, [an, bn, m, n, k](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            // dA = dC * B^T
            gemm(false, true, m, k, n, S(1), self.grad.data(), n, bn->values.data(), n, S(1),
                 an->grad.data(), k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB = A^T * dC
            gemm(true, false, k, n, m, S(1), an->values.data(), k, self.grad.data(), n, S(1),
                 bn->grad.data(), n);
        }
    });
}

template <class S>
TensorT<S> transpose2d(const TensorT<S>& a) {
    require(a.shape().size() == 2, str("transpose2d: expected rank-2, got ", shape_str(a.shape())));
    int m = a.shape()[0], n = a.shape()[1];
    std::vector<S> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = a.values()[static_cast<size_t>(i) * n + j];
    auto an = a.node;
    return detail::make_op<S>({n, m}, std::move(out), {a}, [an, m, n](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
}

// ---------------------------------------------------------------------------
// structured ops

// rows of `table` selected by `ids`; backward scatter-adds into the table.
// Serves both token embeddings and codebook lookups.
template <class S>
TensorT<S> gather_rows(const TensorT<S>& table, const std::vector<int>& ids) {
    require(table.shape().size() == 2, str("gather_rows: table must be rank-2, got ", shape_str(table.shape())));
    int v = table.shape()[0], e = table.shape()[1];
    int n = static_cast<int>(ids.size());
    std::vector<S> out(static_cast<size_t>(n) * e);
    for (int i = 0; i < n; ++i) {
        require(ids[i] >= 0 && ids[i] < v, str("gather_rows: index ", ids[i], " out of range [0,", v, ")"));
        const S* src = table.values().data() + static_cast<size_t>(ids[i]) * e;
        std::copy(src, src + e, out.data() + static_cast<size_t>(i) * e);
    }
    auto tn = table.node;
    return detail::make_op<S>({n, e}, std::move(out), {table}, [tn, ids, e](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            S* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * e;
            const S* g = self.grad.data() + i * e;
            for (int j = 0; j < e; ++j) dst[j] += g[j];
        }
    });
}

// x[n,m] + b[m] broadcast over rows
template <class S>
TensorT<S> add_row_bias(const TensorT<S>& x, const TensorT<S>& b) {
    require(x.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == x.shape()[1],
            str("add_row_bias: incompatible shapes ", shape_str(x.shape()), " and ", shape_str(b.shape())));
    int n = x.shape()[0], m = x.shape()[1];
    std::vector<S> out(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out[static_cast<size_t>(i) * m + j] = x.values()[static_cast<size_t>(i) * m + j] + b.values()[j];
    auto xn = x.node, bn = b.node;
    return detail::make_op<S>(x.shape(), std::move(out), {x, b}, [xn, bn, n, m](TensorNode<S>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) bn->grad[j] += self.grad[static_cast<size_t>(i) * m + j];
        }
    });
}

// x[C,spatial...] + b[C] broadcast over spatial sites
template <class S>
TensorT<S> add_channel_bias(const TensorT<S>& x, const TensorT<S>& b) {
    require(x.shape().size() >= 2 && b.shape().size() == 1 && b.shape()[0] == x.shape()[0],
            str("add_channel_bias: incompatible shapes ", shape_str(x.shape()), " and ", shape_str(b.shape())));
    int c = x.shape()[0];
    int64_t sp = x.size() / c;
    std::vector<S> out(x.size());
    for (int ci = 0; ci < c; ++ci) {
        S bv = b.values()[ci];
        const S* src = x.values().data() + ci * sp;
        S* dst = out.data() + ci * sp;
        for (int64_t i = 0; i < sp; ++i) dst[i] = src[i] + bv;
    }
    auto xn = x.node, bn = b.node;
    return detail::make_op<S>(x.shape(), std::move(out), {x, b}, [xn, bn, c, sp](TensorNode<S>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                const S* g = self.grad.data() + ci * sp;
                for (int64_t i = 0; i < sp; ++i) acc += static_cast<double>(g[i]);
                bn->grad[ci] += static_cast<S>(acc);
            }
        }
    });
}

// y[c...] = x[c...] * scale[c] + shift[c]; used for norm affines and FiLM.
template <class S>
TensorT<S> channel_affine(const TensorT<S>& x, const TensorT<S>& sc, const TensorT<S>& sh) {
    require(x.shape().size() >= 2 && sc.shape().size() == 1 && sh.shape().size() == 1 &&
                sc.shape()[0] == x.shape()[0] && sh.shape()[0] == x.shape()[0],
            str("channel_affine: incompatible shapes ", shape_str(x.shape()), ", ",
                shape_str(sc.shape()), ", ", shape_str(sh.shape())));
    int c = x.shape()[0];
    int64_t sp = x.size() / c;
    std::vector<S> out(x.size());
    for (int ci = 0; ci < c; ++ci) {
        S a = sc.values()[ci], b = sh.values()[ci];
        const S* src = x.values().data() + ci * sp;
        S* dst = out.data() + ci * sp;
        for (int64_t i = 0; i < sp; ++i) dst[i] = src[i] * a + b;
    }
    auto xn = x.node, scn = sc.node, shn = sh.node;
    return detail::make_op<S>(x.shape(), std::move(out), {x, sc, sh},
                              [xn, scn, shn, c, sp](TensorNode<S>& self) {
        for (int ci = 0; ci < c; ++ci) {
            const S* g = self.grad.data() + ci * sp;
            if (xn->requires_grad) {
                xn->ensure_grad();
                S a = scn->values[ci];
                S* gx = xn->grad.data() + ci * sp;
                for (int64_t i = 0; i < sp; ++i) gx[i] += g[i] * a;
            }
            if (scn->requires_grad) {
                scn->ensure_grad();
                double acc = 0.0;
                const S* xv = xn->values.data() + ci * sp;
                for (int64_t i = 0; i < sp; ++i) acc += static_cast<double>(g[i]) * xv[i];
                scn->grad[ci] += static_cast<S>(acc);
            }
            if (shn->requires_grad) {
                shn->ensure_grad();
                double acc = 0.0;
                for (int64_t i = 0; i < sp; ++i) acc += static_cast<double>(g[i]);
                shn->grad[ci] += static_cast<S>(acc);
            }
        }
    });
}

// concat along channel axis; trailing dims must match
template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.shape().size() == b.shape().size() && a.shape().size() >= 2,
            str("concat_channels: rank mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    for (size_t i = 1; i < a.shape().size(); ++i)
        require(a.shape()[i] == b.shape()[i],
                str("concat_channels: trailing dims differ: ", shape_str(a.shape()), " vs ",
                    shape_str(b.shape())));
    Shape os = a.shape();
    os[0] += b.shape()[0];
    std::vector<S> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto an = a.node, bn = b.node;
    int64_t asz = a.size();
    return detail::make_op<S>(std::move(os), std::move(out), {a, b}, [an, bn, asz](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < asz; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = asz; i < self.grad.size(); ++i) bn->grad[i - asz] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// convolution: im2col + GEMM lowering

namespace detail {

struct ConvGeom {
    int c_in, d, h, w;     // input
    int k, stride, pad;
    int od, oh, ow;        // output
    int64_t n_out() const { return static_cast<int64_t>(od) * oh * ow; }
    int64_t rows() const { return static_cast<int64_t>(c_in) * k * k * k; }
};

inline ConvGeom conv_geom(const Shape& x, int k, int stride, int pad) {
    require(x.size() == 4, str("conv3d: expected rank-4 input [C,D,H,W], got ", shape_str(x)));
    require(k >= 1 && stride >= 1 && pad >= 0, "conv3d: bad kernel/stride/pad");
    ConvGeom g{x[0], x[1], x[2], x[3], k, stride, pad, 0, 0, 0};
    auto out_extent = [&](int e, const char* name) {
        int num = e + 2 * pad - k;
        require(num >= 0 && num % stride == 0,
                str("conv3d: non-integral output extent along ", name, ": (", e, " + 2*", pad, " - ",
                    k, ") / ", stride));
        return num / stride + 1;
    };
    g.od = out_extent(x[1], "D");
    g.oh = out_extent(x[2], "H");
    g.ow = out_extent(x[3], "W");
    return g;
}

// grow-once scratch for lowering buffers; training is single-threaded per
// spec, backward closures run on the constructing thread
template <class S>
std::vector<S>& conv_scratch() {
    static thread_local std::vector<S> buf;
    return buf;
}

template <class S>
void im2col(const S* x, const ConvGeom& g, S* cols) {
    const int64_t n = g.n_out();
    int64_t row = 0;
    for (int c = 0; c < g.c_in; ++c) {
        const S* xc = x + static_cast<int64_t>(c) * g.d * g.h * g.w;
        for (int kz = 0; kz < g.k; ++kz)
            for (int ky = 0; ky < g.k; ++ky)
                for (int kx = 0; kx < g.k; ++kx, ++row) {
                    S* dst = cols + row * n;
                    int64_t col = 0;
                    for (int oz = 0; oz < g.od; ++oz) {
                        int iz = oz * g.stride - g.pad + kz;
                        bool zin = iz >= 0 && iz < g.d;
                        for (int oy = 0; oy < g.oh; ++oy) {
                            int iy = oy * g.stride - g.pad + ky;
                            bool yin = zin && iy >= 0 && iy < g.h;
                            const S* xrow = xc + (static_cast<int64_t>(iz) * g.h + iy) * g.w;
                            if (!yin) {
                                std::fill(dst + col, dst + col + g.ow, S(0));
                                col += g.ow;
                            } else if (g.stride == 1) {
                                // contiguous run: [x_lo, x_hi) maps 1:1 onto input cells
                                int shift = kx - g.pad;  // ix = ox + shift
                                int x_lo = std::max(0, -shift);
                                int x_hi = std::min(g.ow, g.w - shift);
                                if (x_lo > 0) std::fill(dst + col, dst + col + x_lo, S(0));
                                if (x_hi > x_lo)
                                    std::copy(xrow + x_lo + shift, xrow + x_hi + shift,
                                              dst + col + x_lo);
                                if (x_hi < g.ow)
                                    std::fill(dst + col + std::max(x_hi, x_lo), dst + col + g.ow, S(0));
                                col += g.ow;
                            } else {
                                for (int ox = 0; ox < g.ow; ++ox, ++col) {
                                    int ix = ox * g.stride - g.pad + kx;
                                    dst[col] = (ix >= 0 && ix < g.w) ? xrow[ix] : S(0);
                                }
                            }
                        }
                    }
                }
    }
}

template <class S>
void col2im_add(const S* cols, const ConvGeom& g, S* x) {
    const int64_t n = g.n_out();
    int64_t row = 0;
    for (int c = 0; c < g.c_in; ++c) {
        S* xc = x + static_cast<int64_t>(c) * g.d * g.h * g.w;
        for (int kz = 0; kz < g.k; ++kz)
            for (int ky = 0; ky < g.k; ++ky)
                for (int kx = 0; kx < g.k; ++kx, ++row) {
                    const S* src = cols + row * n;
                    int64_t col = 0;
                    for (int oz = 0; oz < g.od; ++oz) {
                        int iz = oz * g.stride - g.pad + kz;
                        bool zin = iz >= 0 && iz < g.d;
                        for (int oy = 0; oy < g.oh; ++oy) {
                            int iy = oy * g.stride - g.pad + ky;
                            bool yin = zin && iy >= 0 && iy < g.h;
                            if (!yin) {
                                col += g.ow;
                                continue;
                            }
                            S* xrow = xc + (static_cast<int64_t>(iz) * g.h + iy) * g.w;
                            if (g.stride == 1) {
                                int shift = kx - g.pad;
                                int x_lo = std::max(0, -shift);
                                int x_hi = std::min(g.ow, g.w - shift);
                                S* xs = xrow + shift;
                                for (int ox = x_lo; ox < x_hi; ++ox) xs[ox] += src[col + ox];
                                col += g.ow;
                            } else {
                                for (int ox = 0; ox < g.ow; ++ox, ++col) {
                                    int ix = ox * g.stride - g.pad + kx;
                                    if (ix >= 0 && ix < g.w) xrow[ix] += src[col];
                                }
                            }
                        }
                    }
                }
    }
}

}  // namespace detail

// input [C_in,D,H,W], kernel [C_out,C_in,k,k,k]; cross-correlation semantics.
template <class S>
TensorT<S> conv3d(const TensorT<S>& x, const TensorT<S>& w, int stride, int pad) {
    require(w.shape().size() == 5, str("conv3d: kernel must be rank-5, got ", shape_str(w.shape())));
    int k = w.shape()[2];
    require(w.shape()[3] == k && w.shape()[4] == k, str("conv3d: kernel not cubic: ", shape_str(w.shape())));
    auto g = detail::conv_geom(x.shape(), k, stride, pad);
    require(w.shape()[1] == g.c_in, str("conv3d: kernel expects ", w.shape()[1],
                                        " input channels, input has ", g.c_in));
    int c_out = w.shape()[0];
    const int64_t n = g.n_out(), rows = g.rows();

    auto& cols = detail::conv_scratch<S>();
    cols.resize(rows * n);
    detail::im2col(x.values().data(), g, cols.data());
    std::vector<S> out(static_cast<size_t>(c_out) * n, S(0));
    gemm(false, false, c_out, static_cast<int>(n), static_cast<int>(rows), S(1), w.values().data(),
         static_cast<int>(rows), cols.data(), static_cast<int>(n), S(0), out.data(), static_cast<int>(n));

    auto xn = x.node, wn = w.node;
    return detail::make_op<S>({c_out, g.od, g.oh, g.ow}, std::move(out), {x, w},
                              [xn, wn, g, c_out, n, rows](TensorNode<S>& self) {
        auto& cols = detail::conv_scratch<S>();
        cols.resize(rows * n);
        if (wn->requires_grad) {
            wn->ensure_grad();
            detail::im2col(xn->values.data(), g, cols.data());
            // dW = dY * cols^T
            gemm(false, true, c_out, static_cast<int>(rows), static_cast<int>(n), S(1),
                 self.grad.data(), static_cast<int>(n), cols.data(), static_cast<int>(n), S(1),
                 wn->grad.data(), static_cast<int>(rows));
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            // dcols = W^T * dY, then scatter back
            gemm(true, false, static_cast<int>(rows), static_cast<int>(n), c_out, S(1),
                 wn->values.data(), static_cast<int>(rows), self.grad.data(), static_cast<int>(n),
                 S(0), cols.data(), static_cast<int>(n));
            detail::col2im_add(cols.data(), g, xn->grad.data());
        }
    });
}

// input [C_in,...], kernel [C_in,C_out,k,k,k]; exact adjoint of conv3d with the
// same (k,stride,pad): <conv(x),y> == <x, conv_transpose(y)>.
template <class S>
TensorT<S> conv_transpose3d(const TensorT<S>& x, const TensorT<S>& w, int stride, int pad) {
    require(x.shape().size() == 4, str("conv_transpose3d: expected rank-4 input, got ", shape_str(x.shape())));
    require(w.shape().size() == 5, str("conv_transpose3d: kernel must be rank-5, got ", shape_str(w.shape())));
    int c_in = x.shape()[0];
    require(w.shape()[0] == c_in, str("conv_transpose3d: kernel expects ", w.shape()[0],
                                      " input channels, input has ", c_in));
    int c_out = w.shape()[1], k = w.shape()[2];
    require(w.shape()[3] == k && w.shape()[4] == k,
            str("conv_transpose3d: kernel not cubic: ", shape_str(w.shape())));
    // output extents invert the conv formula
    auto oext = [&](int e) { return (e - 1) * stride - 2 * pad + k; };
    int od = oext(x.shape()[1]), oh = oext(x.shape()[2]), ow = oext(x.shape()[3]);
    require(od >= 1 && oh >= 1 && ow >= 1,
            str("conv_transpose3d: non-positive output extent for input ", shape_str(x.shape())));
    // geometry of the forward conv this op is adjoint to (maps [C_out,od,oh,ow] -> [C_in, d,h,w])
    detail::ConvGeom g{c_out, od, oh, ow, k, stride, pad,
                       x.shape()[1], x.shape()[2], x.shape()[3]};
    const int64_t n = g.n_out(), rows = g.rows();

    // cols = W^T_flat[C_out*k^3, C_in] * x_flat[C_in, n]; y = col2im(cols)
    auto& cols = detail::conv_scratch<S>();
    cols.resize(rows * n);
    gemm(true, false, static_cast<int>(rows), static_cast<int>(n), c_in, S(1), w.values().data(),
         static_cast<int>(rows), x.values().data(), static_cast<int>(n), S(0), cols.data(),
         static_cast<int>(n));
    std::vector<S> out(static_cast<size_t>(c_out) * od * oh * ow, S(0));
    detail::col2im_add(cols.data(), g, out.data());

    auto xn = x.node, wn = w.node;
    return detail::make_op<S>({c_out, od, oh, ow}, std::move(out), {x, w},
                              [xn, wn, g, c_in, n, rows](TensorNode<S>& self) {
        auto& cols = detail::conv_scratch<S>();
        cols.resize(rows * n);
        detail::im2col(self.grad.data(), g, cols.data());
        if (xn->requires_grad) {
            xn->ensure_grad();
            // dX = W_flat[C_in, C_out*k^3] * im2col(dY)
            gemm(false, false, c_in, static_cast<int>(n), static_cast<int>(rows), S(1),
                 wn->values.data(), static_cast<int>(rows), cols.data(), static_cast<int>(n), S(1),
                 xn->grad.data(), static_cast<int>(n));
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            // dW = X_flat * im2col(dY)^T
            gemm(false, true, c_in, static_cast<int>(rows), static_cast<int>(n), S(1),
                 xn->values.data(), static_cast<int>(n), cols.data(), static_cast<int>(n), S(1),
                 wn->grad.data(), static_cast<int>(rows));
        }
    });
}

template <class S>
TensorT<S> avg_pool3d(const TensorT<S>& x, int window) {
    require(x.shape().size() == 4, str("avg_pool3d: expected rank-4 input, got ", shape_str(x.shape())));
    require(window >= 1, "avg_pool3d: window must be >= 1");
    int c = x.shape()[0], d = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    require(d % window == 0 && h % window == 0 && w % window == 0,
            str("avg_pool3d: extents ", shape_str(x.shape()), " not divisible by window ", window));
    int od = d / window, oh = h / window, ow = w / window;
    S inv = S(1) / static_cast<S>(window * window * window);
    std::vector<S> out(static_cast<size_t>(c) * od * oh * ow);
    const S* xv = x.values().data();
    for (int ci = 0; ci < c; ++ci)
        for (int oz = 0; oz < od; ++oz)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int kz = 0; kz < window; ++kz)
                        for (int ky = 0; ky < window; ++ky)
                            for (int kx = 0; kx < window; ++kx) {
                                int64_t idx = ((static_cast<int64_t>(ci) * d + oz * window + kz) * h +
                                               oy * window + ky) * w + ox * window + kx;
                                acc += static_cast<double>(xv[idx]);
                            }
                    out[((static_cast<int64_t>(ci) * od + oz) * oh + oy) * ow + ox] =
                        static_cast<S>(acc) * inv;
                }
    auto xn = x.node;
    return detail::make_op<S>({c, od, oh, ow}, std::move(out), {x},
                              [xn, c, d, h, w, od, oh, ow, window, inv](TensorNode<S>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int oz = 0; oz < od; ++oz)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        S g = self.grad[((static_cast<int64_t>(ci) * od + oz) * oh + oy) * ow + ox] * inv;
                        for (int kz = 0; kz < window; ++kz)
                            for (int ky = 0; ky < window; ++ky)
                                for (int kx = 0; kx < window; ++kx) {
                                    int64_t idx = ((static_cast<int64_t>(ci) * d + oz * window + kz) * h +
                                                   oy * window + ky) * w + ox * window + kx;
                                    xn->grad[idx] += g;
                                }
                    }
    });
}

// normalizes each of `groups` channel groups to zero mean / unit variance
// (population variance, eps-stabilized). Affine terms live outside.
template <class S>
TensorT<S> group_norm(const TensorT<S>& x, int groups, S eps) {
    require(x.shape().size() >= 2, str("group_norm: expected rank >= 2, got ", shape_str(x.shape())));
    int c = x.shape()[0];
    require(groups >= 1 && c % groups == 0,
            str("group_norm: channels ", c, " not divisible by groups ", groups));
    int64_t sp = x.size() / c;
    int cg = c / groups;
    int64_t gsize = cg * sp;
    std::vector<S> out(x.size());
    std::vector<S> mu(groups), istd(groups);
    const S* xv = x.values().data();
    for (int g = 0; g < groups; ++g) {
        const S* xg = xv + static_cast<int64_t>(g) * gsize;
        double m = 0.0;
        for (int64_t i = 0; i < gsize; ++i) m += static_cast<double>(xg[i]);
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (int64_t i = 0; i < gsize; ++i) {
            double d = static_cast<double>(xg[i]) - m;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        mu[g] = static_cast<S>(m);
        istd[g] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        S* og = out.data() + static_cast<int64_t>(g) * gsize;
        for (int64_t i = 0; i < gsize; ++i) og[i] = (xg[i] - mu[g]) * istd[g];
    }
    auto xn = x.node;
    return detail::make_op<S>(x.shape(), std::move(out), {x},
                              [xn, groups, gsize, mu, istd](TensorNode<S>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int g = 0; g < groups; ++g) {
            const S* xhat = self.values.data() + static_cast<int64_t>(g) * gsize;
            const S* gr = self.grad.data() + static_cast<int64_t>(g) * gsize;
            S* gx = xn->grad.data() + static_cast<int64_t>(g) * gsize;
            double gsum = 0.0, gxsum = 0.0;
            for (int64_t i = 0; i < gsize; ++i) {
                gsum += static_cast<double>(gr[i]);
                gxsum += static_cast<double>(gr[i]) * xhat[i];
            }
            double gm = gsum / static_cast<double>(gsize);
            double gxm = gxsum / static_cast<double>(gsize);
            for (int64_t i = 0; i < gsize; ++i)
                gx[i] += static_cast<S>(istd[g] * (static_cast<double>(gr[i]) - gm - xhat[i] * gxm));
        }
    });
}

// ---------------------------------------------------------------------------
// backward pass and optimizer

template <class S>
void backward(TensorT<S>& loss) {
    require(loss.size() == 1,
            str("backward: loss must be scalar, got shape ", shape_str(loss.shape())));
    require(loss.requires_grad(), "backward: loss does not require grad");

    // iterative DFS post-order over parent edges; reversed it is a valid
    // topological order (consumers before producers)
    std::vector<TensorNode<S>*> order;
    std::unordered_set<TensorNode<S>*> visited;
    struct Frame {
        TensorNode<S>* n;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node.get(), 0});
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            TensorNode<S>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    for (auto* n : order) n->ensure_grad();
    loss.node->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

template <class S>
struct ParameterT {
    std::string name;
    TensorT<S> value;
    std::vector<S> m, v;  // Adam moments, shape-matched to value
    int64_t step = 0;

    ParameterT() = default;
    ParameterT(std::string n, TensorT<S> t) : name(std::move(n)), value(std::move(t)) {
        value.set_requires_grad(true);
    }
};

// standard bias-corrected Adam; mutates only parameter state
template <class S>
void adam_step(std::vector<ParameterT<S>*>& params, S lr, S beta1, S beta2, S eps) {
    for (auto* p : params) {
        auto& val = p->value.values();
        auto& g = p->value.grad();
        if (p->m.size() != val.size()) p->m.assign(val.size(), S(0));
        if (p->v.size() != val.size()) p->v.assign(val.size(), S(0));
        p->step += 1;
        S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(p->step)));
        S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(p->step)));
        for (size_t i = 0; i < val.size(); ++i) {
            p->m[i] = beta1 * p->m[i] + (S(1) - beta1) * g[i];
            p->v[i] = beta2 * p->v[i] + (S(1) - beta2) * g[i] * g[i];
            S mhat = p->m[i] / bc1;
            S vhat = p->v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

using Tensor = TensorT<float>;
using Parameter = ParameterT<float>;

}  // namespace af
