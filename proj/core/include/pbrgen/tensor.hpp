#pragma once

// Reverse-mode autodiff on dense tensors, templated on the scalar type so the
// same graph code runs in f32 for training and f64 for derivative checks.
// Ops build eagerly: each call computes its value and records a closure that
// scatters output-gradient into the parents. Loops are plain and sequential;
// the matmul kernel is written so the compiler can vectorize it without
// reassociation flags, which keeps accumulation order (and results) fixed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pbrgen/errors.hpp"
#include "pbrgen/rng.hpp"

namespace pbrgen {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw TensorError("shape has non-positive dim");
        n *= size_t(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <class S>
struct NodeT {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad; // sized by backward() only where needed
    bool requires_grad = false;
    std::string name; // set on parameters; empty on intermediates
    std::vector<std::shared_ptr<NodeT<S>>> parents;
    std::function<void(NodeT<S>&)> backward_fn;

    size_t numel() const { return value.size(); }
};

template <class S>
class TensorT {
public:
    using Node = NodeT<S>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static TensorT zeros(Shape shape) { return filled(std::move(shape), S(0)); }

    static TensorT filled(Shape shape, S v) {
        auto n = std::make_shared<Node>();
        n->value.assign(shape_numel(shape), v);
        n->shape = std::move(shape);
        return TensorT(std::move(n));
    }

    static TensorT from_data(Shape shape, std::vector<S> data) {
        if (shape_numel(shape) != data.size())
            throw TensorError("from_data: " + shape_str(shape) + " wants " +
                              std::to_string(shape_numel(shape)) + " values, got " +
                              std::to_string(data.size()));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return TensorT(std::move(n));
    }

    static TensorT randn(Shape shape, Rng& rng, S stddev = S(1)) {
        auto t = zeros(std::move(shape));
        for (auto& v : t.data()) v = S(rng.normal()) * stddev;
        return t;
    }

    // Trainable leaf. Name is the checkpoint key.
    static TensorT param(Shape shape, std::string name) {
        auto t = zeros(std::move(shape));
        t.node_->requires_grad = true;
        t.node_->name = std::move(name);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[size_t(i)]; }
    size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& name() const { return node_->name; }

    std::vector<S>& data() { return node_->value; }
    const std::vector<S>& data() const { return node_->value; }
    std::vector<S>& grad() { return node_->grad; }
    const std::vector<S>& grad() const { return node_->grad; }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

namespace detail {

// C[M,N] += A[M,K] * B[K,N]. Broadcast form: the j-loop is a pure
// elementwise multiply-add over contiguous rows, so it vectorizes under
// strict FP semantics and the accumulation order never changes.
template <class S>
void gemm_acc(S* c, const S* a, const S* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + size_t(i) * n;
        const S* arow = a + size_t(i) * k;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const S a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
            const S* b0 = b + size_t(p) * n;
            const S* b1 = b0 + n;
            const S* b2 = b1 + n;
            const S* b3 = b2 + n;
            for (int j = 0; j < n; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < k; ++p) {
            const S ap = arow[p];
            const S* brow = b + size_t(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

template <class S>
void transpose(std::vector<S>& out, const S* in, int rows, int cols) {
    out.assign(size_t(rows) * cols, S(0));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[size_t(c) * rows + r] = in[size_t(r) * cols + c];
}

template <class S>
std::shared_ptr<NodeT<S>> make_node(Shape shape, std::vector<std::shared_ptr<NodeT<S>>> parents) {
    auto n = std::make_shared<NodeT<S>>();
    n->value.assign(shape_numel(shape), S(0));
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

template <class S>
void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

} // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape("add", a, b);
    auto n = detail::make_node<S>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[size_t(p)];
                if (!par.requires_grad) continue;
                for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
            }
        };
    return TensorT<S>(n);
}

// Residual add that leaves x untouched (bit for bit, signed zeros included)
// wherever delta is exactly zero. A plain add would turn -0.0 + 0.0 into +0.0;
// skipping the add would cut delta out of the graph. Gradients match add().
template <class S>
TensorT<S> add_delta(const TensorT<S>& x, const TensorT<S>& delta) {
    detail::check_same_shape("add_delta", x, delta);
    auto n = detail::make_node<S>(x.shape(), {x.node(), delta.node()});
    const auto& xv = x.data();
    const auto& dv = delta.data();
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = dv[i] == S(0) ? xv[i] : xv[i] + dv[i];
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[size_t(p)];
                if (!par.requires_grad) continue;
                for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
            }
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape("sub", a, b);
    auto n = detail::make_node<S>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            if (pb.requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape("mul", a, b);
    auto n = detail::make_node<S>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pa.grad[i] += self.grad[i] * pb.value[i];
            if (pb.requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pb.grad[i] += self.grad[i] * pa.value[i];
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * c;
    if (n->requires_grad)
        n->backward_fn = [c](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * c;
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + c;
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> exp_t(const TensorT<S>& a) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::exp(av[i]);
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * self.value[i];
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> tanh_t(const TensorT<S>& a) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::tanh(av[i]);
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * (S(1) - self.value[i] * self.value[i]);
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = S(1) / (S(1) + std::exp(-av[i]));
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * self.value[i] * (S(1) - self.value[i]);
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> silu(const TensorT<S>& a) {
    auto n = detail::make_node<S>(a.shape(), {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < n->value.size(); ++i) {
        const S sg = S(1) / (S(1) + std::exp(-av[i]));
        n->value[i] = av[i] * sg;
    }
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const S x = pa.value[i];
                const S sg = S(1) / (S(1) + std::exp(-x));
                pa.grad[i] += self.grad[i] * sg * (S(1) + x * (S(1) - sg));
            }
        };
    return TensorT<S>(n);
}

// ---- reshapes and layout ----------------------------------------------------

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw TensorError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                          " changes element count");
    auto n = detail::make_node<S>(std::move(shape), {a.node()});
    n->value = a.data();
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        };
    return TensorT<S>(n);
}

// [N,C,H,W] -> [N, H*W, C]
template <class S>
TensorT<S> nchw_to_ntc(const TensorT<S>& a) {
    if (a.shape().size() != 4) throw TensorError("nchw_to_ntc: want 4-d, got " + shape_str(a.shape()));
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    const int T = H * W;
    auto n = detail::make_node<S>({N, T, C}, {a.node()});
    const auto& av = a.data();
    for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c) {
            const S* src = av.data() + (size_t(b) * C + c) * T;
            S* dst = n->value.data() + size_t(b) * T * C + c;
            for (int t = 0; t < T; ++t) dst[size_t(t) * C] = src[t];
        }
    if (n->requires_grad)
        n->backward_fn = [N, C, T](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (int b = 0; b < N; ++b)
                for (int c = 0; c < C; ++c) {
                    S* dst = pa.grad.data() + (size_t(b) * C + c) * T;
                    const S* src = self.grad.data() + size_t(b) * T * C + c;
                    for (int t = 0; t < T; ++t) dst[t] += src[size_t(t) * C];
                }
        };
    return TensorT<S>(n);
}

// [N, H*W, C] -> [N,C,H,W]
template <class S>
TensorT<S> ntc_to_nchw(const TensorT<S>& a, int H, int W) {
    if (a.shape().size() != 3) throw TensorError("ntc_to_nchw: want 3-d, got " + shape_str(a.shape()));
    const int N = a.dim(0), T = a.dim(1), C = a.dim(2);
    if (T != H * W) throw TensorError("ntc_to_nchw: T != H*W");
    auto n = detail::make_node<S>({N, C, H, W}, {a.node()});
    const auto& av = a.data();
    for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c) {
            S* dst = n->value.data() + (size_t(b) * C + c) * T;
            const S* src = av.data() + size_t(b) * T * C + c;
            for (int t = 0; t < T; ++t) dst[t] = src[size_t(t) * C];
        }
    if (n->requires_grad)
        n->backward_fn = [N, C, T](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (int b = 0; b < N; ++b)
                for (int c = 0; c < C; ++c) {
                    const S* src = self.grad.data() + (size_t(b) * C + c) * T;
                    S* dst = pa.grad.data() + size_t(b) * T * C + c;
                    for (int t = 0; t < T; ++t) dst[size_t(t) * C] += src[t];
                }
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> concat_ch(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4 || a.dim(0) != b.dim(0) ||
        a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw TensorError("concat_ch: incompatible " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const size_t plane = size_t(H) * W;
    auto n = detail::make_node<S>({N, Ca + Cb, H, W}, {a.node(), b.node()});
    for (int bn = 0; bn < N; ++bn) {
        std::copy_n(a.data().data() + size_t(bn) * Ca * plane, size_t(Ca) * plane,
                    n->value.data() + size_t(bn) * (Ca + Cb) * plane);
        std::copy_n(b.data().data() + size_t(bn) * Cb * plane, size_t(Cb) * plane,
                    n->value.data() + size_t(bn) * (Ca + Cb) * plane + size_t(Ca) * plane);
    }
    if (n->requires_grad)
        n->backward_fn = [N, Ca, Cb, plane](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (int bn = 0; bn < N; ++bn) {
                const S* g = self.grad.data() + size_t(bn) * (Ca + Cb) * plane;
                if (pa.requires_grad) {
                    S* dst = pa.grad.data() + size_t(bn) * Ca * plane;
                    for (size_t i = 0; i < size_t(Ca) * plane; ++i) dst[i] += g[i];
                }
                if (pb.requires_grad) {
                    S* dst = pb.grad.data() + size_t(bn) * Cb * plane;
                    const S* gs = g + size_t(Ca) * plane;
                    for (size_t i = 0; i < size_t(Cb) * plane; ++i) dst[i] += gs[i];
                }
            }
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> slice_ch(const TensorT<S>& a, int c0, int c1) {
    if (a.shape().size() != 4) throw TensorError("slice_ch: want 4-d, got " + shape_str(a.shape()));
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (c0 < 0 || c1 > C || c0 >= c1)
        throw TensorError("slice_ch: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                          ") of C=" + std::to_string(C));
    const size_t plane = size_t(H) * W;
    auto n = detail::make_node<S>({N, c1 - c0, H, W}, {a.node()});
    for (int bn = 0; bn < N; ++bn)
        std::copy_n(a.data().data() + (size_t(bn) * C + c0) * plane, size_t(c1 - c0) * plane,
                    n->value.data() + size_t(bn) * (c1 - c0) * plane);
    if (n->requires_grad)
        n->backward_fn = [N, C, c0, c1, plane](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (int bn = 0; bn < N; ++bn) {
                S* dst = pa.grad.data() + (size_t(bn) * C + c0) * plane;
                const S* src = self.grad.data() + size_t(bn) * (c1 - c0) * plane;
                for (size_t i = 0; i < size_t(c1 - c0) * plane; ++i) dst[i] += src[i];
            }
        };
    return TensorT<S>(n);
}

// Slice the last dim of a 3-d tensor: [N,T,C] -> [N,T,c1-c0].
template <class S>
TensorT<S> slice_last(const TensorT<S>& a, int c0, int c1) {
    if (a.shape().size() != 3) throw TensorError("slice_last: want 3-d, got " + shape_str(a.shape()));
    const int N = a.dim(0), T = a.dim(1), C = a.dim(2);
    if (c0 < 0 || c1 > C || c0 >= c1) throw TensorError("slice_last: bad range");
    auto n = detail::make_node<S>({N, T, c1 - c0}, {a.node()});
    const auto& av = a.data();
    const int w = c1 - c0;
    for (int r = 0; r < N * T; ++r)
        std::copy_n(av.data() + size_t(r) * C + c0, w, n->value.data() + size_t(r) * w);
    if (n->requires_grad)
        n->backward_fn = [N, T, C, c0, w](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (int r = 0; r < N * T; ++r) {
                S* dst = pa.grad.data() + size_t(r) * C + c0;
                const S* src = self.grad.data() + size_t(r) * w;
                for (int i = 0; i < w; ++i) dst[i] += src[i];
            }
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> upsample2x(const TensorT<S>& a) {
    if (a.shape().size() != 4) throw TensorError("upsample2x: want 4-d, got " + shape_str(a.shape()));
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    auto n = detail::make_node<S>({N, C, H * 2, W * 2}, {a.node()});
    const auto& av = a.data();
    for (int p = 0; p < N * C; ++p) {
        const S* src = av.data() + size_t(p) * H * W;
        S* dst = n->value.data() + size_t(p) * H * W * 4;
        for (int y = 0; y < 2 * H; ++y)
            for (int x = 0; x < 2 * W; ++x)
                dst[size_t(y) * 2 * W + x] = src[size_t(y / 2) * W + x / 2];
    }
    if (n->requires_grad)
        n->backward_fn = [N, C, H, W](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            for (int p = 0; p < N * C; ++p) {
                S* dst = pa.grad.data() + size_t(p) * H * W;
                const S* src = self.grad.data() + size_t(p) * H * W * 4;
                for (int y = 0; y < 2 * H; ++y)
                    for (int x = 0; x < 2 * W; ++x)
                        dst[size_t(y / 2) * W + x / 2] += src[size_t(y) * 2 * W + x];
            }
        };
    return TensorT<S>(n);
}

// ---- contractions -----------------------------------------------------------

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw TensorError("matmul: incompatible " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    auto n = detail::make_node<S>({M, N}, {a.node(), b.node()});
    detail::gemm_acc(n->value.data(), a.data().data(), b.data().data(), M, K, N);
    if (n->requires_grad)
        n->backward_fn = [M, K, N](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                std::vector<S> bt;
                detail::transpose(bt, pb.value.data(), K, N);
                detail::gemm_acc(pa.grad.data(), self.grad.data(), bt.data(), M, N, K);
            }
            if (pb.requires_grad) {
                std::vector<S> at;
                detail::transpose(at, pa.value.data(), M, K);
                detail::gemm_acc(pb.grad.data(), at.data(), self.grad.data(), K, M, N);
            }
        };
    return TensorT<S>(n);
}

// Batched matmul [B,M,K] x [B,K,N] -> [B,M,N].
template <class S>
TensorT<S> bmm(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0) ||
        a.dim(2) != b.dim(1))
        throw TensorError("bmm: incompatible " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    auto n = detail::make_node<S>({B, M, N}, {a.node(), b.node()});
    for (int i = 0; i < B; ++i)
        detail::gemm_acc(n->value.data() + size_t(i) * M * N, a.data().data() + size_t(i) * M * K,
                         b.data().data() + size_t(i) * K * N, M, K, N);
    if (n->requires_grad)
        n->backward_fn = [B, M, K, N](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            std::vector<S> scratch;
            for (int i = 0; i < B; ++i) {
                const S* g = self.grad.data() + size_t(i) * M * N;
                if (pa.requires_grad) {
                    detail::transpose(scratch, pb.value.data() + size_t(i) * K * N, K, N);
                    detail::gemm_acc(pa.grad.data() + size_t(i) * M * K, g, scratch.data(), M, N, K);
                }
                if (pb.requires_grad) {
                    detail::transpose(scratch, pa.value.data() + size_t(i) * M * K, M, K);
                    detail::gemm_acc(pb.grad.data() + size_t(i) * K * N, scratch.data(), g, K, M, N);
                }
            }
        };
    return TensorT<S>(n);
}

// Batched matmul against a transposed right factor: [B,M,K] x [B,N,K] -> [B,M,N].
template <class S>
TensorT<S> bmm_nt(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0) ||
        a.dim(2) != b.dim(2))
        throw TensorError("bmm_nt: incompatible " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    auto n = detail::make_node<S>({B, M, N}, {a.node(), b.node()});
    std::vector<S> bt;
    for (int i = 0; i < B; ++i) {
        detail::transpose(bt, b.data().data() + size_t(i) * N * K, N, K);
        detail::gemm_acc(n->value.data() + size_t(i) * M * N, a.data().data() + size_t(i) * M * K,
                         bt.data(), M, K, N);
    }
    if (n->requires_grad)
        n->backward_fn = [B, M, K, N](NodeT<S>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            std::vector<S> scratch;
            for (int i = 0; i < B; ++i) {
                const S* g = self.grad.data() + size_t(i) * M * N;
                // dA = dC * B ; dB = dC^T * A
                if (pa.requires_grad)
                    detail::gemm_acc(pa.grad.data() + size_t(i) * M * K, g,
                                     pb.value.data() + size_t(i) * N * K, M, N, K);
                if (pb.requires_grad) {
                    detail::transpose(scratch, g, M, N);
                    detail::gemm_acc(pb.grad.data() + size_t(i) * N * K, scratch.data(),
                                     pa.value.data() + size_t(i) * M * K, N, M, K);
                }
            }
        };
    return TensorT<S>(n);
}

// x[..., Cin] * w[Cin, Cout] + b[Cout]; x may be 2-d or 3-d.
template <class S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    const auto& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 3)
        throw TensorError("linear: want 2-d or 3-d input, got " + shape_str(xs));
    const int Cin = xs.back();
    if (w.shape().size() != 2 || w.dim(0) != Cin || b.shape() != Shape{w.dim(1)})
        throw TensorError("linear: weight " + shape_str(w.shape()) + " bias " +
                          shape_str(b.shape()) + " vs input " + shape_str(xs));
    const int Cout = w.dim(1);
    const int R = int(x.numel()) / Cin;
    Shape out_shape = xs;
    out_shape.back() = Cout;
    auto n = detail::make_node<S>(out_shape, {x.node(), w.node(), b.node()});
    for (int r = 0; r < R; ++r) {
        S* row = n->value.data() + size_t(r) * Cout;
        const S* bb = b.data().data();
        for (int j = 0; j < Cout; ++j) row[j] = bb[j];
    }
    detail::gemm_acc(n->value.data(), x.data().data(), w.data().data(), R, Cin, Cout);
    if (n->requires_grad)
        n->backward_fn = [R, Cin, Cout](NodeT<S>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            auto& pb = *self.parents[2];
            if (px.requires_grad) {
                std::vector<S> wt;
                detail::transpose(wt, pw.value.data(), Cin, Cout);
                detail::gemm_acc(px.grad.data(), self.grad.data(), wt.data(), R, Cout, Cin);
            }
            if (pw.requires_grad) {
                // dW[i,j] += sum_r x[r,i] g[r,j]
                for (int r = 0; r < R; ++r) {
                    const S* xr = px.value.data() + size_t(r) * Cin;
                    const S* gr = self.grad.data() + size_t(r) * Cout;
                    for (int i = 0; i < Cin; ++i) {
                        const S xi = xr[i];
                        S* dw = pw.grad.data() + size_t(i) * Cout;
                        for (int j = 0; j < Cout; ++j) dw[j] += xi * gr[j];
                    }
                }
            }
            if (pb.requires_grad)
                for (int r = 0; r < R; ++r) {
                    const S* gr = self.grad.data() + size_t(r) * Cout;
                    for (int j = 0; j < Cout; ++j) pb.grad[size_t(j)] += gr[j];
                }
        };
    return TensorT<S>(n);
}

namespace detail {

template <class S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW,
            S* col) {
    // col is [C*kh*kw, OH*OW]
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                S* dst = col + (size_t(c) * kh * kw + size_t(dy) * kw + dx) * OH * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + dy - pad;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < OW; ++ox) dst[size_t(oy) * OW + ox] = S(0);
                        continue;
                    }
                    const S* src = x + (size_t(c) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + dx - pad;
                        dst[size_t(oy) * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
                    }
                }
            }
}

template <class S>
void col2im_acc(const S* col, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
                int OW, S* x) {
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                const S* src = col + (size_t(c) * kh * kw + size_t(dy) * kw + dx) * OH * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + dy - pad;
                    if (iy < 0 || iy >= H) continue;
                    S* dst = x + (size_t(c) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + dx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[size_t(oy) * OW + ox];
                    }
                }
            }
}

} // namespace detail

// Direct convolution, zero padding. x[N,Cin,H,W], w[Cout,Cin,kh,kw], b[Cout].
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, int stride = 1,
                  int pad = 1) {
    if (x.shape().size() != 4 || w.shape().size() != 4)
        throw TensorError("conv2d: want 4-d input and weight, got " + shape_str(x.shape()) +
                          " and " + shape_str(w.shape()));
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Cin)
        throw TensorError("conv2d: weight " + shape_str(w.shape()) + " vs input " +
                          shape_str(x.shape()));
    if (b.shape() != Shape{Cout}) throw TensorError("conv2d: bias " + shape_str(b.shape()));
    if (stride < 1) throw TensorError("conv2d: stride must be >= 1");
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    if (OH <= 0 || OW <= 0) throw TensorError("conv2d: empty output for input " + shape_str(x.shape()));
    const int K = Cin * kh * kw;
    const int P = OH * OW;

    auto n = detail::make_node<S>({N, Cout, OH, OW}, {x.node(), w.node(), b.node()});
    std::vector<S> col(size_t(K) * P);
    for (int bn = 0; bn < N; ++bn) {
        detail::im2col(x.data().data() + size_t(bn) * Cin * H * W, Cin, H, W, kh, kw, stride, pad,
                       OH, OW, col.data());
        S* out = n->value.data() + size_t(bn) * Cout * P;
        for (int c = 0; c < Cout; ++c) {
            const S bv = b.data()[size_t(c)];
            S* row = out + size_t(c) * P;
            for (int p = 0; p < P; ++p) row[p] = bv;
        }
        detail::gemm_acc(out, w.data().data(), col.data(), Cout, K, P);
    }
    if (n->requires_grad)
        n->backward_fn = [N, Cin, H, W, Cout, kh, kw, stride, pad, OH, OW, K, P](NodeT<S>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            auto& pb = *self.parents[2];
            std::vector<S> col(size_t(K) * P);
            std::vector<S> colt;
            std::vector<S> wt;
            std::vector<S> dcol(size_t(K) * P);
            if (px.requires_grad) detail::transpose(wt, pw.value.data(), Cout, K);
            for (int bn = 0; bn < N; ++bn) {
                const S* g = self.grad.data() + size_t(bn) * Cout * P;
                if (pw.requires_grad || px.requires_grad)
                    detail::im2col(px.value.data() + size_t(bn) * Cin * H * W, Cin, H, W, kh, kw,
                                   stride, pad, OH, OW, col.data());
                if (pw.requires_grad) {
                    detail::transpose(colt, col.data(), K, P);
                    detail::gemm_acc(pw.grad.data(), g, colt.data(), Cout, P, K);
                }
                if (pb.requires_grad)
                    for (int c = 0; c < Cout; ++c) {
                        S acc = S(0);
                        const S* row = g + size_t(c) * P;
                        for (int p = 0; p < P; ++p) acc += row[p];
                        pb.grad[size_t(c)] += acc;
                    }
                if (px.requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), S(0));
                    detail::gemm_acc(dcol.data(), wt.data(), g, K, Cout, P);
                    detail::col2im_acc(dcol.data(), Cin, H, W, kh, kw, stride, pad, OH, OW,
                                       px.grad.data() + size_t(bn) * Cin * H * W);
                }
            }
        };
    return TensorT<S>(n);
}

// ---- normalizations ----------------------------------------------------------

// GroupNorm over [N,C,H,W]; gamma/beta are per channel.
template <class S>
TensorT<S> group_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      int groups, S eps = S(1e-5)) {
    if (x.shape().size() != 4) throw TensorError("group_norm: want 4-d, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (groups < 1 || C % groups != 0)
        throw TensorError("group_norm: C=" + std::to_string(C) + " not divisible by groups=" +
                          std::to_string(groups));
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw TensorError("group_norm: affine params must be [C]");
    const int cper = C / groups;
    const size_t plane = size_t(H) * W;
    const size_t gsize = size_t(cper) * plane;

    auto n = detail::make_node<S>(x.shape(), {x.node(), gamma.node(), beta.node()});
    std::vector<S> inv_sigma(size_t(N) * groups);
    std::vector<S> mean_g(size_t(N) * groups);
    const auto& xv = x.data();
    for (int bn = 0; bn < N; ++bn)
        for (int g = 0; g < groups; ++g) {
            const S* src = xv.data() + (size_t(bn) * C + size_t(g) * cper) * plane;
            S mu = S(0);
            for (size_t i = 0; i < gsize; ++i) mu += src[i];
            mu /= S(gsize);
            S var = S(0);
            for (size_t i = 0; i < gsize; ++i) {
                const S d = src[i] - mu;
                var += d * d;
            }
            var /= S(gsize);
            const S is = S(1) / std::sqrt(var + eps);
            inv_sigma[size_t(bn) * groups + g] = is;
            mean_g[size_t(bn) * groups + g] = mu;
            S* dst = n->value.data() + (size_t(bn) * C + size_t(g) * cper) * plane;
            for (int c = 0; c < cper; ++c) {
                const S ga = gamma.data()[size_t(g) * cper + c];
                const S be = beta.data()[size_t(g) * cper + c];
                for (size_t i = 0; i < plane; ++i)
                    dst[size_t(c) * plane + i] = (src[size_t(c) * plane + i] - mu) * is * ga + be;
            }
        }
    if (n->requires_grad)
        n->backward_fn = [N, C, groups, cper, plane, gsize, inv_sigma, mean_g](NodeT<S>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            for (int bn = 0; bn < N; ++bn)
                for (int g = 0; g < groups; ++g) {
                    const S is = inv_sigma[size_t(bn) * groups + g];
                    const S mu = mean_g[size_t(bn) * groups + g];
                    const S* xg = px.value.data() + (size_t(bn) * C + size_t(g) * cper) * plane;
                    const S* gy = self.grad.data() + (size_t(bn) * C + size_t(g) * cper) * plane;
                    if (pg.requires_grad || pb.requires_grad)
                        for (int c = 0; c < cper; ++c) {
                            S dga = S(0), dbe = S(0);
                            for (size_t i = 0; i < plane; ++i) {
                                const S xh = (xg[size_t(c) * plane + i] - mu) * is;
                                dga += gy[size_t(c) * plane + i] * xh;
                                dbe += gy[size_t(c) * plane + i];
                            }
                            if (pg.requires_grad) pg.grad[size_t(g) * cper + c] += dga;
                            if (pb.requires_grad) pb.grad[size_t(g) * cper + c] += dbe;
                        }
                    if (px.requires_grad) {
                        // dxhat = gy * gamma; dx = is*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                        S m1 = S(0), m2 = S(0);
                        for (int c = 0; c < cper; ++c) {
                            const S ga = pg.value[size_t(g) * cper + c];
                            for (size_t i = 0; i < plane; ++i) {
                                const S dxh = gy[size_t(c) * plane + i] * ga;
                                const S xh = (xg[size_t(c) * plane + i] - mu) * is;
                                m1 += dxh;
                                m2 += dxh * xh;
                            }
                        }
                        m1 /= S(gsize);
                        m2 /= S(gsize);
                        S* dx = px.grad.data() + (size_t(bn) * C + size_t(g) * cper) * plane;
                        for (int c = 0; c < cper; ++c) {
                            const S ga = pg.value[size_t(g) * cper + c];
                            for (size_t i = 0; i < plane; ++i) {
                                const S dxh = gy[size_t(c) * plane + i] * ga;
                                const S xh = (xg[size_t(c) * plane + i] - mu) * is;
                                dx[size_t(c) * plane + i] += is * (dxh - m1 - xh * m2);
                            }
                        }
                    }
                }
        };
    return TensorT<S>(n);
}

// LayerNorm over the last dim of a 2-d or 3-d tensor.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      S eps = S(1e-5)) {
    const auto& xs = x.shape();
    if (xs.size() < 2) throw TensorError("layer_norm: want >= 2-d, got " + shape_str(xs));
    const int C = xs.back();
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw TensorError("layer_norm: affine params must match last dim");
    const int R = int(x.numel()) / C;
    auto n = detail::make_node<S>(xs, {x.node(), gamma.node(), beta.node()});
    std::vector<S> inv_sigma(size_t(R)), mean_r(size_t(R));
    const auto& xv = x.data();
    for (int r = 0; r < R; ++r) {
        const S* src = xv.data() + size_t(r) * C;
        S mu = S(0);
        for (int i = 0; i < C; ++i) mu += src[i];
        mu /= S(C);
        S var = S(0);
        for (int i = 0; i < C; ++i) {
            const S d = src[i] - mu;
            var += d * d;
        }
        var /= S(C);
        const S is = S(1) / std::sqrt(var + eps);
        inv_sigma[size_t(r)] = is;
        mean_r[size_t(r)] = mu;
        S* dst = n->value.data() + size_t(r) * C;
        for (int i = 0; i < C; ++i)
            dst[i] = (src[i] - mu) * is * gamma.data()[size_t(i)] + beta.data()[size_t(i)];
    }
    if (n->requires_grad)
        n->backward_fn = [R, C, inv_sigma, mean_r](NodeT<S>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            for (int r = 0; r < R; ++r) {
                const S is = inv_sigma[size_t(r)];
                const S mu = mean_r[size_t(r)];
                const S* xr = px.value.data() + size_t(r) * C;
                const S* gy = self.grad.data() + size_t(r) * C;
                if (pg.requires_grad || pb.requires_grad)
                    for (int i = 0; i < C; ++i) {
                        const S xh = (xr[i] - mu) * is;
                        if (pg.requires_grad) pg.grad[size_t(i)] += gy[i] * xh;
                        if (pb.requires_grad) pb.grad[size_t(i)] += gy[i];
                    }
                if (px.requires_grad) {
                    S m1 = S(0), m2 = S(0);
                    for (int i = 0; i < C; ++i) {
                        const S dxh = gy[i] * pg.value[size_t(i)];
                        const S xh = (xr[i] - mu) * is;
                        m1 += dxh;
                        m2 += dxh * xh;
                    }
                    m1 /= S(C);
                    m2 /= S(C);
                    S* dx = px.grad.data() + size_t(r) * C;
                    for (int i = 0; i < C; ++i) {
                        const S dxh = gy[i] * pg.value[size_t(i)];
                        const S xh = (xr[i] - mu) * is;
                        dx[i] += is * (dxh - m1 - xh * m2);
                    }
                }
            }
        };
    return TensorT<S>(n);
}

// Softmax over the last dim.
template <class S>
TensorT<S> softmax_last(const TensorT<S>& x) {
    const auto& xs = x.shape();
    if (xs.size() < 2) throw TensorError("softmax_last: want >= 2-d, got " + shape_str(xs));
    const int C = xs.back();
    const int R = int(x.numel()) / C;
    auto n = detail::make_node<S>(xs, {x.node()});
    const auto& xv = x.data();
    for (int r = 0; r < R; ++r) {
        const S* src = xv.data() + size_t(r) * C;
        S* dst = n->value.data() + size_t(r) * C;
        S mx = src[0];
        for (int i = 1; i < C; ++i) mx = std::max(mx, src[i]);
        S sum = S(0);
        for (int i = 0; i < C; ++i) {
            dst[i] = std::exp(src[i] - mx);
            sum += dst[i];
        }
        const S inv = S(1) / sum;
        for (int i = 0; i < C; ++i) dst[i] *= inv;
    }
    if (n->requires_grad)
        n->backward_fn = [R, C](NodeT<S>& self) {
            auto& px = *self.parents[0];
            for (int r = 0; r < R; ++r) {
                const S* y = self.value.data() + size_t(r) * C;
                const S* gy = self.grad.data() + size_t(r) * C;
                S dotv = S(0);
                for (int i = 0; i < C; ++i) dotv += gy[i] * y[i];
                S* dx = px.grad.data() + size_t(r) * C;
                for (int i = 0; i < C; ++i) dx[i] += (gy[i] - dotv) * y[i];
            }
        };
    return TensorT<S>(n);
}

// ---- embeddings and broadcasts -------------------------------------------------

// Rows of `table` gathered by `ids`; out[N, k, D] for ids laid out [N, k].
template <class S>
TensorT<S> embedding(const TensorT<S>& table, const std::vector<int>& ids, int N, int k) {
    if (table.shape().size() != 2) throw TensorError("embedding: table must be 2-d");
    if (int(ids.size()) != N * k) throw TensorError("embedding: ids size != N*k");
    const int V = table.dim(0), D = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= V)
            throw TensorError("embedding: id " + std::to_string(id) + " outside vocab " +
                              std::to_string(V));
    auto n = detail::make_node<S>({N, k, D}, {table.node()});
    for (int r = 0; r < N * k; ++r)
        std::copy_n(table.data().data() + size_t(ids[size_t(r)]) * D, D,
                    n->value.data() + size_t(r) * D);
    if (n->requires_grad)
        n->backward_fn = [ids, D](NodeT<S>& self) {
            auto& pt = *self.parents[0];
            for (size_t r = 0; r < ids.size(); ++r) {
                S* dst = pt.grad.data() + size_t(ids[r]) * D;
                const S* src = self.grad.data() + r * D;
                for (int i = 0; i < D; ++i) dst[i] += src[i];
            }
        };
    return TensorT<S>(n);
}

// x[N,C,H,W] + e[N,C] broadcast over the plane.
template <class S>
TensorT<S> add_time(const TensorT<S>& x, const TensorT<S>& e) {
    if (x.shape().size() != 4 || e.shape().size() != 2 || x.dim(0) != e.dim(0) ||
        x.dim(1) != e.dim(1))
        throw TensorError("add_time: incompatible " + shape_str(x.shape()) + " + " +
                          shape_str(e.shape()));
    const int N = x.dim(0), C = x.dim(1);
    const size_t plane = size_t(x.dim(2)) * x.dim(3);
    auto n = detail::make_node<S>(x.shape(), {x.node(), e.node()});
    const auto& xv = x.data();
    for (int bn = 0; bn < N; ++bn)
        for (int c = 0; c < C; ++c) {
            const S ev = e.data()[size_t(bn) * C + c];
            const S* src = xv.data() + (size_t(bn) * C + c) * plane;
            S* dst = n->value.data() + (size_t(bn) * C + c) * plane;
            for (size_t i = 0; i < plane; ++i) dst[i] = src[i] + ev;
        }
    if (n->requires_grad)
        n->backward_fn = [N, C, plane](NodeT<S>& self) {
            auto& px = *self.parents[0];
            auto& pe = *self.parents[1];
            if (px.requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
            if (pe.requires_grad)
                for (int bn = 0; bn < N; ++bn)
                    for (int c = 0; c < C; ++c) {
                        const S* g = self.grad.data() + (size_t(bn) * C + c) * plane;
                        S acc = S(0);
                        for (size_t i = 0; i < plane; ++i) acc += g[i];
                        pe.grad[size_t(bn) * C + c] += acc;
                    }
        };
    return TensorT<S>(n);
}

// ---- reductions -----------------------------------------------------------------

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
    auto n = detail::make_node<S>({1}, {x.node()});
    S acc = S(0);
    for (S v : x.data()) acc += v;
    n->value[0] = acc;
    if (n->requires_grad)
        n->backward_fn = [](NodeT<S>& self) {
            auto& px = *self.parents[0];
            const S g = self.grad[0];
            for (auto& v : px.grad) v += g;
        };
    return TensorT<S>(n);
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& x) {
    return scale(sum_all(x), S(1) / S(x.numel()));
}

template <class S>
TensorT<S> mse(const TensorT<S>& a, const TensorT<S>& b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

// ---- driver ---------------------------------------------------------------------

template <class S>
void backward(const TensorT<S>& loss) {
    if (loss.numel() != 1)
        throw TensorError("backward: output must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        throw TensorError("backward: output does not depend on any parameter");

    // Iterative post-order DFS; visits each reachable node once.
    std::vector<NodeT<S>*> topo;
    std::vector<std::pair<NodeT<S>*, size_t>> stack;
    std::vector<NodeT<S>*> seen;
    auto visited = [&](NodeT<S>* p) {
        return std::find(seen.begin(), seen.end(), p) != seen.end();
    };
    stack.push_back({loss.node().get(), 0});
    seen.push_back(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            NodeT<S>* p = node->parents[idx++].get();
            if (p->requires_grad && !visited(p)) {
                seen.push_back(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    for (NodeT<S>* node : topo) node->grad.assign(node->numel(), S(0));
    loss.node()->grad[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// Max relative error between analytic and central-difference gradients over
// the given leaves. `fn` must rebuild the graph from the leaves each call.
// With max_probes_per_leaf < 0 every element is probed; otherwise a random
// subset per leaf, which keeps large models inside a time budget while still
// touching every parameter tensor.
template <class S>
S grad_check(const std::function<TensorT<S>()>& fn, const std::vector<TensorT<S>>& leaves, S eps,
             int max_probes_per_leaf = -1, Rng* rng = nullptr) {
    TensorT<S> y = fn();
    if (y.numel() != 1) throw TensorError("grad_check: fn must return a scalar");
    backward(y);
    std::vector<std::vector<S>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) {
        if (!l.requires_grad()) throw TensorError("grad_check: leaf without requires_grad");
        if (l.grad().size() != l.numel())
            throw TensorError("grad_check: no gradient reached leaf '" + l.name() + "'");
        analytic.push_back(l.grad());
    }
    S worst = S(0);
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = const_cast<TensorT<S>&>(leaves[li]);
        const size_t n = leaf.numel();
        std::vector<size_t> probes;
        if (max_probes_per_leaf < 0 || size_t(max_probes_per_leaf) >= n) {
            probes.resize(n);
            std::iota(probes.begin(), probes.end(), size_t(0));
        } else {
            if (!rng) throw TensorError("grad_check: probe subset needs an rng");
            for (int i = 0; i < max_probes_per_leaf; ++i)
                probes.push_back(size_t(rng->next_below(n)));
            std::sort(probes.begin(), probes.end());
            probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
        }
        for (size_t idx : probes) {
            const S saved = leaf.data()[idx];
            leaf.data()[idx] = saved + eps;
            const S yp = fn().data()[0];
            leaf.data()[idx] = saved - eps;
            const S ym = fn().data()[0];
            leaf.data()[idx] = saved;
            const S numeric = (yp - ym) / (S(2) * eps);
            const S a = analytic[li][idx];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw TensorError("grad_check: non-finite gradient at leaf '" + leaf.name() + "'");
            const S err = std::abs(a - numeric) / std::max(S(1), std::abs(a));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// ---- optimizer --------------------------------------------------------------------

inline constexpr double kDefaultLearningRate = 3e-5;

template <class S>
class AdamT {
public:
    struct Hyper {
        S lr = S(kDefaultLearningRate);
        S beta1 = S(0.9);
        S beta2 = S(0.999);
        S eps = S(1e-8);
    };

    explicit AdamT(std::vector<TensorT<S>> params) : params_(std::move(params)) {
        for (const auto& p : params_) {
            if (!p.requires_grad()) throw TensorError("adam: parameter without requires_grad");
            m_.emplace_back(p.numel(), S(0));
            v_.emplace_back(p.numel(), S(0));
        }
    }

    void step(const Hyper& h) {
        ++t_;
        const S bc1 = S(1) - std::pow(h.beta1, S(t_));
        const S bc2 = S(1) - std::pow(h.beta2, S(t_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            if (p.grad().size() != p.numel())
                throw TensorError("adam: no gradient for '" + p.name() + "'");
            auto& m = m_[pi];
            auto& v = v_[pi];
            auto& val = p.data();
            const auto& g = p.grad();
            for (size_t i = 0; i < val.size(); ++i) {
                if (!std::isfinite(g[i]))
                    throw TrainError("adam: non-finite gradient in '" + p.name() + "'");
                m[i] = h.beta1 * m[i] + (S(1) - h.beta1) * g[i];
                v[i] = h.beta2 * v[i] + (S(1) - h.beta2) * g[i] * g[i];
                const S mhat = m[i] / bc1;
                const S vhat = v[i] / bc2;
                val[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
            }
        }
    }

    int64_t steps_taken() const { return t_; }
    const std::vector<TensorT<S>>& params() const { return params_; }

private:
    std::vector<TensorT<S>> params_;
    std::vector<std::vector<S>> m_, v_;
    int64_t t_ = 0;
};

using Adam = AdamT<float>;

} // namespace pbrgen
