#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace fedjscc {

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using NodeId = int;

enum class OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,     // alpha * x
    MatMul,    // (m,k) x (k,n)
    Conv2d,    // HWC input, (kh,kw,cin,cout) weight
    BiasAddC,  // add per-channel bias over an HWC map
    Mean,
    Sum,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Concat,    // along last axis
    Reshape,
    Broadcast, // scalar -> shape
    Clamp01,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::MatMul: return "matmul";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::BiasAddC: return "bias_add";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Concat: return "concat";
        case OpKind::Reshape: return "reshape";
        case OpKind::Broadcast: return "broadcast";
        case OpKind::Clamp01: return "clamp01";
    }
    return "?";
}

// Reverse-mode tape. Nodes are appended in evaluation order (define-by-run),
// so the tape itself is the topological order. Values are computed eagerly at
// build time; backward() walks the tape in reverse.
class Graph {
  public:
    struct Node {
        OpKind op;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;          // allocated lazily in backward
        bool requires_grad = false;
        bool trainable = false;
        std::string name;     // leaves only
        double alpha = 0.0;   // Scale
        int stride = 1;       // Conv2d
        int pad = 0;          // Conv2d
    };

    NodeId leaf(Tensor value, bool trainable = false, std::string name = {}) {
        Node n;
        n.op = OpKind::Leaf;
        n.value = std::move(value);
        n.trainable = trainable;
        n.requires_grad = trainable;
        n.name = std::move(name);
        return push(std::move(n));
    }

    NodeId constant(Tensor value) { return leaf(std::move(value), false); }
    NodeId constant(double v) { return leaf(Tensor::scalar(v), false); }

    NodeId add(NodeId a, NodeId b) { return ew_binary(OpKind::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return ew_binary(OpKind::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return ew_binary(OpKind::Mul, a, b); }

    NodeId scale(NodeId a, double alpha) {
        Node n = unary(OpKind::Scale, a);
        n.alpha = alpha;
        n.value = at(a).value;
        for (auto& v : n.value.data) v *= alpha;
        return push(std::move(n));
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = at(a).value;
        const Tensor& B = at(b).value;
        if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
            fail("matmul", a, b);
        std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
        Node n = binary(OpKind::MatMul, a, b);
        n.value = Tensor({m, p});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
                double av = A.data[i * k + l];
                if (av == 0.0) continue;
                const double* brow = &B.data[l * p];
                double* crow = &n.value.data[i * p];
                for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
            }
        return push(std::move(n));
    }

    // x: (h,w,cin), w: (kh,kw,cin,cout); zero padding `pad`, stride `stride`.
    NodeId conv2d(NodeId x, NodeId w, int stride = 1, int pad = -1) {
        const Tensor& X = at(x).value;
        const Tensor& W = at(w).value;
        if (X.rank() != 3 || W.rank() != 4 || X.shape[2] != W.shape[2])
            fail("conv2d", x, w);
        int kh = (int)W.shape[0], kw = (int)W.shape[1];
        if (pad < 0) pad = kh / 2;
        int h = (int)X.shape[0], wd = (int)X.shape[1];
        int cin = (int)X.shape[2], cout = (int)W.shape[3];
        int oh = (h + 2 * pad - kh) / stride + 1;
        int ow = (wd + 2 * pad - kw) / stride + 1;
        if (oh <= 0 || ow <= 0) fail("conv2d", x, w);
        Node n = binary(OpKind::Conv2d, x, w);
        n.stride = stride;
        n.pad = pad;
        n.value = Tensor({(std::size_t)oh, (std::size_t)ow, (std::size_t)cout});
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= wd) continue;
                        const double* xin = &X.data[((std::size_t)iy * wd + ix) * cin];
                        const double* wrow = &W.data[(((std::size_t)ky * kw + kx) * cin) * cout];
                        double* out = &n.value.data[((std::size_t)oy * ow + ox) * cout];
                        for (int ci = 0; ci < cin; ++ci) {
                            double xv = xin[ci];
                            const double* wl = wrow + (std::size_t)ci * cout;
                            for (int co = 0; co < cout; ++co) out[co] += xv * wl[co];
                        }
                    }
                }
        return push(std::move(n));
    }

    NodeId bias_add(NodeId x, NodeId b) {
        const Tensor& X = at(x).value;
        const Tensor& B = at(b).value;
        if (X.rank() != 3 || B.rank() != 1 || X.shape[2] != B.shape[0])
            fail("bias_add", x, b);
        Node n = binary(OpKind::BiasAddC, x, b);
        n.value = X;
        std::size_t c = B.shape[0];
        for (std::size_t i = 0; i < n.value.data.size(); ++i)
            n.value.data[i] += B.data[i % c];
        return push(std::move(n));
    }

    NodeId mean(NodeId a) {
        Node n = unary(OpKind::Mean, a);
        const Tensor& A = at(a).value;
        double s = 0;
        for (double v : A.data) s += v;
        n.value = Tensor::scalar(s / (double)A.numel());
        return push(std::move(n));
    }

    NodeId sum(NodeId a) {
        Node n = unary(OpKind::Sum, a);
        const Tensor& A = at(a).value;
        double s = 0;
        for (double v : A.data) s += v;
        n.value = Tensor::scalar(s);
        return push(std::move(n));
    }

    NodeId exp_(NodeId a) { return map(OpKind::Exp, a, [](double v) { return std::exp(v); }); }
    NodeId log_(NodeId a) { return map(OpKind::Log, a, [](double v) { return std::log(v); }); }
    NodeId sigmoid(NodeId a) {
        return map(OpKind::Sigmoid, a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }
    NodeId tanh_(NodeId a) { return map(OpKind::Tanh, a, [](double v) { return std::tanh(v); }); }

    NodeId clamp01(NodeId a) {
        return map(OpKind::Clamp01, a,
                   [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); });
    }

    // Concatenate along the last axis; leading axes must agree.
    NodeId concat(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw GraphError("concat: no inputs");
        const Tensor& first = at(parts[0]).value;
        std::size_t rank = first.rank();
        if (rank == 0) throw GraphError("concat: scalar input");
        std::size_t rows = 1;
        for (std::size_t i = 0; i + 1 < rank; ++i) rows *= first.shape[i];
        std::size_t total_last = 0;
        for (NodeId p : parts) {
            const Tensor& t = at(p).value;
            if (t.rank() != rank) fail("concat", parts[0], p);
            for (std::size_t i = 0; i + 1 < rank; ++i)
                if (t.shape[i] != first.shape[i]) fail("concat", parts[0], p);
            total_last += t.shape[rank - 1];
        }
        Node n;
        n.op = OpKind::Concat;
        n.inputs = parts;
        for (NodeId p : parts) n.requires_grad |= at(p).requires_grad;
        std::vector<std::size_t> shape(first.shape.begin(), first.shape.end());
        shape[rank - 1] = total_last;
        n.value = Tensor(shape);
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t off = 0;
            for (NodeId p : parts) {
                const Tensor& t = at(p).value;
                std::size_t last = t.shape[rank - 1];
                for (std::size_t j = 0; j < last; ++j)
                    n.value.data[r * total_last + off + j] = t.data[r * last + j];
                off += last;
            }
        }
        return push(std::move(n));
    }

    NodeId reshape(NodeId a, std::vector<std::size_t> shape) {
        const Tensor& A = at(a).value;
        if (Tensor::numel_of(shape) != A.numel()) fail("reshape", a, a);
        Node n = unary(OpKind::Reshape, a);
        n.value = Tensor(std::move(shape), A.data);
        return push(std::move(n));
    }

    NodeId broadcast(NodeId a, std::vector<std::size_t> shape) {
        const Tensor& A = at(a).value;
        if (A.numel() != 1) fail("broadcast", a, a);
        Node n = unary(OpKind::Broadcast, a);
        n.value = Tensor::full(std::move(shape), A.data[0]);
        return push(std::move(n));
    }

    const Tensor& value(NodeId id) const { return at(id).value; }

    const Tensor& grad(NodeId id) const {
        const Node& n = at(id);
        if (!ran_backward_) throw GraphError("grad() before backward()");
        if (!n.requires_grad)
            throw GraphError(std::string("no gradient on non-trainable node '") +
                             op_name(n.op) + "'");
        return n.grad;
    }

    bool has_grad(NodeId id) const { return at(id).requires_grad && ran_backward_; }

    void backward(NodeId loss) {
        Node& l = at(loss);
        if (l.value.numel() != 1)
            throw GraphError("backward: loss must be scalar, got " + l.value.shape_str());
        for (auto& n : nodes_)
            if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape);
        l.grad = Tensor(l.value.shape, {1.0});
        l.requires_grad = true;
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || n.grad.numel() == 0) continue;
            backprop(n);
        }
        ran_backward_ = true;
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    Node& at(NodeId id) {
        if (id < 0 || (std::size_t)id >= nodes_.size()) throw GraphError("bad node id");
        return nodes_[id];
    }
    const Node& at(NodeId id) const { return const_cast<Graph*>(this)->at(id); }

    [[noreturn]] void fail(const char* op, NodeId a, NodeId b) const {
        throw GraphError(std::string(op) + ": shape mismatch " + at(a).value.shape_str() +
                         " vs " + at(b).value.shape_str());
    }

    Node unary(OpKind op, NodeId a) {
        Node n;
        n.op = op;
        n.inputs = {a};
        n.requires_grad = at(a).requires_grad;
        return n;
    }

    Node binary(OpKind op, NodeId a, NodeId b) {
        Node n;
        n.op = op;
        n.inputs = {a, b};
        n.requires_grad = at(a).requires_grad || at(b).requires_grad;
        return n;
    }

    NodeId ew_binary(OpKind op, NodeId a, NodeId b) {
        const Tensor& A = at(a).value;
        const Tensor& B = at(b).value;
        if (!A.same_shape(B)) fail(op_name(op), a, b);
        Node n = binary(op, a, b);
        n.value = Tensor(A.shape);
        for (std::size_t i = 0; i < A.data.size(); ++i) {
            double x = A.data[i], y = B.data[i];
            n.value.data[i] = op == OpKind::Add ? x + y : op == OpKind::Sub ? x - y : x * y;
        }
        return push(std::move(n));
    }

    template <class F>
    NodeId map(OpKind op, NodeId a, F f) {
        Node n = unary(op, a);
        n.value = at(a).value;
        for (auto& v : n.value.data) v = f(v);
        return push(std::move(n));
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return (NodeId)nodes_.size() - 1;
    }

    void backprop(Node& n) {
        const Tensor& g = n.grad;
        auto acc = [&](NodeId id, std::size_t i, double v) {
            Node& in = nodes_[id];
            if (in.requires_grad) in.grad.data[i] += v;
        };
        switch (n.op) {
            case OpKind::Leaf:
                break;
            case OpKind::Add:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    acc(n.inputs[0], i, g.data[i]);
                    acc(n.inputs[1], i, g.data[i]);
                }
                break;
            case OpKind::Sub:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    acc(n.inputs[0], i, g.data[i]);
                    acc(n.inputs[1], i, -g.data[i]);
                }
                break;
            case OpKind::Mul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    acc(n.inputs[0], i, g.data[i] * B.data[i]);
                    acc(n.inputs[1], i, g.data[i] * A.data[i]);
                }
                break;
            }
            case OpKind::Scale:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    acc(n.inputs[0], i, n.alpha * g.data[i]);
                break;
            case OpKind::MatMul: {
                Node& a = nodes_[n.inputs[0]];
                Node& b = nodes_[n.inputs[1]];
                std::size_t m = a.value.shape[0], k = a.value.shape[1], p = b.value.shape[1];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t l = 0; l < k; ++l) {
                            double s = 0;
                            const double* grow = &g.data[i * p];
                            const double* brow = &b.value.data[l * p];
                            for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
                            a.grad.data[i * k + l] += s;
                        }
                if (b.requires_grad)
                    for (std::size_t l = 0; l < k; ++l)
                        for (std::size_t i = 0; i < m; ++i) {
                            double av = a.value.data[i * k + l];
                            if (av == 0.0) continue;
                            const double* grow = &g.data[i * p];
                            double* brow = &b.grad.data[l * p];
                            for (std::size_t j = 0; j < p; ++j) brow[j] += av * grow[j];
                        }
                break;
            }
            case OpKind::Conv2d: {
                Node& x = nodes_[n.inputs[0]];
                Node& w = nodes_[n.inputs[1]];
                int kh = (int)w.value.shape[0], kw = (int)w.value.shape[1];
                int cin = (int)w.value.shape[2], cout = (int)w.value.shape[3];
                int h = (int)x.value.shape[0], wd = (int)x.value.shape[1];
                int oh = (int)n.value.shape[0], ow = (int)n.value.shape[1];
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox)
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = oy * n.stride + ky - n.pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ix = ox * n.stride + kx - n.pad;
                                if (ix < 0 || ix >= wd) continue;
                                const double* gout = &g.data[((std::size_t)oy * ow + ox) * cout];
                                std::size_t xoff = ((std::size_t)iy * wd + ix) * cin;
                                std::size_t woff = ((std::size_t)ky * kw + kx) * cin * cout;
                                for (int ci = 0; ci < cin; ++ci) {
                                    double xv = x.value.data[xoff + ci];
                                    const double* wl = &w.value.data[woff + (std::size_t)ci * cout];
                                    if (x.requires_grad) {
                                        double s = 0;
                                        for (int co = 0; co < cout; ++co) s += gout[co] * wl[co];
                                        x.grad.data[xoff + ci] += s;
                                    }
                                    if (w.requires_grad) {
                                        double* wg = &w.grad.data[woff + (std::size_t)ci * cout];
                                        for (int co = 0; co < cout; ++co) wg[co] += xv * gout[co];
                                    }
                                }
                            }
                        }
                break;
            }
            case OpKind::BiasAddC: {
                Node& b = nodes_[n.inputs[1]];
                std::size_t c = b.value.shape[0];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    acc(n.inputs[0], i, g.data[i]);
                    if (b.requires_grad) b.grad.data[i % c] += g.data[i];
                }
                break;
            }
            case OpKind::Mean: {
                Node& a = nodes_[n.inputs[0]];
                double gv = g.data[0] / (double)a.value.numel();
                if (a.requires_grad)
                    for (auto& v : a.grad.data) v += gv;
                break;
            }
            case OpKind::Sum: {
                Node& a = nodes_[n.inputs[0]];
                if (a.requires_grad)
                    for (auto& v : a.grad.data) v += g.data[0];
                break;
            }
            case OpKind::Exp:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    acc(n.inputs[0], i, g.data[i] * n.value.data[i]);
                break;
            case OpKind::Log: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    acc(n.inputs[0], i, g.data[i] / A.data[i]);
                break;
            }
            case OpKind::Sigmoid:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    double s = n.value.data[i];
                    acc(n.inputs[0], i, g.data[i] * s * (1.0 - s));
                }
                break;
            case OpKind::Tanh:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    double t = n.value.data[i];
                    acc(n.inputs[0], i, g.data[i] * (1.0 - t * t));
                }
                break;
            case OpKind::Clamp01: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (A.data[i] > 0.0 && A.data[i] < 1.0)
                        acc(n.inputs[0], i, g.data[i]);
                break;
            }
            case OpKind::Concat: {
                std::size_t rank = n.value.rank();
                std::size_t rows = 1;
                for (std::size_t i = 0; i + 1 < rank; ++i) rows *= n.value.shape[i];
                std::size_t total_last = n.value.shape[rank - 1];
                for (std::size_t r = 0; r < rows; ++r) {
                    std::size_t off = 0;
                    for (NodeId p : n.inputs) {
                        Node& in = nodes_[p];
                        std::size_t last = in.value.shape[rank - 1];
                        if (in.requires_grad)
                            for (std::size_t j = 0; j < last; ++j)
                                in.grad.data[r * last + j] += g.data[r * total_last + off + j];
                        off += last;
                    }
                }
                break;
            }
            case OpKind::Reshape:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    acc(n.inputs[0], i, g.data[i]);
                break;
            case OpKind::Broadcast: {
                Node& a = nodes_[n.inputs[0]];
                if (a.requires_grad) {
                    double s = 0;
                    for (double v : g.data) s += v;
                    a.grad.data[0] += s;
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// x / rms(x): output has unit mean squared magnitude, direction preserved.
inline NodeId power_normalize_node(Graph& g, NodeId x) {
    // copy: node storage may reallocate as ops are pushed
    std::vector<std::size_t> shape = g.value(x).shape;
    double ms = g.value(x).sq_norm() / (double)g.value(x).numel();
    if (ms == 0.0) throw GraphError("power_normalize: degenerate all-zero signal");
    NodeId msq = g.mean(g.mul(x, x));
    NodeId inv_rms = g.exp_(g.scale(g.log_(msq), -0.5));
    return g.mul(x, g.broadcast(inv_rms, shape));
}

// x / ||x||_2 (unit L2 norm), for contrastive embeddings.
inline NodeId l2_normalize_node(Graph& g, NodeId x) {
    std::vector<std::size_t> shape = g.value(x).shape;
    if (g.value(x).sq_norm() == 0.0) throw GraphError("l2_normalize: zero vector");
    NodeId sq = g.sum(g.mul(x, x));
    NodeId inv = g.exp_(g.scale(g.log_(sq), -0.5));
    return g.mul(x, g.broadcast(inv, shape));
}

}  // namespace fedjscc
