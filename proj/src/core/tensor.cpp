// Copyright 2026 The jferc Authors
// Reverse-mode differentiable tensor core
//
// Licensed under the Apache License, Version 2.0

#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace jferc {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

// NaN/Inf anywhere is a hard error surfaced at op boundaries.
void ensure_finite(const TensorNode& n, const char* op) {
    for (size_t i = 0; i < n.data.size(); ++i) {
        if (!std::isfinite(n.data[i])) {
            std::ostringstream os;
            os << op << ": non-finite value at flat index " << i << " of shape "
               << shape_str(n.shape);
            if (!n.name.empty()) os << " (tensor '" << n.name << "')";
            throw NumericError(os.str());
        }
    }
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

// Result node wiring: tape is recorded only when enabled and some input
// requires grad.
struct OpResult {
    std::shared_ptr<TensorNode> node;
    bool taped;
};

OpResult new_result(Shape shape, std::vector<double> data,
                    std::initializer_list<Tensor> inputs, const char* op) {
    auto n = make_node(std::move(shape), std::move(data));
    ensure_finite(*n, op);
    bool taped = false;
    if (g_grad_enabled) {
        for (const Tensor& t : inputs) {
            if (t.defined() && t.requires_grad()) { taped = true; break; }
        }
    }
    if (taped) {
        n->requires_grad = true;
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
    }
    return {n, taped};
}

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& TensorNode::grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    for (int64_t d : shape) {
        if (d < 0) throw ContractError("zeros: negative dimension in " + shape_str(shape));
    }
    auto n = make_node(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    ensure_finite(*t.node_, "full");
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ContractError("from_data: shape " + shape_str(shape) + " needs " +
                            std::to_string(shape_numel(shape)) + " values, got " +
                            std::to_string(data.size()));
    }
    auto n = make_node(std::move(shape), std::move(data));
    ensure_finite(*n, "from_data");
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) {
    return from_data({1}, {value});
}

std::span<const double> Tensor::grad() const {
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    auto& g = node_->grad_buffer();
    std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value: tensor of shape " + shape_str(shape()) + " is not a scalar");
    }
    return node_->data[0];
}

double Tensor::at(int64_t i) const { return node_->data[static_cast<size_t>(i)]; }

double Tensor::at(int64_t i, int64_t j) const {
    return node_->data[static_cast<size_t>(i * dim(1) + j)];
}

Tensor& Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
}

Tensor& Tensor::set_name(std::string name) {
    node_->name = std::move(name);
    return *this;
}

Tensor Tensor::clone() const {
    auto n = make_node(node_->shape, node_->data);
    n->requires_grad = node_->requires_grad;
    n->name = node_->name;
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw ContractError("backward: loss must be scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reverse gives topological order from loss.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            TensorNode* p = cur->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_defined(a, "add");
    check_defined(b, "add");
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto r = new_result(a.shape(), std::move(out), {a, b}, "add");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on]() {
            const auto& g = on->grad_buffer();
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_defined(a, "sub");
    check_defined(b, "sub");
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto r = new_result(a.shape(), std::move(out), {a, b}, "sub");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on]() {
            const auto& g = on->grad_buffer();
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_defined(a, "mul");
    check_defined(b, "mul");
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto r = new_result(a.shape(), std::move(out), {a, b}, "mul");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on]() {
            const auto& g = on->grad_buffer();
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor scale(const Tensor& a, double c) {
    check_defined(a, "scale");
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto r = new_result(a.shape(), std::move(out), {a}, "scale");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, on, c]() {
            const auto& g = on->grad_buffer();
            auto& ga = an->grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        };
    }
    return Tensor::wrap(r.node);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor gelu(const Tensor& a) {
    check_defined(a, "gelu");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    auto r = new_result(a.shape(), std::move(out), {a}, "gelu");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, on]() {
            const auto& g = on->grad_buffer();
            auto& ga = an->grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) {
                double x = an->data[i];
                double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[i] += g[i] * (cdf + x * pdf);
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor log_clamped(const Tensor& a, double floor, uint64_t* clamp_counter) {
    check_defined(a, "log_clamped");
    if (floor <= 0.0) throw ContractError("log_clamped: floor must be positive");
    std::vector<double> out(a.data().size());
    std::vector<double> clamped(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = a.data()[i];
        if (x < floor) {
            x = floor;
            if (clamp_counter) ++(*clamp_counter);
        }
        clamped[i] = x;
        out[i] = std::log(x);
    }
    auto r = new_result(a.shape(), std::move(out), {a}, "log_clamped");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* on = r.node.get();
        auto cl = std::make_shared<std::vector<double>>(std::move(clamped));
        r.node->backprop = [an, on, cl]() {
            const auto& g = on->grad_buffer();
            auto& ga = an->grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (*cl)[i];
        };
    }
    return Tensor::wrap(r.node);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace {

// C (m x n) += or = op(A) . op(B); row-major buffers, i-k-j loop order.
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k,
          bool trans_a, bool trans_b, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            if (!trans_b) {
                const double* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                const double* bcol = b + p;  // b is n x k, element (j, p) at j*k+p
                for (int64_t j = 0; j < n; ++j) crow[j] += av * bcol[j * k];
            }
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2) {
        throw ContractError("matmul: rank-2 operands required, got " + shape_str(a.shape()) +
                            " and " + shape_str(b.shape()));
    }
    int64_t m = trans_a ? a.dim(1) : a.dim(0);
    int64_t ka = trans_a ? a.dim(0) : a.dim(1);
    int64_t kb = trans_b ? b.dim(1) : b.dim(0);
    int64_t n = trans_b ? b.dim(0) : b.dim(1);
    if (ka != kb) {
        throw ContractError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                            (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                            (trans_b ? "^T" : ""));
    }
    std::vector<double> out(static_cast<size_t>(m * n));
    gemm(a.data().data(), b.data().data(), out.data(), m, n, ka, trans_a, trans_b, false);
    auto r = new_result({m, n}, std::move(out), {a, b}, "matmul");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on, m, n, ka, trans_a, trans_b]() {
            const double* g = on->grad_buffer().data();
            if (an->requires_grad) {
                double* ga = an->grad_buffer().data();
                // dA = dC . op(B)^T  (or transposed variant when A was transposed)
                if (!trans_a) {
                    // (m x k) += g (m x n) . B' (n x k) where B' = op(B)^T
                    gemm(g, bn->data.data(), ga, m, ka, n, false, !trans_b, true);
                } else {
                    // A is (k x m): dA^T = ... => dA = op(B) . dC^T arranged (k x m)
                    gemm(bn->data.data(), g, ga, ka, m, n, trans_b, true, true);
                }
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_buffer().data();
                if (!trans_b) {
                    // (k x n) += A' (k x m) . g (m x n) where A' = op(A)^T
                    gemm(an->data.data(), g, gb, ka, n, m, !trans_a, false, true);
                } else {
                    // B is (n x k): dB = dC^T . op(A) arranged (n x k)
                    gemm(g, an->data.data(), gb, n, ka, m, true, trans_a, true);
                }
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_defined(x, "linear");
    check_defined(w, "linear");
    check_defined(b, "linear");
    if (w.rank() != 2) throw ContractError("linear: weight must be rank 2, got " + shape_str(w.shape()));
    int64_t d_in = w.dim(0);
    int64_t d_out = w.dim(1);
    if (b.rank() != 1 || b.dim(0) != d_out) {
        throw ContractError("linear: bias shape " + shape_str(b.shape()) +
                            " incompatible with weight " + shape_str(w.shape()));
    }
    bool vector_input = (x.rank() == 1);
    int64_t rows = vector_input ? 1 : x.dim(0);
    int64_t cols = vector_input ? x.dim(0) : x.dim(1);
    if (x.rank() > 2 || cols != d_in) {
        throw ContractError("linear: input shape " + shape_str(x.shape()) +
                            " incompatible with weight " + shape_str(w.shape()));
    }
    std::vector<double> out(static_cast<size_t>(rows * d_out));
    gemm(x.data().data(), w.data().data(), out.data(), rows, d_out, d_in, false, false, false);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < d_out; ++j) out[static_cast<size_t>(i * d_out + j)] += b.at(j);
    }
    Shape out_shape = vector_input ? Shape{d_out} : Shape{rows, d_out};
    auto r = new_result(std::move(out_shape), std::move(out), {x, w, b}, "linear");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* wn = w.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, wn, bn, on, rows, d_in, d_out]() {
            const double* g = on->grad_buffer().data();
            if (xn->requires_grad) {
                gemm(g, wn->data.data(), xn->grad_buffer().data(), rows, d_in, d_out,
                     false, true, true);
            }
            if (wn->requires_grad) {
                gemm(xn->data.data(), g, wn->grad_buffer().data(), d_in, d_out, rows,
                     true, false, true);
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < d_out; ++j) gb[static_cast<size_t>(j)] += g[i * d_out + j];
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor dot(const Tensor& a, const Tensor& b) {
    check_defined(a, "dot");
    check_defined(b, "dot");
    if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0)) {
        throw ContractError("dot: rank-1 operands of equal length required, got " +
                            shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double s = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    auto r = new_result({1}, {s}, {a, b}, "dot");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on]() {
            double g = on->grad_buffer()[0];
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->data[i];
            }
        };
    }
    return Tensor::wrap(r.node);
}

// ---------------------------------------------------------------------------
// normalization / activations
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
    check_defined(x, "softmax");
    if (x.rank() < 1 || x.rank() > 2) {
        throw ContractError("softmax: rank-1 or rank-2 input required, got " + shape_str(x.shape()));
    }
    if (axis < 0) axis += static_cast<int>(x.rank());
    if (axis < 0 || axis >= x.rank()) throw ContractError("softmax: axis out of range");
    // Normalize [n] along axis 0 as a single row; rank-2 handled as rows
    // (axis 1) or columns (axis 0).
    int64_t rows, cols;
    bool along_cols;  // normalize within a row
    if (x.rank() == 1) {
        rows = 1;
        cols = x.dim(0);
        along_cols = true;
    } else {
        rows = x.dim(0);
        cols = x.dim(1);
        along_cols = (axis == 1);
    }
    if ((along_cols ? cols : rows) < 1) throw ContractError("softmax: empty axis");

    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    auto run_group = [&](int64_t n, int64_t base, int64_t stride) {
        double mx = in[base];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * stride]);
        double denom = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double e = std::exp(in[base + i * stride] - mx);
            out[static_cast<size_t>(base + i * stride)] = e;
            denom += e;
        }
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(base + i * stride)] /= denom;
    };
    if (along_cols) {
        for (int64_t rr = 0; rr < rows; ++rr) run_group(cols, rr * cols, 1);
    } else {
        for (int64_t cc = 0; cc < cols; ++cc) run_group(rows, cc, cols);
    }
    auto r = new_result(x.shape(), std::move(out), {x}, "softmax");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on, rows, cols, along_cols]() {
            const auto& y = on->data;
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            auto run_group = [&](int64_t n, int64_t base, int64_t stride) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    size_t k = static_cast<size_t>(base + i * stride);
                    acc += g[k] * y[k];
                }
                for (int64_t i = 0; i < n; ++i) {
                    size_t k = static_cast<size_t>(base + i * stride);
                    gx[k] += y[k] * (g[k] - acc);
                }
            };
            if (along_cols) {
                for (int64_t rr = 0; rr < rows; ++rr) run_group(cols, rr * cols, 1);
            } else {
                for (int64_t cc = 0; cc < cols; ++cc) run_group(rows, cc, cols);
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_defined(x, "layer_norm");
    check_defined(gain, "layer_norm");
    check_defined(bias, "layer_norm");
    if (x.rank() != 2) throw ContractError("layer_norm: rank-2 input required, got " + shape_str(x.shape()));
    int64_t rows = x.dim(0);
    int64_t cols = x.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols) {
        throw ContractError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                            shape_str(bias.shape()) + " incompatible with input " +
                            shape_str(x.shape()));
    }
    std::vector<double> out(x.data().size());
    std::vector<double> xhat(x.data().size());
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    const double* in = x.data().data();
    for (int64_t i = 0; i < rows; ++i) {
        const double* row = in + i * cols;
        double mu = 0.0;
        for (int64_t j = 0; j < cols; ++j) mu += row[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < cols; ++j) {
            double h = (row[j] - mu) * is;
            xhat[static_cast<size_t>(i * cols + j)] = h;
            out[static_cast<size_t>(i * cols + j)] = h * gain.at(j) + bias.at(j);
        }
    }
    auto r = new_result(x.shape(), std::move(out), {x, gain, bias}, "layer_norm");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* gn = gain.node().get();
        TensorNode* bn = bias.node().get();
        TensorNode* on = r.node.get();
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(inv_sigma));
        r.node->backprop = [xn, gn, bn, on, xh, is, rows, cols]() {
            const auto& g = on->grad_buffer();
            for (int64_t i = 0; i < rows; ++i) {
                const double* grow = g.data() + i * cols;
                const double* hrow = xh->data() + i * cols;
                if (gn->requires_grad) {
                    auto& gg = gn->grad_buffer();
                    for (int64_t j = 0; j < cols; ++j) gg[static_cast<size_t>(j)] += grow[j] * hrow[j];
                }
                if (bn->requires_grad) {
                    auto& gb = bn->grad_buffer();
                    for (int64_t j = 0; j < cols; ++j) gb[static_cast<size_t>(j)] += grow[j];
                }
                if (xn->requires_grad) {
                    // dxhat = g * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) / sigma
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < cols; ++j) {
                        double dh = grow[j] * gn->data[static_cast<size_t>(j)];
                        m1 += dh;
                        m2 += dh * hrow[j];
                    }
                    m1 /= static_cast<double>(cols);
                    m2 /= static_cast<double>(cols);
                    auto& gx = xn->grad_buffer();
                    double isg = (*is)[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < cols; ++j) {
                        double dh = grow[j] * gn->data[static_cast<size_t>(j)];
                        gx[static_cast<size_t>(i * cols + j)] += (dh - m1 - hrow[j] * m2) * isg;
                    }
                }
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor l2_normalize(const Tensor& x, double eps) {
    check_defined(x, "l2_normalize");
    if (x.rank() < 1 || x.rank() > 2) {
        throw ContractError("l2_normalize: rank-1 or rank-2 input required");
    }
    int64_t rows = (x.rank() == 1) ? 1 : x.dim(0);
    int64_t cols = (x.rank() == 1) ? x.dim(0) : x.dim(1);
    std::vector<double> out(x.data().size());
    std::vector<double> norms(static_cast<size_t>(rows));
    const double* in = x.data().data();
    for (int64_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < cols; ++j) s += in[i * cols + j] * in[i * cols + j];
        double r = std::sqrt(s);
        norms[static_cast<size_t>(i)] = r;
        double inv = 1.0 / (r + eps);
        for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(i * cols + j)] = in[i * cols + j] * inv;
    }
    auto r = new_result(x.shape(), std::move(out), {x}, "l2_normalize");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        auto nr = std::make_shared<std::vector<double>>(std::move(norms));
        r.node->backprop = [xn, on, nr, rows, cols, eps]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            for (int64_t i = 0; i < rows; ++i) {
                double radius = (*nr)[static_cast<size_t>(i)];
                double inv = 1.0 / (radius + eps);
                double xg = 0.0;
                for (int64_t j = 0; j < cols; ++j)
                    xg += xn->data[static_cast<size_t>(i * cols + j)] * g[static_cast<size_t>(i * cols + j)];
                // d/dx [x/(r+eps)] = I/(r+eps) - x x^T / (r (r+eps)^2); zero row has r=0, x=0.
                double coef = (radius > 0.0) ? xg * inv * inv / radius : 0.0;
                for (int64_t j = 0; j < cols; ++j) {
                    size_t k = static_cast<size_t>(i * cols + j);
                    gx[k] += g[k] * inv - xn->data[k] * coef;
                }
            }
        };
    }
    return Tensor::wrap(r.node);
}

// ---------------------------------------------------------------------------
// reshuffling
// ---------------------------------------------------------------------------

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check_defined(a, "concat_rows");
    check_defined(b, "concat_rows");
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw ContractError("concat_rows: column counts disagree, " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
    }
    int64_t cols = a.dim(1);
    int64_t ra = a.dim(0), rb = b.dim(0);
    std::vector<double> out;
    out.reserve(static_cast<size_t>((ra + rb) * cols));
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto r = new_result({ra + rb, cols}, std::move(out), {a, b}, "concat_rows");
    if (r.taped) {
        TensorNode* an = a.node().get();
        TensorNode* bn = b.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [an, bn, on, ra, cols]() {
            const auto& g = on->grad_buffer();
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                size_t off = static_cast<size_t>(ra * cols);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[off + i];
            }
        };
    }
    return Tensor::wrap(r.node);
}

Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end) {
    check_defined(x, "slice_rows");
    if (x.rank() != 2) throw ContractError("slice_rows: rank-2 input required");
    if (begin < 0 || end < begin || end > x.dim(0)) {
        throw ContractError("slice_rows: range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") out of bounds for " + shape_str(x.shape()));
    }
    int64_t cols = x.dim(1);
    std::vector<double> out(x.data().begin() + begin * cols, x.data().begin() + end * cols);
    auto r = new_result({end - begin, cols}, std::move(out), {x}, "slice_rows");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on, begin, cols]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            size_t off = static_cast<size_t>(begin * cols);
            for (size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
        };
    }
    return Tensor::wrap(r.node);
}

Tensor slice_cols(const Tensor& x, int64_t begin, int64_t end) {
    check_defined(x, "slice_cols");
    if (x.rank() != 2) throw ContractError("slice_cols: rank-2 input required");
    if (begin < 0 || end < begin || end > x.dim(1)) {
        throw ContractError("slice_cols: range [" + std::to_string(begin) + "," +
                            std::to_string(end) + ") out of bounds for " + shape_str(x.shape()));
    }
    int64_t rows = x.dim(0), cols = x.dim(1), width = end - begin;
    std::vector<double> out(static_cast<size_t>(rows * width));
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < width; ++j)
            out[static_cast<size_t>(i * width + j)] = x.data()[static_cast<size_t>(i * cols + begin + j)];
    auto r = new_result({rows, width}, std::move(out), {x}, "slice_cols");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on, begin, rows, cols, width]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < width; ++j)
                    gx[static_cast<size_t>(i * cols + begin + j)] += g[static_cast<size_t>(i * width + j)];
        };
    }
    return Tensor::wrap(r.node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    int64_t rows = parts[0].dim(0);
    int64_t total = 0;
    for (const Tensor& p : parts) {
        check_defined(p, "concat_cols");
        if (p.rank() != 2 || p.dim(0) != rows) {
            throw ContractError("concat_cols: row counts disagree, " + shape_str(parts[0].shape()) +
                                " vs " + shape_str(p.shape()));
        }
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(rows * total));
    int64_t off = 0;
    for (const Tensor& p : parts) {
        int64_t w = p.dim(1);
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j)
                out[static_cast<size_t>(i * total + off + j)] = p.data()[static_cast<size_t>(i * w + j)];
        off += w;
    }
    auto n = make_node({rows, total}, std::move(out));
    ensure_finite(*n, "concat_cols");
    bool taped = false;
    if (grad_enabled()) {
        for (const Tensor& p : parts)
            if (p.requires_grad()) { taped = true; break; }
    }
    if (taped) {
        n->requires_grad = true;
        for (const Tensor& p : parts) n->parents.push_back(p.node());
        TensorNode* on = n.get();
        std::vector<TensorNode*> raw;
        std::vector<int64_t> widths;
        for (const Tensor& p : parts) {
            raw.push_back(p.node().get());
            widths.push_back(p.dim(1));
        }
        n->backprop = [on, raw, widths, rows, total]() {
            const auto& g = on->grad_buffer();
            int64_t off2 = 0;
            for (size_t k = 0; k < raw.size(); ++k) {
                int64_t w = widths[k];
                if (raw[k]->requires_grad) {
                    auto& gp = raw[k]->grad_buffer();
                    for (int64_t i = 0; i < rows; ++i)
                        for (int64_t j = 0; j < w; ++j)
                            gp[static_cast<size_t>(i * w + j)] += g[static_cast<size_t>(i * total + off2 + j)];
                }
                off2 += w;
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: no rows");
    int64_t d = rows[0].numel();
    for (const Tensor& t : rows) {
        check_defined(t, "stack_rows");
        if (t.rank() != 1 || t.dim(0) != d) {
            throw ContractError("stack_rows: all rows must be rank-1 of equal length, got " +
                                shape_str(t.shape()) + " vs length " + std::to_string(d));
        }
    }
    int64_t k = static_cast<int64_t>(rows.size());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(k * d));
    for (const Tensor& t : rows) out.insert(out.end(), t.data().begin(), t.data().end());
    auto n = make_node({k, d}, std::move(out));
    ensure_finite(*n, "stack_rows");
    bool taped = false;
    if (grad_enabled()) {
        for (const Tensor& t : rows)
            if (t.requires_grad()) { taped = true; break; }
    }
    if (taped) {
        n->requires_grad = true;
        for (const Tensor& t : rows) n->parents.push_back(t.node());
        TensorNode* on = n.get();
        std::vector<TensorNode*> raw;
        for (const Tensor& t : rows) raw.push_back(t.node().get());
        n->backprop = [on, raw, d]() {
            const auto& g = on->grad_buffer();
            for (size_t i = 0; i < raw.size(); ++i) {
                if (!raw[i]->requires_grad) continue;
                auto& gr = raw[i]->grad_buffer();
                for (int64_t j = 0; j < d; ++j) gr[static_cast<size_t>(j)] += g[i * d + j];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids) {
    check_defined(table, "gather_rows");
    if (table.rank() != 2) throw ContractError("gather_rows: rank-2 table required");
    if (ids.empty()) throw ContractError("gather_rows: empty id list");
    int64_t rows = table.dim(0), cols = table.dim(1);
    for (int64_t id : ids) {
        if (id < 0 || id >= rows) {
            throw ContractError("gather_rows: id " + std::to_string(id) +
                                " out of range for table with " + std::to_string(rows) + " rows");
        }
    }
    std::vector<double> out(ids.size() * static_cast<size_t>(cols));
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().begin() + ids[i] * cols, cols, out.begin() + static_cast<int64_t>(i) * cols);
    auto r = new_result({static_cast<int64_t>(ids.size()), cols}, std::move(out), {table}, "gather_rows");
    if (r.taped) {
        TensorNode* tn = table.node().get();
        TensorNode* on = r.node.get();
        auto idc = std::make_shared<std::vector<int64_t>>(ids);
        r.node->backprop = [tn, on, idc, cols]() {
            const auto& g = on->grad_buffer();
            auto& gt = tn->grad_buffer();
            for (size_t i = 0; i < idc->size(); ++i)
                for (int64_t j = 0; j < cols; ++j)
                    gt[static_cast<size_t>((*idc)[i] * cols + j)] += g[i * static_cast<size_t>(cols) + static_cast<size_t>(j)];
        };
    }
    return Tensor::wrap(r.node);
}

Tensor take_per_row(const Tensor& x, const std::vector<int64_t>& idx) {
    check_defined(x, "take_per_row");
    if (x.rank() != 2) throw ContractError("take_per_row: rank-2 input required");
    if (static_cast<int64_t>(idx.size()) != x.dim(0)) {
        throw ContractError("take_per_row: index count " + std::to_string(idx.size()) +
                            " != row count " + std::to_string(x.dim(0)));
    }
    int64_t cols = x.dim(1);
    std::vector<double> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= cols) {
            throw ContractError("take_per_row: index " + std::to_string(idx[i]) +
                                " out of range for " + std::to_string(cols) + " columns");
        }
        out[i] = x.data()[i * static_cast<size_t>(cols) + static_cast<size_t>(idx[i])];
    }
    auto r = new_result({static_cast<int64_t>(idx.size())}, std::move(out), {x}, "take_per_row");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        auto idc = std::make_shared<std::vector<int64_t>>(idx);
        r.node->backprop = [xn, on, idc, cols]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            for (size_t i = 0; i < idc->size(); ++i)
                gx[i * static_cast<size_t>(cols) + static_cast<size_t>((*idc)[i])] += g[i];
        };
    }
    return Tensor::wrap(r.node);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum_all");
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto r = new_result({1}, {s}, {x}, "sum_all");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on]() {
            double g = on->grad_buffer()[0];
            auto& gx = xn->grad_buffer();
            for (double& v : gx) v += g;
        };
    }
    return Tensor::wrap(r.node);
}

Tensor mean_all(const Tensor& x) {
    check_defined(x, "mean_all");
    if (x.numel() == 0) throw ContractError("mean_all: empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_rows(const Tensor& x) {
    check_defined(x, "mean_rows");
    if (x.rank() != 2 || x.dim(0) < 1) throw ContractError("mean_rows: non-empty rank-2 input required");
    int64_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(static_cast<size_t>(cols), 0.0);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) out[static_cast<size_t>(j)] += x.data()[static_cast<size_t>(i * cols + j)];
    for (double& v : out) v /= static_cast<double>(rows);
    auto r = new_result({cols}, std::move(out), {x}, "mean_rows");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on, rows, cols]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            double inv = 1.0 / static_cast<double>(rows);
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < cols; ++j) gx[static_cast<size_t>(i * cols + j)] += g[static_cast<size_t>(j)] * inv;
        };
    }
    return Tensor::wrap(r.node);
}

Tensor logsumexp_off_diagonal(const Tensor& x) {
    check_defined(x, "logsumexp_off_diagonal");
    if (x.rank() != 2 || x.dim(0) != x.dim(1)) {
        throw ContractError("logsumexp_off_diagonal: square input required, got " + shape_str(x.shape()));
    }
    int64_t k = x.dim(0);
    if (k < 2) throw ContractError("logsumexp_off_diagonal: at least 2 rows required");
    std::vector<double> out(static_cast<size_t>(k));
    const double* in = x.data().data();
    for (int64_t i = 0; i < k; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < k; ++j)
            if (j != i) mx = std::max(mx, in[i * k + j]);
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j)
            if (j != i) s += std::exp(in[i * k + j] - mx);
        out[static_cast<size_t>(i)] = mx + std::log(s);
    }
    auto r = new_result({k}, std::move(out), {x}, "logsumexp_off_diagonal");
    if (r.taped) {
        TensorNode* xn = x.node().get();
        TensorNode* on = r.node.get();
        r.node->backprop = [xn, on, k]() {
            const auto& g = on->grad_buffer();
            auto& gx = xn->grad_buffer();
            for (int64_t i = 0; i < k; ++i) {
                double lse = on->data[static_cast<size_t>(i)];
                for (int64_t j = 0; j < k; ++j) {
                    if (j == i) continue;
                    double w = std::exp(xn->data[static_cast<size_t>(i * k + j)] - lse);
                    gx[static_cast<size_t>(i * k + j)] += g[static_cast<size_t>(i)] * w;
                }
            }
        };
    }
    return Tensor::wrap(r.node);
}

}  // namespace jferc
