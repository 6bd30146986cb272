// Copyright 2026 The jferc Authors
// Reverse-mode differentiable tensor core
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace jferc {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // materialized lazily; always numel-sized once touched
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // accumulates into parents' grad buffers

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    std::vector<double>& grad_buffer();  // zero-filled on first access
};

// Value-semantic handle over a shared graph node. Ops on tensors whose
// inputs have requires_grad build a tape; backward() replays it in
// reverse topological order.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return node_->numel(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::span<const double> grad() const;
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad();

    double value() const;                        // rank-0/1-element convenience
    double at(int64_t i) const;                  // rank-1
    double at(int64_t i, int64_t j) const;       // rank-2

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v);
    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string name);

    // Deep copy of values (fresh leaf node, no tape history).
    Tensor clone() const;

    // Run reverse-mode accumulation from this scalar.
    void backward() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;
};

// Disables tape recording in scope; forward math is unchanged.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor gelu(const Tensor& a);
// log(max(x, floor)); when a value is clamped *clamp_counter is incremented.
Tensor log_clamped(const Tensor& a, double floor, uint64_t* clamp_counter = nullptr);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
// y = x . w + b for x of rank 1 (d_in) or rank 2 (n x d_in).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor dot(const Tensor& a, const Tensor& b);  // rank-1 pair -> scalar

// ---- normalization / activations over rows ----
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);
// Row-wise x / (||x|| + eps); rank-1 treated as a single row.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// ---- reshuffling ----
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end);
Tensor slice_cols(const Tensor& x, int64_t begin, int64_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);  // rank-1 pieces -> K x d
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids);
// out[i] = x[i, idx[i]]
Tensor take_per_row(const Tensor& x, const std::vector<int64_t>& idx);

// ---- reductions ----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // S x d -> d
// L[i] = log sum_{j != i} exp(x[i, j]) for square x.
Tensor logsumexp_off_diagonal(const Tensor& x);

}  // namespace jferc
