// Copyright 2026 The jferc Authors
// Transformer encoder building blocks and the named-parameter registry
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace jferc {

// Ordered registry of trainable tensors; the order fixes checkpoint layout
// and gradient-reduction order.
class ParameterSet {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    size_t size() const { return items_.size(); }
    int64_t total_scalars() const;
    std::vector<Tensor>& items() { return items_; }
    const std::vector<Tensor>& items() const { return items_; }
    void zero_grads();

private:
    std::vector<Tensor> items_;
    std::unordered_map<std::string, size_t> index_;
};

// Weights are Gaussian(0, 0.02), biases zero, layer-norm gains one.
Tensor init_weight(Rng& rng, Shape shape);
Tensor init_bias(Shape shape);

struct EncoderLayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;      // attention projections, d x d
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;          // feed-forward, d -> hidden -> d
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;          // pre-norm layer norms
    int heads = 0;
    int dim = 0;

    static EncoderLayerParams init(Rng& rng, int dim, int heads, int ffn_hidden);
    // Deep copy with independent storage (used for the primed encoder pair).
    EncoderLayerParams clone() const;
    void register_params(ParameterSet& ps, const std::string& prefix);
    // Attention output projection and second feed-forward map zeroed, which
    // makes the pre-norm residual layer an exact identity.
    void zero_residual_branches();
};

// Scaled dot-product self-attention over S x d input, no positional encoding.
Tensor multi_head_self_attention(const Tensor& x, const EncoderLayerParams& p);

// Pre-norm residual layout: x + MHSA(LN(x)), then + FFN(LN(.)).
Tensor transformer_encoder_layer(const Tensor& x, const EncoderLayerParams& p);

struct TwoLayerMlp {
    Tensor w1, b1, w2, b2;

    static TwoLayerMlp init(Rng& rng, int dim, int hidden);
    Tensor forward(const Tensor& x) const;
    void register_params(ParameterSet& ps, const std::string& prefix);
};

// S x d sinusoidal position table.
Tensor sinusoidal_positions(int64_t length, int64_t dim);

}  // namespace jferc
