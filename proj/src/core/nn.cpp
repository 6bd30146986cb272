// Copyright 2026 The jferc Authors
// Transformer encoder building blocks and the named-parameter registry
//
// Licensed under the Apache License, Version 2.0

#include "core/nn.hpp"

#include <cmath>

namespace jferc {

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ContractError("ParameterSet: duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    t.set_name(name);
    index_[name] = items_.size();
    items_.push_back(std::move(t));
    return items_.back();
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParameterSet: unknown parameter '" + name + "'");
    return items_[it->second];
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParameterSet: unknown parameter '" + name + "'");
    return items_[it->second];
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) > 0; }

int64_t ParameterSet::total_scalars() const {
    int64_t n = 0;
    for (const Tensor& t : items_) n += t.numel();
    return n;
}

void ParameterSet::zero_grads() {
    for (Tensor& t : items_) t.zero_grad();
}

Tensor init_weight(Rng& rng, Shape shape) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, 0.02);
    return t;
}

Tensor init_bias(Shape shape) { return Tensor::zeros(std::move(shape)); }

EncoderLayerParams EncoderLayerParams::init(Rng& rng, int dim, int heads, int ffn_hidden) {
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        throw ContractError("encoder layer: model dim " + std::to_string(dim) +
                            " not divisible by head count " + std::to_string(heads));
    }
    EncoderLayerParams p;
    p.dim = dim;
    p.heads = heads;
    int64_t d = dim;
    int64_t h = ffn_hidden;
    p.wq = init_weight(rng, {d, d});
    p.bq = init_bias({d});
    p.wk = init_weight(rng, {d, d});
    p.bk = init_bias({d});
    p.wv = init_weight(rng, {d, d});
    p.bv = init_bias({d});
    p.wo = init_weight(rng, {d, d});
    p.bo = init_bias({d});
    p.ff1_w = init_weight(rng, {d, h});
    p.ff1_b = init_bias({h});
    p.ff2_w = init_weight(rng, {h, d});
    p.ff2_b = init_bias({d});
    p.ln1_g = Tensor::full({d}, 1.0);
    p.ln1_b = init_bias({d});
    p.ln2_g = Tensor::full({d}, 1.0);
    p.ln2_b = init_bias({d});
    return p;
}

EncoderLayerParams EncoderLayerParams::clone() const {
    EncoderLayerParams p;
    p.dim = dim;
    p.heads = heads;
    p.wq = wq.clone();
    p.bq = bq.clone();
    p.wk = wk.clone();
    p.bk = bk.clone();
    p.wv = wv.clone();
    p.bv = bv.clone();
    p.wo = wo.clone();
    p.bo = bo.clone();
    p.ff1_w = ff1_w.clone();
    p.ff1_b = ff1_b.clone();
    p.ff2_w = ff2_w.clone();
    p.ff2_b = ff2_b.clone();
    p.ln1_g = ln1_g.clone();
    p.ln1_b = ln1_b.clone();
    p.ln2_g = ln2_g.clone();
    p.ln2_b = ln2_b.clone();
    return p;
}

void EncoderLayerParams::register_params(ParameterSet& ps, const std::string& prefix) {
    ps.add(prefix + ".attn.wq", wq);
    ps.add(prefix + ".attn.bq", bq);
    ps.add(prefix + ".attn.wk", wk);
    ps.add(prefix + ".attn.bk", bk);
    ps.add(prefix + ".attn.wv", wv);
    ps.add(prefix + ".attn.bv", bv);
    ps.add(prefix + ".attn.wo", wo);
    ps.add(prefix + ".attn.bo", bo);
    ps.add(prefix + ".ffn.w1", ff1_w);
    ps.add(prefix + ".ffn.b1", ff1_b);
    ps.add(prefix + ".ffn.w2", ff2_w);
    ps.add(prefix + ".ffn.b2", ff2_b);
    ps.add(prefix + ".ln1.gain", ln1_g);
    ps.add(prefix + ".ln1.bias", ln1_b);
    ps.add(prefix + ".ln2.gain", ln2_g);
    ps.add(prefix + ".ln2.bias", ln2_b);
}

void EncoderLayerParams::zero_residual_branches() {
    for (Tensor* t : {&wo, &bo, &ff2_w, &ff2_b}) {
        for (double& v : t->mutable_data()) v = 0.0;
    }
}

Tensor multi_head_self_attention(const Tensor& x, const EncoderLayerParams& p) {
    if (!x.defined() || x.rank() != 2) {
        throw ContractError("multi_head_self_attention: rank-2 input required");
    }
    int64_t rows = x.dim(0);
    int64_t d = x.dim(1);
    if (rows == 0) throw ContractError("multi_head_self_attention: empty sequence");
    if (d != p.dim) {
        throw ContractError("multi_head_self_attention: input width " + std::to_string(d) +
                            " != model dim " + std::to_string(p.dim));
    }
    int64_t head_dim = d / p.heads;
    double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor q = linear(x, p.wq, p.bq);
    Tensor k = linear(x, p.wk, p.bk);
    Tensor v = linear(x, p.wv, p.bv);

    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        int64_t lo = h * head_dim;
        int64_t hi = lo + head_dim;
        Tensor qh = slice_cols(q, lo, hi);
        Tensor kh = slice_cols(k, lo, hi);
        Tensor vh = slice_cols(v, lo, hi);
        Tensor scores = scale(matmul(qh, kh, false, true), att_scale);
        Tensor attn = softmax(scores, 1);
        heads.push_back(matmul(attn, vh));
    }
    Tensor merged = (p.heads == 1) ? heads[0] : concat_cols(heads);
    return linear(merged, p.wo, p.bo);
}

Tensor transformer_encoder_layer(const Tensor& x, const EncoderLayerParams& p) {
    Tensor h1 = add(x, multi_head_self_attention(layer_norm(x, p.ln1_g, p.ln1_b), p));
    Tensor n2 = layer_norm(h1, p.ln2_g, p.ln2_b);
    Tensor ffn = linear(gelu(linear(n2, p.ff1_w, p.ff1_b)), p.ff2_w, p.ff2_b);
    return add(h1, ffn);
}

TwoLayerMlp TwoLayerMlp::init(Rng& rng, int dim, int hidden) {
    TwoLayerMlp m;
    m.w1 = init_weight(rng, {dim, hidden});
    m.b1 = init_bias({hidden});
    m.w2 = init_weight(rng, {hidden, dim});
    m.b2 = init_bias({dim});
    return m;
}

Tensor TwoLayerMlp::forward(const Tensor& x) const {
    return linear(gelu(linear(x, w1, b1)), w2, b2);
}

void TwoLayerMlp::register_params(ParameterSet& ps, const std::string& prefix) {
    ps.add(prefix + ".w1", w1);
    ps.add(prefix + ".b1", b1);
    ps.add(prefix + ".w2", w2);
    ps.add(prefix + ".b2", b2);
}

Tensor sinusoidal_positions(int64_t length, int64_t dim) {
    Tensor t = Tensor::zeros({length, dim});
    auto buf = t.mutable_data();
    for (int64_t pos = 0; pos < length; ++pos) {
        for (int64_t i = 0; i < dim; i += 2) {
            double rate = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
            buf[static_cast<size_t>(pos * dim + i)] = std::sin(static_cast<double>(pos) * rate);
            if (i + 1 < dim) {
                buf[static_cast<size_t>(pos * dim + i + 1)] = std::cos(static_cast<double>(pos) * rate);
            }
        }
    }
    return t;
}

}  // namespace jferc
