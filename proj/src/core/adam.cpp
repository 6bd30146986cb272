// Copyright 2026 The jferc Authors
// Adam optimizer with bias correction
//
// Licensed under the Apache License, Version 2.0

#include "core/adam.hpp"

#include <cmath>

namespace jferc {

AdamOptimizer::AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ContractError("adam: learning rate must be positive");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0) {
        throw ContractError("adam: betas must lie in [0, 1)");
    }
}

void AdamOptimizer::step(ParameterSet& params) {
    // Scan every gradient first so a poisoned batch cannot half-update.
    for (Tensor& p : params.items()) {
        for (double g : p.grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("adam: non-finite gradient in parameter '" + p.name() +
                                   "'; no parameters were updated");
            }
        }
    }
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Tensor& p : params.items()) {
        auto& mom = moments_[p.node().get()];
        size_t n = p.data().size();
        if (mom.m.size() != n) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        auto data = p.mutable_data();
        auto grad = p.grad();
        for (size_t i = 0; i < n; ++i) {
            double g = grad[i];
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = mom.m[i] / bc1;
            double vhat = mom.v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace jferc
