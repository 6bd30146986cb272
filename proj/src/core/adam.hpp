// Copyright 2026 The jferc Authors
// Adam optimizer with bias correction
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "core/nn.hpp"
#include "core/tensor.hpp"

namespace jferc {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers per parameter plus the shared step counter.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {});

    // Bias-corrected update from each parameter's accumulated grad buffer.
    // Non-finite gradients raise NumericError before any parameter mutates.
    void step(ParameterSet& params);

    int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::unordered_map<TensorNode*, Moments> moments_;
};

}  // namespace jferc
