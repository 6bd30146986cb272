// Copyright 2026 The jferc Authors
// Central finite-difference gradient checking
//
// Licensed under the Apache License, Version 2.0

#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace jferc {

std::vector<std::vector<double>> finite_difference_gradients(
    const std::function<double()>& loss_fn, std::vector<Tensor>& params, double h) {
    if (h <= 0.0) throw ContractError("finite_difference_gradients: h must be positive");
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    NoGradGuard no_tape;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto data = params[pi].mutable_data();
        std::vector<double> g(data.size());
        for (size_t i = 0; i < data.size(); ++i) {
            double saved = data[i];
            data[i] = saved + h;
            double fp = loss_fn();
            data[i] = saved - h;
            double fm = loss_fn();
            data[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("finite_difference_gradients: non-finite loss at parameter " +
                                   (params[pi].name().empty() ? std::to_string(pi) : params[pi].name()) +
                                   ", coordinate " + std::to_string(i));
            }
            g[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

double max_relative_error(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) throw ContractError("max_relative_error: collection sizes differ");
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) throw ContractError("max_relative_error: entry sizes differ");
        for (size_t j = 0; j < a[i].size(); ++j) {
            worst = std::max(worst, relative_error(a[i][j], b[i][j]));
        }
    }
    return worst;
}

}  // namespace jferc
