// Copyright 2026 The jferc Authors
// Central finite-difference gradient checking
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace jferc {

// Central differences (f(x+h) - f(x-h)) / 2h per coordinate of every
// parameter. loss_fn must be deterministic and pure; it is evaluated with
// the parameter values perturbed in place and restored afterwards.
std::vector<std::vector<double>> finite_difference_gradients(
    const std::function<double()>& loss_fn, std::vector<Tensor>& params, double h = 1e-5);

// max(|a|, |b|, 1e-8)-relative error between two gradient collections.
double max_relative_error(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b);

double relative_error(double a, double b);

}  // namespace jferc
