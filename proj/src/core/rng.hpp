// Copyright 2026 The jferc Authors
// Splittable counter-based random number generator
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>

namespace jferc {

// Deterministic 64-bit counter-based generator. Each draw is a hash of
// (key, counter); streams derived with split() are statistically
// independent of the parent and of each other, so initialization order
// cannot perturb downstream sampling.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0);

    // Derived generator for an independent stream.
    Rng split(uint64_t stream) const;

    uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard Gaussian (Box-Muller)
    double normal(double mean, double stddev);
    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace jferc
