// Copyright 2026 The jferc Authors
// Splittable counter-based random number generator
//
// Licensed under the Apache License, Version 2.0

#include "core/rng.hpp"

#include <cmath>

namespace jferc {

namespace {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed, uint64_t stream) {
    key_ = mix64(mix64(seed) ^ mix64(stream + 0xA5A5A5A5A5A5A5A5ULL));
}

Rng Rng::split(uint64_t stream) const {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(stream + 0x6A09E667F3BCC909ULL));
    child.counter_ = 0;
    return child;
}

uint64_t Rng::next_u64() {
    return mix64(key_ + (++counter_) * 0xD1B54A32D192ED03ULL);
}

double Rng::uniform() {
    // 53 random bits into [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // Box-Muller; draws two uniforms per sample, no caching so that the
    // stream position stays a pure function of the draw count.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
}

}  // namespace jferc
