// Copyright 2026 The jferc Authors
// Flat binary tensor container (checkpoints, embedding files)
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace jferc {

// Container layout: magic "JFERC1", then per-tensor records of
//   name length (u64 LE), UTF-8 name bytes,
//   rank (u64 LE), dims (u64 LE each),
//   data (f64 LE, row-major).
// Round-trips are bit-exact.

inline constexpr char kContainerMagic[] = "JFERC1";

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

}  // namespace jferc
