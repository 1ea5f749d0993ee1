// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "repiece/tensor.hpp"

namespace repiece::synthetic {

/// Smooth image in [0, 1]: a random linear ramp plus a few low-frequency
/// sinusoids per channel.
Tensor smooth_image(std::uint64_t seed, std::size_t size = 224);

/// Independent uniform [0, 1) pixels.
Tensor noise_image(std::uint64_t seed, std::size_t size = 224);

/// Horizontal ramp from 0 to 1, identical in every channel.
Tensor horizontal_gradient(std::size_t size = 224);

}  // namespace repiece::synthetic
