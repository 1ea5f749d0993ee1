// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "repiece/tensor.hpp"

namespace repiece::image_io {

/// Binary P6 PPM, 8-bit, to [3 x H x W] with values scaled to [0, 1].
Tensor decode_ppm(const std::string& bytes);
std::string encode_ppm(const Tensor& image);

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

/// PPM when the file starts with "P6", otherwise a tensor file holding an
/// "image" tensor of shape [3 x H x W].
Tensor load_image(const std::filesystem::path& path);
void save_image_tensor(const Tensor& image, const std::filesystem::path& path);

}  // namespace repiece::image_io
