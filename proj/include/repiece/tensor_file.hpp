// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "repiece/tensor.hpp"

namespace repiece {

/// Named-tensor container.
///
/// Layout: an 8-byte little-endian header length, a UTF-8 JSON header, then the
/// blob of little-endian float32 values. Header entries are
///   "<name>": {"dtype": "F32", "shape": [...], "offset": bytes, "length": bytes}
/// plus an optional "__metadata__" object. Offsets are relative to the blob start.
/// Tensors are laid out in name order with no gaps, so writing the result of a
/// read reproduces the input byte for byte.
struct TensorFile {
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;
};

std::string encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(const std::string& bytes);

TensorFile read_tensor_file(const std::filesystem::path& path);
/// Metadata object of a tensor file, reading only the header.
nlohmann::json read_tensor_file_metadata(const std::filesystem::path& path);
void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace repiece
