// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "repiece/error.hpp"

namespace repiece {

namespace {

constexpr const char* kMetadataKey = "__metadata__";

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint64_t get_u64(const std::string& in) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | static_cast<unsigned char>(in[static_cast<std::size_t>(i)]);
    }
    return v;
}

}  // namespace

std::string encode_tensor_file(const TensorFile& file) {
    nlohmann::json header = nlohmann::json::object();
    if (!file.metadata.empty()) {
        header[kMetadataKey] = file.metadata;
    }
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : file.tensors) {
        require(name != kMetadataKey, ErrorKind::format, "reserved tensor name");
        const std::uint64_t length = tensor.numel() * sizeof(float);
        header[name] = {{"dtype", "F32"}, {"shape", tensor.shape()}, {"offset", offset}, {"length", length}};
        offset += length;
    }
    const std::string text = header.dump();
    std::string out;
    out.reserve(8 + text.size() + offset);
    put_u64(out, text.size());
    out += text;
    for (const auto& [name, tensor] : file.tensors) {
        const auto* bytes = reinterpret_cast<const char*>(tensor.data().data());
        out.append(bytes, tensor.numel() * sizeof(float));
    }
    return out;
}

TensorFile decode_tensor_file(const std::string& bytes) {
    require(bytes.size() >= 8, ErrorKind::format, "tensor file shorter than its length prefix");
    const auto header_len = get_u64(bytes);
    require(header_len <= bytes.size() - 8, ErrorKind::format, "header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(header_len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("malformed tensor header: ") + e.what());
    }
    require(header.is_object(), ErrorKind::format, "tensor header must be a JSON object");
    const std::size_t blob_start = 8 + header_len;
    const std::size_t blob_size = bytes.size() - blob_start;

    TensorFile file;
    struct Range {
        std::uint64_t begin, end;
        std::string name;
    };
    std::vector<Range> ranges;
    for (const auto& [name, entry] : header.items()) {
        if (name == kMetadataKey) {
            file.metadata = entry;
            continue;
        }
        Shape shape;
        std::uint64_t offset = 0, length = 0;
        try {
            require(entry.at("dtype").get<std::string>() == "F32",
                    ErrorKind::format,
                    "tensor '" + name + "' has unsupported dtype");
            shape = entry.at("shape").get<Shape>();
            offset = entry.at("offset").get<std::uint64_t>();
            length = entry.at("length").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::format, "bad header entry for tensor '" + name + "': " + e.what());
        }
        require(length == shape_numel(shape) * sizeof(float),
                ErrorKind::format,
                "tensor '" + name + "' length does not match shape " + shape_to_string(shape));
        require(offset <= blob_size && length <= blob_size - offset,
                ErrorKind::format,
                "tensor '" + name + "' extends past the end of the blob (truncated file?)");
        std::vector<float> data(shape_numel(shape));
        std::memcpy(data.data(), bytes.data() + blob_start + offset, length);
        try {
            file.tensors.emplace(name, Tensor(shape, std::move(data)));
        } catch (const Error& e) {
            fail(ErrorKind::format, "tensor '" + name + "': " + e.what());
        }
        ranges.push_back({offset, offset + length, name});
    }
    std::sort(ranges.begin(), ranges.end(), [](const Range& a, const Range& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        require(ranges[i].begin >= ranges[i - 1].end,
                ErrorKind::format,
                "tensors '" + ranges[i - 1].name + "' and '" + ranges[i].name + "' overlap");
    }
    return file;
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::io, "short write to " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    return decode_tensor_file(read_file_bytes(path));
}

nlohmann::json read_tensor_file_metadata(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::string prefix(8, '\0');
    in.read(prefix.data(), 8);
    require(in.gcount() == 8, ErrorKind::format, "tensor file shorter than its length prefix");
    const auto header_len = get_u64(prefix);
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    require(header_len <= file_size - 8, ErrorKind::format, "header length exceeds file size");
    std::string text(header_len, '\0');
    in.seekg(8);
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("malformed tensor header: ") + e.what());
    }
    require(header.is_object(), ErrorKind::format, "tensor header must be a JSON object");
    return header.contains(kMetadataKey) ? header[kMetadataKey] : nlohmann::json::object();
}

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
    write_file_bytes(path, encode_tensor_file(file));
}

}  // namespace repiece
