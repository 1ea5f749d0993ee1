// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "repiece/error.hpp"
#include "repiece/tensor_file.hpp"

namespace repiece::image_io {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : m_bytes(bytes) {}

    long next_number() {
        skip_space_and_comments();
        std::size_t start = m_pos;
        while (m_pos < m_bytes.size() && std::isdigit(static_cast<unsigned char>(m_bytes[m_pos]))) {
            ++m_pos;
        }
        require(m_pos > start && m_pos - start < 10, ErrorKind::format, "malformed PPM header");
        return std::stol(m_bytes.substr(start, m_pos - start));
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        require(m_pos < m_bytes.size() && std::isspace(static_cast<unsigned char>(m_bytes[m_pos])),
                ErrorKind::format,
                "malformed PPM header");
        return m_pos + 1;
    }

    void skip(std::size_t n) {
        m_pos += n;
    }

private:
    void skip_space_and_comments() {
        while (m_pos < m_bytes.size()) {
            const auto c = static_cast<unsigned char>(m_bytes[m_pos]);
            if (std::isspace(c)) {
                ++m_pos;
            } else if (c == '#') {
                while (m_pos < m_bytes.size() && m_bytes[m_pos] != '\n') {
                    ++m_pos;
                }
            } else {
                break;
            }
        }
    }

    const std::string& m_bytes;
    std::size_t m_pos = 0;
};

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
    require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6', ErrorKind::format, "not a binary PPM (P6)");
    HeaderReader header(bytes);
    header.skip(2);
    const long width = header.next_number();
    const long height = header.next_number();
    const long maxval = header.next_number();
    require(width > 0 && height > 0, ErrorKind::format, "PPM extent must be positive");
    require(maxval > 0 && maxval <= 255, ErrorKind::format, "only 8-bit PPM is supported");
    const auto start = header.raster_start();
    const auto w = static_cast<std::size_t>(width), h = static_cast<std::size_t>(height);
    require(bytes.size() - start >= 3 * w * h, ErrorKind::format, "PPM raster truncated");

    Tensor image({3, h, w});
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const auto v = static_cast<unsigned char>(bytes[start + 3 * (y * w + x) + c]);
                image[(c * h + y) * w + x] = static_cast<float>(v) * scale;
            }
        }
    }
    return image;
}

std::string encode_ppm(const Tensor& image) {
    require(image.rank() == 3 && image.dim(0) == 3, ErrorKind::dimension, "PPM needs a [3 x H x W] image");
    const auto h = image.dim(1), w = image.dim(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + 3 * w * h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(image[(c * h + y) * w + x], 0.0f, 1.0f);
                out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
            }
        }
    }
    return out;
}

Tensor read_ppm(const std::filesystem::path& path) {
    return decode_ppm(read_file_bytes(path));
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
    write_file_bytes(path, encode_ppm(image));
}

Tensor load_image(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        return decode_ppm(bytes);
    }
    const TensorFile file = decode_tensor_file(bytes);
    auto it = file.tensors.find("image");
    require(it != file.tensors.end(), ErrorKind::format, path.string() + ": tensor file has no 'image' tensor");
    require(it->second.rank() == 3 && it->second.dim(0) == 3,
            ErrorKind::format,
            path.string() + ": image tensor must be [3 x H x W]");
    return it->second;
}

void save_image_tensor(const Tensor& image, const std::filesystem::path& path) {
    TensorFile file;
    file.tensors.emplace("image", image);
    write_tensor_file(file, path);
}

}  // namespace repiece::image_io
