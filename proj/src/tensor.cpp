// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "repiece/error.hpp"

namespace repiece {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::dimension:
        return "dimension error";
    case ErrorKind::numeric:
        return "numeric error";
    case ErrorKind::range:
        return "range error";
    case ErrorKind::degenerate_input:
        return "degenerate input";
    case ErrorKind::precondition:
        return "precondition error";
    case ErrorKind::format:
        return "format error";
    case ErrorKind::config:
        return "config error";
    case ErrorKind::io:
        return "I/O error";
    }
    return "error";
}

void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, float fill) : m_shape(std::move(shape)), m_data(shape_numel(m_shape), fill) {
    for (auto extent : m_shape) {
        require(extent > 0, ErrorKind::dimension, "tensor extents must be positive, got " + shape_to_string(m_shape));
    }
}

Tensor::Tensor(Shape shape, std::vector<float> data) : m_shape(std::move(shape)), m_data(std::move(data)) {
    for (auto extent : m_shape) {
        require(extent > 0, ErrorKind::dimension, "tensor extents must be positive, got " + shape_to_string(m_shape));
    }
    require(m_data.size() == shape_numel(m_shape),
            ErrorKind::dimension,
            "data length " + std::to_string(m_data.size()) + " does not match shape " + shape_to_string(m_shape));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    require(rows.size() > 0, ErrorKind::dimension, "from_rows needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        require(r.size() == cols, ErrorKind::dimension, "ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
    return Tensor({values.size()}, std::vector<float>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0f;
    }
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < m_shape.size(), ErrorKind::dimension, "axis out of range for " + shape_to_string(m_shape));
    return m_shape[axis];
}

std::span<float> Tensor::row(std::size_t r) {
    const std::size_t cols = m_shape.back();
    return std::span<float>(m_data).subspan(r * cols, cols);
}

std::span<const float> Tensor::row(std::size_t r) const {
    const std::size_t cols = m_shape.back();
    return std::span<const float>(m_data).subspan(r * cols, cols);
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(),
            ErrorKind::dimension,
            "cannot reshape " + shape_to_string(m_shape) + " to " + shape_to_string(shape));
    return Tensor(std::move(shape), m_data);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace repiece
