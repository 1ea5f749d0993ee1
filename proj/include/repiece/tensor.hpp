// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace repiece {

using Shape = std::vector<std::size_t>;

/// Dense row-major float32 array. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor vector(std::initializer_list<float> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept {
        return m_shape;
    }
    std::size_t rank() const noexcept {
        return m_shape.size();
    }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept {
        return m_data.size();
    }

    std::span<float> data() noexcept {
        return m_data;
    }
    std::span<const float> data() const noexcept {
        return m_data;
    }
    std::vector<float>& storage() noexcept {
        return m_data;
    }

    float& operator[](std::size_t i) noexcept {
        return m_data[i];
    }
    float operator[](std::size_t i) const noexcept {
        return m_data[i];
    }

    // 2-D accessors; the tensor must be rank 2.
    float& at(std::size_t r, std::size_t c) noexcept {
        return m_data[r * m_shape[1] + c];
    }
    float at(std::size_t r, std::size_t c) const noexcept {
        return m_data[r * m_shape[1] + c];
    }
    std::span<float> row(std::size_t r);
    std::span<const float> row(std::size_t r) const;

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape m_shape;
    std::vector<float> m_data;
};

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

}  // namespace repiece
