// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace repiece::synthetic {

namespace {

double uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Tensor smooth_image(std::uint64_t seed, std::size_t size) {
    std::mt19937_64 rng(seed ^ 0x5ca1ab1eull);
    Tensor image({3, size, size});
    const double s = static_cast<double>(size);
    for (std::size_t c = 0; c < 3; ++c) {
        const double base = 0.2 + 0.6 * uniform(rng);
        const double gx = uniform(rng) - 0.5, gy = uniform(rng) - 0.5;
        struct Wave {
            double fx, fy, phase, amp;
        };
        Wave waves[3];
        for (auto& w : waves) {
            w = {(uniform(rng) * 3.0), (uniform(rng) * 3.0), uniform(rng) * 2.0 * M_PI, 0.05 + 0.1 * uniform(rng)};
        }
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double u = static_cast<double>(x) / s, v = static_cast<double>(y) / s;
                double value = base + 0.4 * (gx * (u - 0.5) + gy * (v - 0.5));
                for (const auto& w : waves) {
                    value += w.amp * std::sin(2.0 * M_PI * (w.fx * u + w.fy * v) + w.phase);
                }
                image[(c * size + y) * size + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
        }
    }
    return image;
}

Tensor noise_image(std::uint64_t seed, std::size_t size) {
    std::mt19937_64 rng(seed);
    Tensor image({3, size, size});
    for (auto& v : image.data()) {
        v = static_cast<float>(uniform(rng));
    }
    return image;
}

Tensor horizontal_gradient(std::size_t size) {
    Tensor image({3, size, size});
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                image[(c * size + y) * size + x] = static_cast<float>(x) / static_cast<float>(size - 1);
            }
        }
    }
    return image;
}

}  // namespace repiece::synthetic
