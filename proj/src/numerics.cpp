// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/numerics.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "repiece/error.hpp"

namespace repiece::numerics {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* name) {
    require(t.rank() == rank,
            ErrorKind::dimension,
            std::string(name) + " must be rank " + std::to_string(rank) + ", got " + shape_to_string(t.shape()));
}

}  // namespace

void check_finite(const Tensor& t, const char* what) {
    require(t.all_finite(), ErrorKind::numeric, std::string("non-finite value in ") + what);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k,
            ErrorKind::dimension,
            "matmul inner dimensions disagree: " + shape_to_string(a.shape()) + " * " + shape_to_string(b.shape()));
    Tensor out({m, n});
    ConstMap lhs(a.data().data(), m, k);
    ConstMap rhs(b.data().data(), k, n);
    MutMap dst(out.data().data(), m, n);
    dst.noalias() = lhs * rhs;
    check_finite(out, "matmul output");
    return out;
}

Tensor linear(const Tensor& a, const Tensor& b, const Tensor& bias) {
    Tensor out = matmul(a, b);
    const auto n = out.dim(1);
    require(bias.numel() == n, ErrorKind::dimension, "bias length does not match output width");
    for (std::size_t r = 0; r < out.dim(0); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < n; ++c) {
            row[c] += bias[c];
        }
    }
    return out;
}

void softmax_inplace(std::span<float> row, float scale) {
    require(scale > 0.0f, ErrorKind::precondition, "softmax scale must be positive");
    float max_v = -std::numeric_limits<float>::infinity();
    for (float v : row) {
        require(std::isfinite(v), ErrorKind::numeric, "non-finite softmax input");
        max_v = std::max(max_v, v);
    }
    double sum = 0.0;
    for (float& v : row) {
        v = std::exp((v - max_v) / scale);
        sum += v;
    }
    const auto inv = static_cast<float>(1.0 / sum);
    for (float& v : row) {
        v *= inv;
    }
}

Tensor softmax_rows(const Tensor& t, float scale) {
    require_rank(t, 2, "softmax input");
    Tensor out = t;
    for (std::size_t r = 0; r < out.dim(0); ++r) {
        softmax_inplace(out.row(r), scale);
    }
    return out;
}

Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank(t, 2, "layer_norm input");
    require(eps > 0.0f, ErrorKind::precondition, "layer_norm eps must be positive");
    const auto d = t.dim(1);
    require(gamma.numel() == d && beta.numel() == d, ErrorKind::dimension, "layer_norm affine width mismatch");
    Tensor out({t.dim(0), d});
    for (std::size_t r = 0; r < t.dim(0); ++r) {
        auto src = t.row(r);
        auto dst = out.row(r);
        double mean = 0.0;
        for (float v : src) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : src) {
            const double c = v - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            dst[c] = static_cast<float>((src[c] - mean) * inv_std) * gamma[c] + beta[c];
        }
    }
    return out;
}

float gelu(float x) noexcept {
    return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(M_SQRT1_2)));
}

Tensor gelu(const Tensor& t) {
    Tensor out = t;
    for (float& v : out.data()) {
        v = gelu(v);
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    require(stride > 0 && padding >= 0, ErrorKind::precondition, "conv2d needs stride > 0 and padding >= 0");
    const auto channels = static_cast<long>(input.dim(0));
    const auto height = static_cast<long>(input.dim(1));
    const auto width = static_cast<long>(input.dim(2));
    const auto filters = kernels.dim(0);
    const auto kh = static_cast<long>(kernels.dim(2));
    const auto kw = static_cast<long>(kernels.dim(3));
    require(static_cast<long>(kernels.dim(1)) == channels, ErrorKind::dimension, "conv2d channel mismatch");
    require(bias.numel() == filters, ErrorKind::dimension, "conv2d bias length mismatch");
    const long out_h = (height + 2 * padding - kh) / stride + 1;
    const long out_w = (width + 2 * padding - kw) / stride + 1;
    require(height + 2 * padding - kh >= 0 && out_h >= 1 && width + 2 * padding - kw >= 0 && out_w >= 1,
            ErrorKind::dimension,
            "conv2d output extent is not positive");

    // im2col: [C*kh*kw x out_h*out_w], then one GEMM against the flattened kernels.
    const long patch = channels * kh * kw;
    const long cells = out_h * out_w;
    RowMatrix columns = RowMatrix::Zero(patch, cells);
    auto src = input.data();
    for (long c = 0; c < channels; ++c) {
        for (long i = 0; i < kh; ++i) {
            for (long j = 0; j < kw; ++j) {
                const long col_row = (c * kh + i) * kw + j;
                for (long oy = 0; oy < out_h; ++oy) {
                    const long y = oy * stride - padding + i;
                    if (y < 0 || y >= height) {
                        continue;
                    }
                    for (long ox = 0; ox < out_w; ++ox) {
                        const long x = ox * stride - padding + j;
                        if (x >= 0 && x < width) {
                            columns(col_row, oy * out_w + ox) = src[(c * height + y) * width + x];
                        }
                    }
                }
            }
        }
    }
    Tensor out({filters, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});
    ConstMap weights(kernels.data().data(), static_cast<long>(filters), patch);
    MutMap dst(out.data().data(), static_cast<long>(filters), cells);
    dst.noalias() = weights * columns;
    for (std::size_t f = 0; f < filters; ++f) {
        dst.row(static_cast<long>(f)).array() += bias[f];
    }
    check_finite(out, "conv2d output");
    return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), ErrorKind::dimension, "cosine_similarity length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorKind::degenerate_input, "cosine_similarity of a zero-norm vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    return cosine_similarity(a.data(), b.data());
}

}  // namespace repiece::numerics
