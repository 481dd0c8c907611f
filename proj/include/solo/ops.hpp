#pragma once

#include <cstddef>
#include <span>

#include "solo/tensor.hpp"

namespace solo::ops {

/// Cross-correlation of a [C_in,H,W] input with a [C_out,C_in,k,k] kernel.
///
/// Output extent per axis is floor((H + 2*padding - k) / stride) + 1. Each
/// output accumulates bias first, then products in (c_in, ky, kx) order, so
/// results are bit-reproducible and match a naive nested loop in that order.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0);

/// Align-corners bilinear resampling of a [C,H,W] tensor. Output index i maps
/// to input coordinate i*(H-1)/(out_h-1); a single-pixel output axis samples
/// coordinate 0.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

enum class Pointwise { sigmoid, relu };

template <typename T>
Tensor<T> pointwise(const Tensor<T>& input, Pointwise fn);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input)
{
    return pointwise(input, Pointwise::sigmoid);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input)
{
    return pointwise(input, Pointwise::relu);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& input);

template <typename T>
Tensor<T> mean(const Tensor<T>& input);

/// Rows (entries along axis 0) picked by index, in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& input, std::span<const std::size_t> rows);

/// Channel `index` of a [C,H,W] tensor as an [H,W] tensor.
template <typename T>
Tensor<T> select_channel(const Tensor<T>& input, std::size_t index);

/// Same data, new shape (element count must agree).
template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape);

/// [2,h,w] normalized pixel coordinates: channel 0 holds x, channel 1 holds y,
/// each spanning [-1, 1]. A length-1 axis yields 0.
template <typename T>
Tensor<T> coordinate_channels(std::size_t h, std::size_t w);

}  // namespace solo::ops
