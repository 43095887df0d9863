#pragma once

#include <cstddef>
#include <span>

#include "bear/autodiff.hpp"

namespace bear::ad {

enum class Padding { same, valid };
enum class Activation { sigmoid, tanh };

/// Output extent of a convolution along one axis.
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, Padding padding);

/// input H x W x C, kernel kh x kw x C x F, bias F (may be invalid for no bias).
/// `same` pads so that the output extent is ceil(H / stride); kernels must be odd.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, std::size_t stride = 1, Padding padding = Padding::same);

/// input p, weights p x q, bias q.
template <class T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias);

template <class T>
Var<T> activation(Var<T> x, Activation kind);
template <class T>
Var<T> sigmoid(Var<T> x) {
    return activation(x, Activation::sigmoid);
}
template <class T>
Var<T> tanh(Var<T> x) {
    return activation(x, Activation::tanh);
}

template <class T>
Var<T> add(Var<T> a, Var<T> b);
/// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scale(Var<T> x, T factor);
/// Elementwise mean of equally shaped operands.
template <class T>
Var<T> average(std::span<const Var<T>> xs);

template <class T>
Var<T> sum(Var<T> x);
template <class T>
Var<T> mean(Var<T> x);
template <class T>
Var<T> sum_squares(Var<T> x);

template <class T>
Var<T> downsample_avg(Var<T> x, std::size_t r);
template <class T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor);
template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b);
template <class T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count);
template <class T>
Var<T> reshape(Var<T> x, Shape shape);

}  // namespace bear::ad
