#pragma once

#include "bear/autodiff.hpp"

namespace bear::train {

inline constexpr double bce_log_floor = 1e-7;

/// -mean[x log(xh) + (1 - x) log(1 - xh)] over every element, with both log
/// arguments clamped below at `bce_log_floor`. Clamped terms pass no gradient.
template <class T>
ad::Var<T> bce_loss(const Tensor<T>& target, ad::Var<T> prediction);

/// mean (xh - x)^2 over every element.
template <class T>
ad::Var<T> mse_loss(const Tensor<T>& target, ad::Var<T> prediction);

}  // namespace bear::train
