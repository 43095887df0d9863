#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bear/ops.hpp"
#include "bear/rng.hpp"

namespace bear::nn {

using ad::Var;

/// Convolutional LSTM weights bound to a tape. Gates are stacked along the
/// last kernel axis in the order (input, forget, cell-candidate, output), each
/// occupying `filters` consecutive slots.
template <class T>
struct ConvLstmParams {
    Var<T> input_kernels;      // k x k x 1 x 4F
    Var<T> recurrent_kernels;  // k x k x F x 4F
    Var<T> biases;             // 4F
    std::size_t filters = 0;
    std::size_t kernel = 0;
};

/// Hidden and cell state. Default-constructed means the all-zero state.
template <class T>
struct LstmState {
    Var<T> h;
    Var<T> c;

    bool is_zero() const { return !h.valid(); }
};

/// One ConvLSTM update with same padding:
///   i = sig(Wxi*x + Whi*h + bi)   f = sig(...)   g = tanh(...)   o = sig(...)
///   c' = f.c + i.g                h' = o.tanh(c')
/// No peephole terms. A zero previous state skips the recurrent convolution.
template <class T>
LstmState<T> convlstm_step(Var<T> x_t, const LstmState<T>& prev, const ConvLstmParams<T>& p);

/// Runs convlstm_step over the channel slices of `x` (H x W x d) in storage
/// order from a zero state and returns the final hidden state (H x W x F).
template <class T>
Var<T> convlstm_over_channels(Var<T> x, const ConvLstmParams<T>& p);

enum class Merge { concat, mean };

template <class T>
struct ConvBranch {
    Var<T> kernel;  // k x k x C x F
    Var<T> bias;    // F
};

template <class T>
struct ParallelConvParams {
    std::vector<ConvBranch<T>> branches;
    Merge merge = Merge::mean;
};

/// Applies every branch (same padding, stride 1) and merges by channel
/// concatenation in branch order or by elementwise mean.
template <class T>
Var<T> parallel_conv(Var<T> x, const ParallelConvParams<T>& p);

/// lambda * sum ||W||^2 over `weights`.
template <class T>
Var<T> l2_penalty(ad::Tape<T>& tape, std::span<const Var<T>> weights, T lambda);

/// L2 penalty restricted to ConvLSTM recurrent kernels (names ending in
/// "/recurrent-kernels") of `params`.
template <class T>
Var<T> recurrent_l2_penalty(ad::Tape<T>& tape, const ParameterSet<T>& params, T lambda);

inline constexpr std::string_view recurrent_suffix{"/recurrent-kernels"};

// Parameter creation and binding. Names follow <prefix>/<tensor>, e.g.
// "pfe/convlstm1/input-kernels".

/// Glorot-uniform tensor: U(+-sqrt(6 / (fan_in + fan_out))).
template <class T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <class T>
void add_convlstm(ParameterSet<T>& set, const std::string& prefix, std::size_t filters, std::size_t kernel, Rng& rng);
template <class T>
ConvLstmParams<T> bind_convlstm(ad::Tape<T>& tape, const ParameterSet<T>& set, const std::string& prefix);

template <class T>
void add_conv(ParameterSet<T>& set, const std::string& prefix, std::size_t kernel, std::size_t in_channels,
              std::size_t filters, Rng& rng);
template <class T>
ConvBranch<T> bind_conv(ad::Tape<T>& tape, const ParameterSet<T>& set, const std::string& prefix);

template <class T>
void add_dense(ParameterSet<T>& set, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

}  // namespace bear::nn
