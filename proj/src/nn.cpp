#include "bear/nn.hpp"

#include <cmath>

namespace bear::nn {

template <class T>
LstmState<T> convlstm_step(Var<T> x_t, const LstmState<T>& prev, const ConvLstmParams<T>& p) {
    const std::size_t f = p.filters;
    require_hwc(x_t.value(), "convlstm_step input");
    if (!prev.is_zero()) {
        const Shape expected{x_t.value().dim(0), x_t.value().dim(1), f};
        if (prev.h.shape() != expected) {
            throw ShapeError("convlstm_step hidden state must be " + shape_to_string(expected) + ", got " +
                             shape_to_string(prev.h.shape()));
        }
        if (prev.c.shape() != expected) {
            throw ShapeError("convlstm_step cell state must be " + shape_to_string(expected) + ", got " +
                             shape_to_string(prev.c.shape()));
        }
    }

    Var<T> pre = ad::conv2d(x_t, p.input_kernels, p.biases);
    if (!prev.is_zero()) {
        pre = ad::add(pre, ad::conv2d(prev.h, p.recurrent_kernels, Var<T>{}));
    }
    const Var<T> i = ad::sigmoid(ad::slice_channels(pre, 0, f));
    const Var<T> g = ad::tanh(ad::slice_channels(pre, 2 * f, f));
    const Var<T> o = ad::sigmoid(ad::slice_channels(pre, 3 * f, f));
    Var<T> c = ad::mul(i, g);
    if (!prev.is_zero()) {
        const Var<T> forget = ad::sigmoid(ad::slice_channels(pre, f, f));
        c = ad::add(ad::mul(forget, prev.c), c);
    }
    const Var<T> h = ad::mul(o, ad::tanh(c));
    return LstmState<T>{h, c};
}

template <class T>
Var<T> convlstm_over_channels(Var<T> x, const ConvLstmParams<T>& p) {
    require_hwc(x.value(), "convlstm_over_channels input");
    const std::size_t steps = x.value().dim(2);
    LstmState<T> state;
    for (std::size_t t = 0; t < steps; ++t) {
        const Var<T> x_t = steps == 1 ? x : ad::slice_channels(x, t, 1);
        state = convlstm_step(x_t, state, p);
    }
    return state.h;
}

template <class T>
Var<T> parallel_conv(Var<T> x, const ParallelConvParams<T>& p) {
    if (p.branches.empty()) {
        throw ShapeError("parallel_conv needs at least one branch");
    }
    std::vector<Var<T>> outs;
    outs.reserve(p.branches.size());
    for (const auto& b : p.branches) {
        outs.push_back(ad::conv2d(x, b.kernel, b.bias));
    }
    if (p.merge == Merge::mean) {
        return outs.size() == 1 ? outs.front() : ad::average<T>(outs);
    }
    Var<T> merged = outs.front();
    for (std::size_t k = 1; k < outs.size(); ++k) {
        merged = ad::concat_channels(merged, outs[k]);
    }
    return merged;
}

template <class T>
Var<T> l2_penalty(ad::Tape<T>& tape, std::span<const Var<T>> weights, T lambda) {
    Var<T> total = tape.constant(Tensor<T>::scalar(T{0}));
    for (const auto& w : weights) {
        total = ad::add(total, ad::sum_squares(w));
    }
    return ad::scale(total, lambda);
}

template <class T>
Var<T> recurrent_l2_penalty(ad::Tape<T>& tape, const ParameterSet<T>& params, T lambda) {
    std::vector<Var<T>> weights;
    for (const auto& e : params) {
        if (e.name.ends_with(recurrent_suffix)) {
            weights.push_back(tape.parameter(params, e.name));
        }
    }
    return l2_penalty<T>(tape, weights, lambda);
}

template <class T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data()) {
        v = static_cast<T>(rng.uniform(-limit, limit));
    }
    return t;
}

template <class T>
void add_convlstm(ParameterSet<T>& set, const std::string& prefix, std::size_t filters, std::size_t kernel, Rng& rng) {
    const std::size_t k2 = kernel * kernel, gates = 4 * filters;
    set.add(prefix + "/input-kernels", glorot_uniform<T>({kernel, kernel, 1, gates}, k2, k2 * gates, rng));
    set.add(prefix + "/recurrent-kernels",
            glorot_uniform<T>({kernel, kernel, filters, gates}, k2 * filters, k2 * gates, rng));
    Tensor<T> biases({gates});
    for (std::size_t j = filters; j < 2 * filters; ++j) {
        biases[j] = T{1};
    }
    set.add(prefix + "/biases", std::move(biases));
}

template <class T>
ConvLstmParams<T> bind_convlstm(ad::Tape<T>& tape, const ParameterSet<T>& set, const std::string& prefix) {
    ConvLstmParams<T> p;
    p.input_kernels = tape.parameter(set, prefix + "/input-kernels");
    p.recurrent_kernels = tape.parameter(set, prefix + "/recurrent-kernels");
    p.biases = tape.parameter(set, prefix + "/biases");
    const auto& rk = p.recurrent_kernels.value();
    p.filters = rk.dim(2);
    p.kernel = rk.dim(0);
    if (rk.dim(3) != 4 * p.filters || p.input_kernels.value().dim(3) != 4 * p.filters) {
        throw ShapeError("ConvLSTM '" + prefix + "' gate axis must hold 4 x " + std::to_string(p.filters) + " filters");
    }
    return p;
}

template <class T>
void add_conv(ParameterSet<T>& set, const std::string& prefix, std::size_t kernel, std::size_t in_channels,
              std::size_t filters, Rng& rng) {
    const std::size_t k2 = kernel * kernel;
    set.add(prefix + "/kernel", glorot_uniform<T>({kernel, kernel, in_channels, filters}, k2 * in_channels, k2 * filters, rng));
    set.add(prefix + "/bias", Tensor<T>({filters}));
}

template <class T>
ConvBranch<T> bind_conv(ad::Tape<T>& tape, const ParameterSet<T>& set, const std::string& prefix) {
    return ConvBranch<T>{tape.parameter(set, prefix + "/kernel"), tape.parameter(set, prefix + "/bias")};
}

template <class T>
void add_dense(ParameterSet<T>& set, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    set.add(prefix + "/weights", glorot_uniform<T>({in, out}, in, out, rng));
    set.add(prefix + "/bias", Tensor<T>({out}));
}

#define BEAR_INSTANTIATE(T)                                                                                   \
    template LstmState<T> convlstm_step<T>(Var<T>, const LstmState<T>&, const ConvLstmParams<T>&);            \
    template Var<T> convlstm_over_channels<T>(Var<T>, const ConvLstmParams<T>&);                              \
    template Var<T> parallel_conv<T>(Var<T>, const ParallelConvParams<T>&);                                   \
    template Var<T> l2_penalty<T>(ad::Tape<T>&, std::span<const Var<T>>, T);                                  \
    template Var<T> recurrent_l2_penalty<T>(ad::Tape<T>&, const ParameterSet<T>&, T);                         \
    template Tensor<T> glorot_uniform<T>(Shape, std::size_t, std::size_t, Rng&);                              \
    template void add_convlstm<T>(ParameterSet<T>&, const std::string&, std::size_t, std::size_t, Rng&);      \
    template ConvLstmParams<T> bind_convlstm<T>(ad::Tape<T>&, const ParameterSet<T>&, const std::string&);    \
    template void add_conv<T>(ParameterSet<T>&, const std::string&, std::size_t, std::size_t, std::size_t,    \
                              Rng&);                                                                          \
    template ConvBranch<T> bind_conv<T>(ad::Tape<T>&, const ParameterSet<T>&, const std::string&);            \
    template void add_dense<T>(ParameterSet<T>&, const std::string&, std::size_t, std::size_t, Rng&);

BEAR_INSTANTIATE(float)
BEAR_INSTANTIATE(double)
#undef BEAR_INSTANTIATE

}  // namespace bear::nn
