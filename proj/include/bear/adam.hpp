#pragma once

#include <cstdint>
#include <vector>

#include "bear/parameter_set.hpp"

namespace bear::train {

/// Per-parameter first and second moments for Adam.
template <class T>
class AdamState {
public:
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    explicit AdamState(const ParameterSet<T>& params);

    /// theta -= lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments,
    /// then zeroes every gradient. Throws NumericError (leaving parameters
    /// untouched) if any gradient is non-finite.
    void step(ParameterSet<T>& params, double lr);

    std::uint64_t steps() const noexcept { return t_; }
    const Tensor<T>& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor<T>& second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::uint64_t t_ = 0;
};

template <class T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr) {
    state.step(params, lr);
}

}  // namespace bear::train
