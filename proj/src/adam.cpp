#include "bear/adam.hpp"

#include <cmath>

namespace bear::train {

template <class T>
AdamState<T>::AdamState(const ParameterSet<T>& params) {
    for (const auto& e : params) {
        m_.emplace_back(e.value.shape());
        v_.emplace_back(e.value.shape());
    }
}

template <class T>
void AdamState<T>::step(ParameterSet<T>& params, double lr) {
    if (params.size() != m_.size()) {
        throw ShapeError("Adam state tracks " + std::to_string(m_.size()) + " tensors, parameter set has " +
                         std::to_string(params.size()));
    }
    for (const auto& e : params) {
        for (T g : e.grad.data()) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter '" + e.name + "'");
            }
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& e = params[k];
        T* w = e.value.raw();
        T* g = e.grad.raw();
        T* m = m_[k].raw();
        T* v = v_[k].raw();
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double gi = g[i];
            const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / c1;
            const double v_hat = vi / c2;
            w[i] = static_cast<T>(w[i] - lr * m_hat / (std::sqrt(v_hat) + epsilon));
            g[i] = T{0};
        }
    }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace bear::train
