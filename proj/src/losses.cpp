#include "bear/losses.hpp"

#include <algorithm>
#include <cmath>

namespace bear::train {

namespace {

template <class T>
void check_shapes(const Tensor<T>& target, const Tensor<T>& prediction, const char* name) {
    if (target.shape() != prediction.shape()) {
        throw ShapeError(std::string(name) + ": target " + shape_to_string(target.shape()) + " vs prediction " +
                         shape_to_string(prediction.shape()));
    }
}

}  // namespace

template <class T>
ad::Var<T> bce_loss(const Tensor<T>& target, ad::Var<T> prediction) {
    const auto& xh = prediction.value();
    check_shapes(target, xh, "bce_loss");
    const T floor = static_cast<T>(bce_log_floor);
    const std::size_t n = xh.size();
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T x = target[i];
        acc += x * std::log(std::max(xh[i], floor)) + (T{1} - x) * std::log(std::max(T{1} - xh[i], floor));
    }
    const T inv = T{1} / static_cast<T>(n);
    return prediction.tape().record(
        ad::OpKind::bce, Tensor<T>::scalar(-acc * inv), {prediction},
        [prediction, target, floor, inv](ad::Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
            const auto& p = prediction.value();
            T* g = t.grad_buffer(prediction.id()).raw();
            const T scale = go[0] * inv;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const T x = target[i];
                T d{0};
                if (p[i] > floor) {
                    d -= x / p[i];
                }
                if (T{1} - p[i] > floor) {
                    d += (T{1} - x) / (T{1} - p[i]);
                }
                g[i] += scale * d;
            }
        });
}

template <class T>
ad::Var<T> mse_loss(const Tensor<T>& target, ad::Var<T> prediction) {
    const auto& xh = prediction.value();
    check_shapes(target, xh, "mse_loss");
    const std::size_t n = xh.size();
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T diff = xh[i] - target[i];
        acc += diff * diff;
    }
    const T inv = T{1} / static_cast<T>(n);
    return prediction.tape().record(ad::OpKind::mse, Tensor<T>::scalar(acc * inv), {prediction},
                                    [prediction, target, inv](ad::Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                                        const auto& p = prediction.value();
                                        T* g = t.grad_buffer(prediction.id()).raw();
                                        const T scale = T{2} * go[0] * inv;
                                        for (std::size_t i = 0; i < p.size(); ++i) {
                                            g[i] += scale * (p[i] - target[i]);
                                        }
                                    });
}

template ad::Var<float> bce_loss<float>(const Tensor<float>&, ad::Var<float>);
template ad::Var<double> bce_loss<double>(const Tensor<double>&, ad::Var<double>);
template ad::Var<float> mse_loss<float>(const Tensor<float>&, ad::Var<float>);
template ad::Var<double> mse_loss<double>(const Tensor<double>&, ad::Var<double>);

}  // namespace bear::train
