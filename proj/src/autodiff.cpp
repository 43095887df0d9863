#include "bear/autodiff.hpp"

#include <stdexcept>

namespace bear::ad {

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::conv2d: return "conv2d";
        case OpKind::dense: return "dense";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh: return "tanh";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::average: return "average";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::sum_squares: return "sum_squares";
        case OpKind::downsample_avg: return "downsample_avg";
        case OpKind::upsample_nearest: return "upsample_nearest";
        case OpKind::concat_channels: return "concat_channels";
        case OpKind::slice_channels: return "slice_channels";
        case OpKind::reshape: return "reshape";
        case OpKind::bce: return "bce";
        case OpKind::mse: return "mse";
    }
    return "unknown";
}

template <class T>
Var<T> Tape<T>::push(OpKind kind, Tensor<T> value, const Tensor<T>* external, bool requires_grad,
                     BackwardFn backward) {
    if (swept_) {
        throw std::logic_error("cannot record on a tape after backward()");
    }
    Node n;
    n.owned = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.kind = kind;
    if (requires_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::parameter(const ParameterSet<T>& params, std::string_view name) {
    const std::string key(name);
    if (const auto it = bound_.find(key); it != bound_.end()) {
        return Var<T>(this, it->second);
    }
    const auto& entry = params.entry(name);
    auto v = push(OpKind::leaf, Tensor<T>(), &entry.value, true, {});
    bound_.emplace(key, v.id());
    bindings_.emplace_back(key, v.id());
    return v;
}

template <class T>
Var<T> Tape<T>::record(OpKind kind, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.valid()) {
            if (&in.tape() != this) {
                throw std::logic_error("operand recorded on a different tape");
            }
            needs = needs || requires_grad(in.id());
        }
    }
    return push(kind, std::move(value), nullptr, needs, std::move(backward));
}

template <class T>
Var<T> Tape<T>::record(OpKind kind, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
        if (&in.tape() != this) {
            throw std::logic_error("operand recorded on a different tape");
        }
        needs = needs || requires_grad(in.id());
    }
    return push(kind, std::move(value), nullptr, needs, std::move(backward));
}

template <class T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
    Node& n = node(id);
    if (!n.has_grad) {
        n.grad = Tensor<T>(n.value().shape());
        n.has_grad = true;
    }
    return n.grad;
}

template <class T>
const Tensor<T>* Tape<T>::grad(std::size_t id) const {
    const Node& n = node(id);
    return n.has_grad ? &n.grad : nullptr;
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
    if (!loss.valid() || &loss.tape() != this) {
        throw std::logic_error("loss is not recorded on this tape");
    }
    if (loss.value().size() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    if (swept_) {
        throw std::logic_error("backward() already ran on this tape");
    }
    swept_ = true;
    if (!requires_grad(loss.id())) {
        return;
    }
    grad_buffer(loss.id()).fill(T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward) {
            continue;
        }
        if (options_.faulty_op && *options_.faulty_op == n.kind) {
            Tensor<T> scaled = n.grad;
            for (auto& g : scaled.data()) {
                g *= static_cast<T>(options_.fault_scale);
            }
            n.backward(*this, n.value(), scaled);
        } else {
            n.backward(*this, n.value(), n.grad);
        }
        // Interior gradients are no longer needed once propagated.
        if (n.kind != OpKind::leaf) {
            n.grad = Tensor<T>();
            n.has_grad = false;
        }
    }
}

template <class T>
void Tape<T>::accumulate_into(ParameterSet<T>& params) const {
    for (const auto& [name, id] : bindings_) {
        const Tensor<T>* g = grad(id);
        if (g == nullptr) {
            continue;
        }
        auto& slot = params.grad(name);
        if (slot.shape() != g->shape()) {
            throw ShapeError("gradient shape mismatch for parameter '" + name + "'");
        }
        auto dst = slot.data();
        auto src = g->data();
        for (std::size_t k = 0; k < dst.size(); ++k) {
            dst[k] += src[k];
        }
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace bear::ad
