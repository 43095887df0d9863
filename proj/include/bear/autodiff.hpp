#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bear/parameter_set.hpp"
#include "bear/tensor.hpp"

namespace bear::ad {

enum class OpKind : std::uint8_t {
    leaf,
    conv2d,
    dense,
    sigmoid,
    tanh,
    add,
    mul,
    scale,
    average,
    sum,
    mean,
    sum_squares,
    downsample_avg,
    upsample_nearest,
    concat_channels,
    slice_channels,
    reshape,
    bce,
    mse,
};

std::string_view to_string(OpKind kind);

/// Debug knobs. `faulty_op` multiplies the incoming gradient of every node of
/// that kind by `fault_scale` during backward; used to prove gradient checks
/// are sensitive to a broken rule.
struct TapeOptions {
    std::optional<OpKind> faulty_op;
    double fault_scale = 1.0;
};

template <class T>
class Tape;

/// Handle to a value recorded on a tape.
template <class T>
class Var {
public:
    Var() = default;

    bool valid() const noexcept { return tape_ != nullptr; }
    std::size_t id() const noexcept { return id_; }
    Tape<T>& tape() const { return *tape_; }
    const Tensor<T>& value() const { return tape_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const { return tape_->requires_grad(id_); }

private:
    friend class Tape<T>;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording. Nodes are appended in evaluation order and swept
/// once in reverse by backward(). References returned by value() stay valid for
/// the tape's lifetime.
template <class T>
class Tape {
public:
    /// Receives the node's output value and its gradient; adds into input
    /// gradients through grad_buffer().
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& out, const Tensor<T>& grad_out)>;

    explicit Tape(TapeOptions options = {}) : options_(std::move(options)) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value) { return push(OpKind::leaf, std::move(value), nullptr, false, {}); }
    Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
        return push(OpKind::leaf, std::move(value), nullptr, requires_grad, {});
    }

    /// Leaf referencing a parameter in place. Repeated requests for the same
    /// name return the same node, so a parameter used at several sites
    /// accumulates one gradient. `params` must outlive the tape.
    Var<T> parameter(const ParameterSet<T>& params, std::string_view name);

    /// Appends an op node. The node requires a gradient iff any input does;
    /// otherwise `backward` is dropped.
    Var<T> record(OpKind kind, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
    Var<T> record(OpKind kind, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

    const Tensor<T>& value(std::size_t id) const { return node(id).value(); }
    bool requires_grad(std::size_t id) const { return node(id).requires_grad; }

    /// Zero-initialized on first use.
    Tensor<T>& grad_buffer(std::size_t id);
    /// Null when no gradient reached the node.
    const Tensor<T>* grad(std::size_t id) const;

    /// Seeds d(loss)/d(loss) = 1 and sweeps once. The loss must hold exactly
    /// one element. A tape can be swept only once.
    void backward(Var<T> loss);

    /// Adds the gradient of every bound parameter into `params`' gradient slots.
    void accumulate_into(ParameterSet<T>& params) const;

    /// (parameter name, node id) in binding order.
    const std::vector<std::pair<std::string, std::size_t>>& bindings() const noexcept { return bindings_; }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        OpKind kind = OpKind::leaf;
        BackwardFn backward;

        const Tensor<T>& value() const { return external ? *external : owned; }
    };

    Node& node(std::size_t id) { return nodes_.at(id); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }

    Var<T> push(OpKind kind, Tensor<T> value, const Tensor<T>* external, bool requires_grad, BackwardFn backward);

    std::deque<Node> nodes_;
    TapeOptions options_;
    std::unordered_map<std::string, std::size_t> bound_;
    std::vector<std::pair<std::string, std::size_t>> bindings_;
    bool swept_ = false;
};

/// Sweeps the loss's tape and adds parameter gradients into `params`.
/// Gradients accumulate across calls until ParameterSet::zero_grad().
template <class T>
void backward(Var<T> loss, ParameterSet<T>& params) {
    loss.tape().backward(loss);
    loss.tape().accumulate_into(params);
}

}  // namespace bear::ad
