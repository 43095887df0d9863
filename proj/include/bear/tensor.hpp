#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bear/errors.hpp"

namespace bear {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array. The shape is fixed at construction; reshape() returns
/// a new tensor. Image-like tensors use H x W x C (channels innermost).
template <class T>
class Tensor {
public:
    using value_type = T;

    /// Rank-0 scalar holding zero.
    Tensor() : data_(1, T{0}) {}

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_extents();
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("tensor data holds " + std::to_string(data_.size()) + " elements but shape " +
                             shape_to_string(shape_) + " needs " + std::to_string(shape_size(shape_)));
        }
    }

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
        }
        return shape_[axis];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // H x W x C accessors.
    T& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * shape_[1] + x) * shape_[2] + c]; }
    const T& at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    T item() const {
        if (data_.size() != 1) {
            throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
        }
        return data_[0];
    }

    Tensor reshape(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Tensor& other) const = default;

private:
    void check_extents() const {
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] == 0) {
                throw ShapeError("axis " + std::to_string(i) + " has zero extent in " + shape_to_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Throws ShapeError unless `t` is rank 3 (H x W x C). `what` names the operand.
template <class T>
void require_hwc(const Tensor<T>& t, const char* what) {
    if (t.rank() != 3) {
        throw ShapeError(std::string(what) + " must be H x W x C, got " + shape_to_string(t.shape()));
    }
}

/// Mean over each r x r block, per channel.
template <class T>
Tensor<T> downsample_avg(const Tensor<T>& x, std::size_t r);

/// Replicates each pixel into a factor x factor block.
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor);

/// Channels [begin, begin + count) of an H x W x C tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace bear
