#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bear/tensor.hpp"

namespace bear {

/// Named trainable tensors with gradient slots, iterated in insertion order.
template <class T>
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
    };

    void add(std::string name, Tensor<T> value) {
        if (index_.contains(name)) {
            throw ConfigError("duplicate parameter name '" + name + "'");
        }
        index_.emplace(name, entries_.size());
        Tensor<T> grad(value.shape());
        entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
    }

    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    std::size_t index_of(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            throw ConfigError("unknown parameter '" + std::string(name) + "'");
        }
        return it->second;
    }

    Entry& entry(std::string_view name) { return entries_[index_of(name)]; }
    const Entry& entry(std::string_view name) const { return entries_[index_of(name)]; }

    Tensor<T>& value(std::string_view name) { return entry(name).value; }
    const Tensor<T>& value(std::string_view name) const { return entry(name).value; }
    Tensor<T>& grad(std::string_view name) { return entry(name).grad; }
    const Tensor<T>& grad(std::string_view name) const { return entry(name).grad; }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::size_t element_count() const {
        std::size_t total = 0;
        for (const auto& e : entries_) {
            total += e.value.size();
        }
        return total;
    }

    void zero_grad() {
        for (auto& e : entries_) {
            e.grad.fill(T{0});
        }
    }

    template <class U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& e : entries_) {
            out.add(e.name, e.value.template cast<U>());
        }
        return out;
    }

    /// Same names, same order, same values. Gradients are ignored.
    bool same_values(const ParameterSet& other) const {
        if (entries_.size() != other.entries_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name || !(entries_[i].value == other.entries_[i].value)) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace bear
