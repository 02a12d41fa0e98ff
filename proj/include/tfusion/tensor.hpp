#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfusion {

template <typename T>
class GraphT;

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense row-major n-d array of T. Copies share the underlying buffer; data is
// treated as immutable once an op has consumed it, grad is the one mutable
// buffer (accumulated into by backward passes).
template <typename T>
struct TensorT {
    std::vector<int64_t> shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    GraphT<T>* graph = nullptr;  // set on op outputs recorded on a tape
    int node_id = -1;

    TensorT() = default;

    static TensorT zeros(std::vector<int64_t> shape) {
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(t.shape)), T(0));
        return t;
    }

    static TensorT full(std::vector<int64_t> shape, T value) {
        TensorT t = zeros(std::move(shape));
        for (T& x : *t.data) x = value;
        return t;
    }

    static TensorT scalar(T value) {
        TensorT t;
        t.shape = {};
        t.data = std::make_shared<std::vector<T>>(1, value);
        return t;
    }

    static TensorT from(std::vector<int64_t> shape, std::vector<T> values) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor::from: " + shape_str(shape) + " does not hold " +
                                        std::to_string(values.size()) + " values");
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    static TensorT param(std::vector<int64_t> shape) {
        TensorT t = zeros(std::move(shape));
        t.requires_grad = true;
        t.grad = std::make_shared<std::vector<T>>(t.data->size(), T(0));
        return t;
    }

    int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T& operator[](int64_t i) { return (*data)[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return (*data)[static_cast<size_t>(i)]; }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
        return (*data)[0];
    }

    void set_requires_grad(bool on) {
        requires_grad = on;
        if (on && !grad) grad = std::make_shared<std::vector<T>>(data->size(), T(0));
    }

    void zero_grad() {
        if (grad)
            for (T& x : *grad) x = T(0);
    }

    // deep copy of the value buffer (grad not copied)
    TensorT clone() const {
        TensorT t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<T>>(*data);
        return t;
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& src) {
    TensorT<To> out;
    out.shape = src.shape;
    out.data = std::make_shared<std::vector<To>>(src.data->size());
    for (size_t i = 0; i < src.data->size(); ++i) (*out.data)[i] = static_cast<To>((*src.data)[i]);
    out.requires_grad = src.requires_grad;
    if (src.requires_grad) out.grad = std::make_shared<std::vector<To>>(src.data->size(), To(0));
    return out;
}

}  // namespace tfusion
