#ifndef TREENET_TENSOR_HPP
#define TREENET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "memory.hpp"

namespace treenet {

/// Per-sample shape (channels x height x width).
struct TensorShape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    bool operator==(const TensorShape&) const = default;

    std::string str() const { return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w); }
};

/// Batched NCHW shape.
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    Shape4() = default;
    Shape4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}
    Shape4(int n_, TensorShape s) : n(n_), c(s.c), h(s.h), w(s.w) {}

    std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
    TensorShape sample() const { return {c, h, w}; }
    bool operator==(const Shape4&) const = default;

    std::string str() const { return std::to_string(n) + "x" + sample().str(); }
};

/// Dense NCHW tensor with value semantics. Storage is counted by the
/// MemoryTracker.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using Storage = std::vector<T, TrackingAllocator<T>>;

    Tensor() = default;
    explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill)
    {
        require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0, ErrorKind::shape,
                "negative tensor dimension " + shape.str());
    }
    Tensor(int n, TensorShape s, T fill = T(0)) : Tensor(Shape4(n, s), fill) {}

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return {data_.data(), data_.size()}; }
    std::span<const T> span() const { return {data_.data(), data_.size()}; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int h, int w) const
    {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    T* sample_data(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(); }
    const T* sample_data(int n) const { return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Samples [first, first + count) as a new tensor.
    Tensor slice(int first, int count) const
    {
        require(first >= 0 && count >= 0 && first + count <= shape_.n, ErrorKind::shape,
                "slice out of range on batch of " + std::to_string(shape_.n));
        Tensor out(Shape4(count, shape_.sample()));
        std::copy_n(sample_data(first), out.size(), out.data());
        return out;
    }

    /// Samples selected by index, in the given order.
    Tensor gather(std::span<const int> indices) const
    {
        Tensor out(Shape4(static_cast<int>(indices.size()), shape_.sample()));
        const std::size_t step = shape_.sample_size();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            require(indices[i] >= 0 && indices[i] < shape_.n, ErrorKind::shape, "gather index out of range");
            std::copy_n(sample_data(indices[i]), step, out.data() + i * step);
        }
        return out;
    }

    /// Stack single-or-multi-sample tensors of identical per-sample shape.
    static Tensor concat(std::span<const Tensor* const> parts)
    {
        if (parts.empty())
            return {};
        const TensorShape s = parts.front()->shape().sample();
        int total = 0;
        for (const Tensor* p : parts) {
            require(p->shape().sample() == s, ErrorKind::shape,
                    "cannot stack " + p->shape().sample().str() + " with " + s.str());
            total += p->shape().n;
        }
        Tensor out(Shape4(total, s));
        T* dst = out.data();
        for (const Tensor* p : parts)
            dst = std::copy_n(p->data(), p->size(), dst);
        return out;
    }

    template <typename U>
    Tensor<U> cast() const
    {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T min() const { return data_.empty() ? T(0) : *std::min_element(data_.begin(), data_.end()); }
    T max() const { return data_.empty() ? T(0) : *std::max_element(data_.begin(), data_.end()); }

    /// Reinterpret with a new shape of the same element count.
    void reshape(Shape4 shape)
    {
        require(shape.size() == data_.size(), ErrorKind::shape,
                "reshape " + shape_.str() + " -> " + shape.str() + " changes element count");
        shape_ = shape;
    }

    /// Drop storage (used to release dead activations).
    void release()
    {
        Storage().swap(data_);
        shape_ = {};
    }

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    Shape4 shape_;
    Storage data_;
};

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts)
{
    std::vector<const Tensor<T>*> ptrs;
    ptrs.reserve(parts.size());
    for (const auto& p : parts)
        ptrs.push_back(&p);
    return Tensor<T>::concat(ptrs);
}

} // namespace treenet

#endif // TREENET_TENSOR_HPP
