#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mgfusion/errors.hpp"

namespace mgfusion::ad {

using Shape = std::vector<std::size_t>;

// Every buffer starts on a 64-byte boundary. Eigen's vectorised kernels peel
// differently depending on alignment, so without this the rounding of a
// product can change from one allocation to the next.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major block of f64 values. A scalar has an empty shape.
class Array {
public:
    Array() = default;

    explicit Array(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {
        check_dims();
    }

    Array(Shape shape, std::initializer_list<double> values)
        : Array(std::move(shape), Storage(values.begin(), values.end())) {}

    Array(Shape shape, const std::vector<double>& values)
        : Array(std::move(shape), Storage(values.begin(), values.end())) {}

    Array(Shape shape, Storage values) : shape_(std::move(shape)), data_(std::move(values)) {
        check_dims();
        if (data_.size() != numel(shape_)) {
            throw ShapeError("array of shape " + shape_str(shape_) + " needs " + std::to_string(numel(shape_)) +
                             " values, got " + std::to_string(data_.size()));
        }
    }

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

    static Array vector(std::vector<double> values) {
        Shape s{values.size()};
        return Array(std::move(s), std::move(values));
    }

    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Array(Shape{rows, cols}, std::move(values));
    }

    static Array identity(std::size_t n) {
        Array a(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) a.data_[i * n + i] = 1.0;
        return a;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    Storage& storage() noexcept { return data_; }
    const Storage& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Same values under a new shape with the same element count.
    Array reshaped(Shape shape) const {
        if (numel(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Array(std::move(shape), data_);
    }

    bool operator==(const Array&) const = default;

private:
    void check_dims() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    Storage data_;
};

}  // namespace mgfusion::ad
