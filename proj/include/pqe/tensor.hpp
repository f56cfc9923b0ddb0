#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pqe/errors.hpp"

namespace pqe {

struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
    bool operator==(const Shape4&) const = default;
};

// N x C x H x W activations, W fastest.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {
        if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
            throw ArgumentError("tensor dimensions must be positive, got " + shape.str());
    }
    BasicTensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape.count())
            throw ArgumentError("tensor data size " + std::to_string(data_.size()) + " does not match " + shape.str());
    }

    const Shape4& shape() const noexcept { return shape_; }
    int n() const noexcept { return shape_.n; }
    int c() const noexcept { return shape_.c; }
    int h() const noexcept { return shape_.h; }
    int w() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(shape_.h) * shape_.w; }

    std::size_t offset(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
    T at(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }

    // Contiguous H*W plane of one (sample, channel).
    std::span<T> channel(int n, int c) noexcept { return std::span<T>(data_).subspan(offset(n, c, 0, 0), plane_size()); }
    std::span<const T> channel(int n, int c) const noexcept {
        return std::span<const T>(data_).subspan(offset(n, c, 0, 0), plane_size());
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool operator==(const BasicTensor&) const = default;

private:
    Shape4 shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
    return BasicTensor<To>(t.shape(), std::vector<To>(t.data().begin(), t.data().end()));
}

}  // namespace pqe
