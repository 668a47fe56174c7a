#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace casseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Rank 0 holds a single value.
class Tensor {
public:
    Tensor() : Tensor(Shape{}, 0.0) {}
    Tensor(Shape shape, double fill);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // Rank-2 and rank-3 element access (row-major, last index fastest).
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

enum class ReduceKind { sum, mean, max };

Tensor zip_map(const Tensor& a, const Tensor& b, const std::function<double(double, double)>& f);

// axis == nullopt reduces over every element and returns a rank-0 tensor.
Tensor reduce(const Tensor& a, std::optional<std::size_t> axis, ReduceKind kind);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor identity(std::size_t n);

} // namespace casseg
