// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace wmgm {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. The universal value carrier of the library.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor from(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t c, std::size_t h, std::size_t w) const;
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;
    /// Throws naming `where` if any value is NaN or infinite.
    void require_finite(const char* where) const;

    double sum() const noexcept;
    double squared_norm() const noexcept;
    double max_abs() const noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s) noexcept;

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Stacks equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
/// Inverse of stack: item `i` of the leading axis.
Tensor unstack_item(const Tensor& batch, std::size_t i);

/// Concatenates rank>=2 tensors along axis 1 (channels / features).
Tensor concat_axis1(std::span<const Tensor> parts);
/// Slices `count` entries of axis 1 starting at `offset`.
Tensor slice_axis1(const Tensor& t, std::size_t offset, std::size_t count);

}  // namespace wmgm
