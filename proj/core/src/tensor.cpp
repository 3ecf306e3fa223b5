// SPDX-License-Identifier: Apache-2.0
#include "wmgm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wmgm/error.hpp"

namespace wmgm {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    for (auto e : shape_) require(e > 0, "tensor extents must be positive, got ", to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto e : shape_) require(e > 0, "tensor extents must be positive, got ", to_string(shape_));
    require(data_.size() == numel(shape_), "tensor data length ", data_.size(), " does not match shape ",
            to_string(shape_));
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < shape_.size(), "axis ", axis, " out of range for shape ", to_string(shape_));
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}
double Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}
double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Tensor Tensor::reshaped(Shape shape) const {
    require(numel(shape) == data_.size(), "cannot reshape ", to_string(shape_), " to ", to_string(shape));
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const char* where) const {
    if (!all_finite()) fail("non-finite value in ", where);
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::squared_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require(shape_ == other.shape_, "shape mismatch in +=: ", to_string(shape_), " vs ", to_string(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require(shape_ == other.shape_, "shape mismatch in -=: ", to_string(shape_), " vs ", to_string(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "shape mismatch: ", to_string(a.shape()), " vs ", to_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor stack(std::span<const Tensor> items) {
    require(!items.empty(), "stack of zero tensors");
    const Shape& inner = items.front().shape();
    Shape shape{items.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> data;
    data.reserve(numel(shape));
    for (const auto& t : items) {
        require(t.shape() == inner, "stack: shape ", to_string(t.shape()), " differs from ", to_string(inner));
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor unstack_item(const Tensor& batch, std::size_t i) {
    require(batch.rank() >= 2 && i < batch.dim(0), "unstack_item: index ", i, " out of range for ",
            to_string(batch.shape()));
    Shape inner(batch.shape().begin() + 1, batch.shape().end());
    const std::size_t n = numel(inner);
    auto first = batch.data().begin() + static_cast<std::ptrdiff_t>(i * n);
    return Tensor(std::move(inner), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

Tensor concat_axis1(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat of zero tensors");
    const Shape& ref = parts.front().shape();
    require(ref.size() >= 2, "concat_axis1 needs rank >= 2");
    std::size_t total = 0;
    for (const auto& p : parts) {
        require(p.rank() == ref.size() && p.dim(0) == ref[0], "concat_axis1: incompatible shapes ",
                to_string(ref), " and ", to_string(p.shape()));
        for (std::size_t a = 2; a < ref.size(); ++a)
            require(p.dim(a) == ref[a], "concat_axis1: trailing extents differ: ", to_string(ref), " and ",
                    to_string(p.shape()));
        total += p.dim(1);
    }
    Shape shape = ref;
    shape[1] = total;
    const std::size_t inner = numel(Shape(ref.begin() + 2, ref.end()));
    Tensor out(shape);
    for (std::size_t n = 0; n < ref[0]; ++n) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t block = p.dim(1) * inner;
            std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(n * block), block,
                        out.data().begin() + static_cast<std::ptrdiff_t>((n * total) * inner + offset));
            offset += block;
        }
    }
    return out;
}

Tensor slice_axis1(const Tensor& t, std::size_t offset, std::size_t count) {
    require(t.rank() >= 2 && offset + count <= t.dim(1) && count > 0, "slice_axis1: [", offset, ", ",
            offset + count, ") out of range for ", to_string(t.shape()));
    Shape shape = t.shape();
    shape[1] = count;
    const std::size_t inner = numel(Shape(t.shape().begin() + 2, t.shape().end()));
    Tensor out(shape);
    for (std::size_t n = 0; n < t.dim(0); ++n)
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>((n * t.dim(1) + offset) * inner), count * inner,
                    out.data().begin() + static_cast<std::ptrdiff_t>(n * count * inner));
    return out;
}

}  // namespace wmgm
