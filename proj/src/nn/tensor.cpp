// SPDX-License-Identifier: Apache-2.0
#include "skd/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace skd {

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor t = *this;
  return std::move(t).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (numel(shape) != size())
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
  if (other.size() != size()) throw std::invalid_argument("add_: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale_(float s) {
  for (float& v : data_) v *= s;
}

Tensor Tensor::slice_rows(std::int64_t begin, std::int64_t end) const {
  if (rank() == 0 || begin < 0 || end > dim(0) || begin > end)
    throw std::out_of_range("slice_rows out of range");
  const std::int64_t row = dim(0) == 0 ? 0 : size() / dim(0);
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<float>(data_.begin() + begin * row, data_.begin() + end * row));
}

Tensor Tensor::concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape_.begin() + 1, a.shape_.end(), b.shape_.begin() + 1))
    throw std::invalid_argument("concat_rows: trailing shapes differ");
  Shape s = a.shape_;
  s[0] += b.dim(0);
  std::vector<float> d;
  d.reserve(a.data_.size() + b.data_.size());
  d.insert(d.end(), a.data_.begin(), a.data_.end());
  d.insert(d.end(), b.data_.begin(), b.data_.end());
  return Tensor(std::move(s), std::move(d));
}

}  // namespace skd
