#include "dcdp/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "dcdp/error.hpp"

namespace dcdp {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = t.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + "," + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = t.data() + (o * s[axis] + start) * inner;
    std::memcpy(out.data() + o * length * inner, src, length * inner * sizeof(double));
  }
  return out;
}

Tensor swap_last_axes(const Tensor& t) {
  if (t.rank() != 3) throw DimensionError("swap_last_axes expects rank 3, got " + shape_string(t.shape()));
  const std::size_t a = t.dim(0), b = t.dim(1), c = t.dim(2);
  Tensor out({a, c, b});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) out.at(i, k, j) = t.at(i, j, k);
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) throw DimensionError("gather_rows on rank-0 tensor");
  const std::size_t row_size = t.size() / t.dim(0);
  Shape out_shape = t.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= t.dim(0)) throw DimensionError("gather_rows index out of range");
    std::memcpy(out.data() + r * row_size, t.data() + rows[r] * row_size, row_size * sizeof(double));
  }
  return out;
}

}  // namespace dcdp
