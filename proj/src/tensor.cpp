#include "emcad/tensor.hpp"

#include "emcad/errors.hpp"

#include <algorithm>

namespace emcad {

std::string to_string(const Shape &s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

void validate_shape(const Shape &s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
    throw ShapeError("tensor extents must be >= 1, got " + to_string(s));
}

Tensor4D::Tensor4D(Shape shape, float fill) : shape_(shape) {
  validate_shape(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor4D::Tensor4D(Shape shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  validate_shape(shape_);
  if (data_.size() != shape_.numel())
    throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                     std::to_string(shape_.numel()) + " values, got " +
                     std::to_string(data_.size()));
}

void Tensor4D::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

} // namespace emcad
