#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace emcad {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * w;
  }
  friend bool operator==(const Shape &, const Shape &) = default;
};

std::string to_string(const Shape &s);

/// Dense NCHW float32 tensor. Element (b, ch, y, x) lives at
/// b*(c*h*w) + ch*(h*w) + y*w + x. All extents are at least 1.
class Tensor4D {
public:
  Tensor4D() = default;
  explicit Tensor4D(Shape shape, float fill = 0.0f);
  Tensor4D(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor4D(Shape{n, c, h, w}, fill) {}
  Tensor4D(Shape shape, std::vector<float> values);

  [[nodiscard]] const Shape &shape() const noexcept { return shape_; }
  [[nodiscard]] int n() const noexcept { return shape_.n; }
  [[nodiscard]] int c() const noexcept { return shape_.c; }
  [[nodiscard]] int h() const noexcept { return shape_.h; }
  [[nodiscard]] int w() const noexcept { return shape_.w; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::size_t offset(int b, int ch, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) *
               shape_.w +
           x;
  }
  float &at(int b, int ch, int y, int x) noexcept {
    return data_[offset(b, ch, y, x)];
  }
  [[nodiscard]] float at(int b, int ch, int y, int x) const noexcept {
    return data_[offset(b, ch, y, x)];
  }

  // Contiguous h*w plane of one (batch, channel) pair.
  std::span<float> plane(int b, int ch) noexcept {
    return {data_.data() + offset(b, ch, 0, 0), shape_.plane()};
  }
  [[nodiscard]] std::span<const float> plane(int b, int ch) const noexcept {
    return {data_.data() + offset(b, ch, 0, 0), shape_.plane()};
  }

  std::span<float> values() noexcept { return data_; }
  [[nodiscard]] std::span<const float> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<float> &vector() const noexcept { return data_; }

  void fill(float v);

  friend bool operator==(const Tensor4D &, const Tensor4D &) = default;

private:
  Shape shape_{0, 0, 0, 0};
  std::vector<float> data_;
};

// Throws ShapeError unless every extent is at least 1.
void validate_shape(const Shape &s);

} // namespace emcad
