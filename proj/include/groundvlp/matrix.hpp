#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace groundvlp {

/// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Rank-3 row-major tensor laid out as [heads][rows][cols].
template <typename T>
class Tensor3 {
 public:
  using Shape = std::array<std::size_t, 3>;

  Tensor3() = default;
  explicit Tensor3(Shape shape, T fill = T{})
      : shape_(shape), data_(shape[0] * shape[1] * shape[2], fill) {}
  Tensor3(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    assert(data_.size() == element_count(shape_));
  }

  static std::size_t element_count(const Shape& s) { return s[0] * s[1] * s[2]; }

  const Shape& shape() const { return shape_; }
  std::size_t heads() const { return shape_[0]; }
  std::size_t rows() const { return shape_[1]; }
  std::size_t cols() const { return shape_[2]; }

  T& operator()(std::size_t h, std::size_t r, std::size_t c) {
    return data_[(h * shape_[1] + r) * shape_[2] + c];
  }
  const T& operator()(std::size_t h, std::size_t r, std::size_t c) const {
    return data_[(h * shape_[1] + r) * shape_[2] + c];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Shape shape_{0, 0, 0};
  std::vector<T> data_;
};

}  // namespace groundvlp
