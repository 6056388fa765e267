#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gain/common.hpp"

GAIN_NAMESPACE_BEGIN

/// Dense row-major array of rank 0, 1 or 2.
///
/// Rank-1 tensors behave as a single row (1 x n) wherever a matrix view is
/// needed, so bias vectors broadcast across the rows of a batch.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = Real(0));
  Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = Real(0));
  static Tensor vector(std::size_t n, Real fill = Real(0));
  static Tensor scalar(Real value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  /// Scalar value of a one-element tensor.
  Real item() const;

  void fill(Real value) noexcept;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

GAIN_NAMESPACE_END
