#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace fairasr {

// Dense row-major array of doubles. Every dimension is >= 1 and
// product(shape) == data.size(); both are enforced at construction.
// Double precision throughout: the gradient checks run at 1e-4 relative
// tolerance, which single precision cannot reach.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  // Rank-2 accessors; throw std::logic_error on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t row, std::size_t col);
  double at(std::size_t row, std::size_t col) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Gradient accumulator keyed by parameter name. Accumulation is element-wise
// addition; keys iterate lexicographically (std::map) so reductions are
// bit-reproducible.
class GradMap {
 public:
  // Adds grad to the named entry, creating it if absent. Shape mismatch on
  // an existing entry throws std::invalid_argument naming both shapes.
  void accumulate(const std::string& name, const Tensor& grad);

  // this += scale * other, per key.
  void add_scaled(const GradMap& other, double scale);

  const Tensor* find(const std::string& name) const;

  std::map<std::string, Tensor>& entries() { return entries_; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  bool operator==(const GradMap& other) const = default;

 private:
  std::map<std::string, Tensor> entries_;
};

}  // namespace fairasr
