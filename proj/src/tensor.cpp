#include "fairasr/tensor.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fairasr {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw std::invalid_argument("Tensor shape must not be empty");
  }
  std::size_t n = 1;
  for (std::size_t dim : shape) {
    if (dim == 0) {
      throw std::invalid_argument("Tensor dimensions must be positive, got " +
                                  shape_to_string(shape));
    }
    n *= dim;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_product(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " +
                                shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw std::logic_error("rows() requires a rank-2 tensor, shape is " +
                           shape_to_string(shape_));
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw std::logic_error("cols() requires a rank-2 tensor, shape is " +
                           shape_to_string(shape_));
  }
  return shape_[1];
}

double& Tensor::at(std::size_t row, std::size_t col) {
  return data_[row * cols() + col];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return data_[row * cols() + col];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

void GradMap::accumulate(const std::string& name, const Tensor& grad) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    entries_.emplace(name, grad);
    return;
  }
  if (!it->second.same_shape(grad)) {
    throw std::invalid_argument(
        "gradient shape mismatch for '" + name + "': " +
        shape_to_string(it->second.shape()) + " vs " +
        shape_to_string(grad.shape()));
  }
  double* acc = it->second.data().data();
  const double* add = grad.data().data();
  for (std::size_t i = 0; i < grad.size(); ++i) acc[i] += add[i];
}

void GradMap::add_scaled(const GradMap& other, double scale) {
  for (const auto& [name, grad] : other.entries_) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      Tensor scaled = grad;
      for (double& v : scaled.data()) v *= scale;
      entries_.emplace(name, std::move(scaled));
      continue;
    }
    if (!it->second.same_shape(grad)) {
      throw std::invalid_argument(
          "gradient shape mismatch for '" + name + "': " +
          shape_to_string(it->second.shape()) + " vs " +
          shape_to_string(grad.shape()));
    }
    double* acc = it->second.data().data();
    const double* add = grad.data().data();
    for (std::size_t i = 0; i < grad.size(); ++i) acc[i] += scale * add[i];
  }
}

const Tensor* GradMap::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

}  // namespace fairasr
