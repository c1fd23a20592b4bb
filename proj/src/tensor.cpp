#include "tensor.hpp"

#include <cassert>
#include <sstream>
#include <stdexcept>

namespace hdlcnn {

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

std::size_t shape_element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

void validate_shape(const std::vector<int>& shape) {
  if (shape.empty()) {
    throw std::invalid_argument("tensor shape must have at least one dimension");
  }
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  hdlcnn::shape_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) {
  validate_shape(shape);
  shape_ = std::move(shape);
  data_.assign(shape_element_count(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) {
  validate_shape(shape);
  if (values.size() != shape_element_count(shape)) {
    throw std::invalid_argument(
        "tensor value count " + std::to_string(values.size()) +
        " does not match shape " + hdlcnn::shape_string(shape));
  }
  shape_ = std::move(shape);
  data_ = std::move(values);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for shape " + hdlcnn::shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double& Tensor::at(int i) {
  assert(rank() == 1);
  return data_[static_cast<std::size_t>(i)];
}

double Tensor::at(int i) const {
  assert(rank() == 1);
  return data_[static_cast<std::size_t>(i)];
}

double& Tensor::at(int i, int j) {
  assert(rank() == 2);
  return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

double Tensor::at(int i, int j) const {
  assert(rank() == 2);
  return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

double& Tensor::at(int i, int j, int k) {
  assert(rank() == 3);
  return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

double Tensor::at(int i, int j, int k) const {
  assert(rank() == 3);
  return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

double& Tensor::at(int i, int j, int k, int l) {
  assert(rank() == 4);
  return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) *
                   shape_[3] +
               l];
}

double Tensor::at(int i, int j, int k, int l) const {
  assert(rank() == 4);
  return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) *
                   shape_[3] +
               l];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  validate_shape(shape);
  if (shape_element_count(shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + hdlcnn::shape_string(shape_) +
                                " to " + hdlcnn::shape_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) { data_.assign(data_.size(), value); }

std::string Tensor::shape_string() const { return hdlcnn::shape_string(shape_); }

bool shapes_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

}  // namespace hdlcnn
