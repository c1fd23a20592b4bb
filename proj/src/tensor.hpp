#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hdlcnn {

// Dense row-major tensor of doubles. All numeric state in the library (inputs,
// parameters, gradients, attributions) lives in these; shapes are small and
// desk-scale, so storage is a flat std::vector<double>.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-specific accessors; used where flat offset arithmetic would obscure
  // the intent. Hot loops compute offsets directly instead.
  double& at(int i);
  double at(int i) const;
  double& at(int i, int j);
  double at(int i, int j) const;
  double& at(int i, int j, int k);
  double at(int i, int j, int k) const;
  double& at(int i, int j, int k, int l);
  double at(int i, int j, int k, int l) const;

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double value);

  // "(22, 20)" -- for diagnostics.
  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

bool shapes_equal(const Tensor& a, const Tensor& b);
std::string shape_string(const std::vector<int>& shape);
std::size_t shape_element_count(const std::vector<int>& shape);

}  // namespace hdlcnn
