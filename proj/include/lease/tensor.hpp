#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lease/errors.hpp"

namespace lease {

// Dense row-major tensor of doubles. The universal value type of the engine.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool is_scalar() const { return data_.size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Flat offset for a 4-d (n, c, h, w) index.
    int64_t at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    // Flat offset for a 2-d (r, c) index.
    int64_t at2(int64_t r, int64_t c) const { return r * shape_[1] + c; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Throws ShapeError naming `op` when the two shapes differ.
void require_same_shape(const char* op, const Tensor& a, const Tensor& b);
// Throws NumericError naming `op` when the tensor holds NaN or Inf.
void require_finite(const char* op, const Tensor& t);

}  // namespace lease
