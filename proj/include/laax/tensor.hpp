#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "laax/error.hpp"

namespace laax {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major n-dimensional array of doubles. Images are stored
/// channels-first (C, H, W); batches prepend a leading N axis.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_numel(shape_), Errc::shape_mismatch,
            "data size " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim() const noexcept { return shape_.size(); }
  std::size_t size(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  template <class... I>
  double& operator()(I... idx) noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  double operator()(I... idx) const noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  double item() const {
    require(data_.size() == 1, Errc::shape_mismatch, "item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(), Errc::shape_mismatch,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double max() const { return *std::max_element(data_.begin(), data_.end()); }
  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  /// Slice along the leading axis: returns element `i` of a batch.
  Tensor slice0(std::size_t i) const {
    require(dim() >= 1 && i < shape_[0], Errc::shape_mismatch, "slice0 index out of range");
    Shape sub(shape_.begin() + 1, shape_.end());
    const std::size_t n = shape_numel(sub);
    return Tensor(sub, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                           data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const noexcept {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) off = off * shape_[axis++] + i;
    return off;
  }
  void check_same(const Tensor& o) const {
    require(shape_ == o.shape_, Errc::shape_mismatch,
            "shape " + shape_str(shape_) + " vs " + shape_str(o.shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
inline Tensor operator*(Tensor a, double s) { return a *= s; }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "max_abs_diff " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Stack equally-shaped tensors along a new leading axis.
inline Tensor stack(std::span<const Tensor> items) {
  require(!items.empty(), Errc::shape_mismatch, "stack of zero tensors");
  Shape shape = items[0].shape();
  shape.insert(shape.begin(), items.size());
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) {
    require(t.shape() == items[0].shape(), Errc::shape_mismatch, "stack of mismatched shapes");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

inline Tensor stack(const std::vector<Tensor>& items) { return stack(std::span<const Tensor>(items)); }

/// Transpose of a 2-D array.
inline Tensor transpose2d(const Tensor& a) {
  require(a.dim() == 2, Errc::shape_mismatch, "transpose2d needs a 2-D tensor");
  const std::size_t r = a.size(0), c = a.size(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace laax
