#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace otmap {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {
// leaves doubles default-initialized (i.e. untouched) so buffers that are
// fully overwritten skip the zeroing pass
template <typename T>
struct NoInitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) > 0) ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};
}  // namespace detail

// Dense f64 array in row-major order. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are the only ranks the engine produces.
class Tensor {
 public:
  using Storage = std::vector<double, detail::NoInitAlloc<double>>;

  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor uninitialized(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor row_major(std::size_t rows, std::size_t cols, std::initializer_list<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double value() const;  // scalar contents

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool bit_equal(const Tensor& o) const;

 private:
  struct Uninit {};
  Tensor(Shape shape, Uninit);
  Shape shape_;
  Storage data_;
};

std::size_t shape_size(const Shape& s);

// C = A*B with optional transposes, BLAS-backed when available.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// Process-wide BLAS thread count (default 1; recorded in run manifests
// because results are bit-stable only per fixed thread count).
void set_blas_threads(int n);
int blas_threads();
// Identifies the backing matmul implementation, e.g. "openblas:SKYLAKEX".
std::string blas_backend();

}  // namespace otmap
