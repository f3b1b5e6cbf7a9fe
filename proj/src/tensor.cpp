#include "otmap/tensor.hpp"

#include <dlfcn.h>
#include <malloc.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <sstream>

namespace otmap {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, Uninit) : shape_(std::move(shape)), data_(shape_size(shape_)) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_size(shape_))
    throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_[0] = v;
  return t;
}

Tensor Tensor::uninitialized(Shape shape) { return Tensor(std::move(shape), Uninit{}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape), Uninit{});
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::row_major(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
  return Tensor({rows, cols}, std::vector<double>(v));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  return 1;
}

double Tensor::value() const {
  if (!is_scalar()) throw std::logic_error("tensor: value() on non-scalar " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bit_equal(const Tensor& o) const {
  return shape_ == o.shape_ &&
         std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// matmul backend. OpenBLAS is loaded via dlopen after OPENBLAS_CORETYPE has
// been set: the library's own load-time CPU detection falls back to a slow
// generic kernel when cpuid model names are masked (as they are in VMs), and
// the env var is only honored if set before the library initializes.

namespace {

using DgemmFn = void (*)(int order, int ta, int tb, int m, int n, int k, double alpha,
                         const double* a, int lda, const double* b, int ldb, double beta,
                         double* c, int ldc);
using SetThreadsFn = void (*)(int);

DgemmFn g_dgemm = nullptr;
SetThreadsFn g_set_threads = nullptr;
int g_threads = 1;
std::string g_backend = "portable";
std::once_flag g_blas_once;

void load_blas() {
  // large tensors churn every step; keep them on the heap instead of
  // mmap/munmap round trips
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  if (!std::getenv("OPENBLAS_CORETYPE")) setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  for (const char* name : {"libopenblas.so.0", "libopenblas.so"}) {
    if (void* h = dlopen(name, RTLD_NOW | RTLD_LOCAL)) {
      g_dgemm = reinterpret_cast<DgemmFn>(dlsym(h, "cblas_dgemm"));
      g_set_threads = reinterpret_cast<SetThreadsFn>(dlsym(h, "openblas_set_num_threads"));
      if (g_dgemm) {
        if (g_set_threads) g_set_threads(g_threads);
        g_backend = std::string("openblas:") + std::getenv("OPENBLAS_CORETYPE");
        return;
      }
    }
  }
  g_dgemm = nullptr;
}

void ensure_blas() { std::call_once(g_blas_once, load_blas); }

// fallback used when OpenBLAS is unavailable; fixed loop order keeps it
// deterministic
void naive_dgemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
}

}  // namespace

void set_blas_threads(int n) {
  ensure_blas();
  g_threads = n < 1 ? 1 : n;
  if (g_set_threads) g_set_threads(g_threads);
}

int blas_threads() { return g_threads; }

std::string blas_backend() {
  ensure_blas();
  return g_backend;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: operands must be rank-2, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t ka = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                (trans_a ? "^T" : "") + " * " + shape_str(b.shape()) +
                                (trans_b ? "^T" : ""));
  ensure_blas();
  Tensor c = Tensor::uninitialized({m, n});
  if (g_dgemm) {
    // CblasRowMajor=101, CblasNoTrans=111, CblasTrans=112
    g_dgemm(101, trans_a ? 112 : 111, trans_b ? 112 : 111, static_cast<int>(m),
            static_cast<int>(n), static_cast<int>(ka), 1.0, a.data(),
            static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 0.0, c.data(),
            static_cast<int>(n));
  } else {
    naive_dgemm(trans_a, trans_b, m, n, ka, a.data(), b.data(), c.data());
  }
  return c;
}

}  // namespace otmap
