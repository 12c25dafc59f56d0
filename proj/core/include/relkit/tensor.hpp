#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "relkit/errors.hpp"

namespace relkit::numerics {

// Dense row-major tensor of 64-bit floats. Rank 0..2 is what the rest of
// the project uses; the storage itself is rank-agnostic.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != static_cast<size_t>(numel_of(shape)))
      throw ShapeError("tensor: value count does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static Tensor full(std::vector<int64_t> s, double x) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), x));
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }
  static Tensor row(std::vector<double> data) {
    int64_t n = static_cast<int64_t>(data.size());
    return Tensor({1, n}, std::move(data));
  }
  static Tensor vec(std::vector<double> data) {
    int64_t n = static_cast<int64_t>(data.size());
    return Tensor({n}, std::move(data));
  }
  static Tensor matrix(int64_t r, int64_t c, std::vector<double> data) {
    return Tensor({r, c}, std::move(data));
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }

  // Row/column view used by the 2-D kernels: a rank-1 tensor counts as a
  // single row.
  int64_t rows() const {
    if (rank() == 2) return shape[0];
    if (rank() == 1) return 1;
    if (rank() == 0) return 1;
    throw ShapeError("tensor: rows() needs rank <= 2");
  }
  int64_t cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    if (rank() == 0) return 1;
    throw ShapeError("tensor: cols() needs rank <= 2");
  }

  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols() + c)]; }
  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

// Accumulating GEMM kernels on raw buffers: C += op(A) * op(B).
void gemm_nn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n);
void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n);  // B is [n x k]
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n);  // A is [m x k], C is [k x n]

// Binary tensor encoding used by checkpoints: u32 rank, i64 dims,
// little-endian doubles.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace relkit::numerics
