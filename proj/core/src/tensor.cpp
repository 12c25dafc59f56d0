#include "relkit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace relkit::numerics {

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void gemm_nn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      double* cp = c + p * n;
      for (int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

namespace {

template <typename T>
void write_raw(std::ostream& out, T x) {
  // Little-endian on every supported target.
  out.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T x;
  in.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!in) throw RuntimeFailure("tensor decode: truncated stream");
  return x;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  write_raw<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape) write_raw<int64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in) {
  uint32_t rank = read_raw<uint32_t>(in);
  if (rank > 8) throw RuntimeFailure("tensor decode: implausible rank");
  std::vector<int64_t> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = read_raw<int64_t>(in);
    if (shape[i] <= 0 || shape[i] > (int64_t(1) << 32))
      throw RuntimeFailure("tensor decode: implausible dimension");
  }
  int64_t n = Tensor::numel_of(shape);
  std::vector<double> v(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw RuntimeFailure("tensor decode: truncated payload");
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace relkit::numerics
