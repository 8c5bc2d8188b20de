#include "hetsched/kernels.hpp"

namespace hetsched::kernels {

namespace {

void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void relu(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

constexpr KernelTable kScalar{Isa::scalar, "scalar", axpy, add, relu, relu_backward, tanh_backward};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace hetsched::kernels
