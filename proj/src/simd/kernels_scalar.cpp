// Scalar reference kernels. Plain loops, left-to-right accumulation.

#include <cmath>

#include "amcnn/simd/kernels.hpp"

namespace amcnn::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void correlate_row(const double* in, const double* w, std::size_t k, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double acc = out[j];
    for (std::size_t t = 0; t < k; ++t) acc += w[t] * in[j + t];
    out[j] = acc;
  }
}

void correlate_row_adjoint(const double* grad_out, const double* w, std::size_t k, double* grad_in,
                           std::size_t n) {
  for (std::size_t t = 0; t < k; ++t) {
    const double wt = w[t];
    for (std::size_t j = 0; j < n; ++j) grad_in[j + t] += wt * grad_out[j];
  }
}

void correlate_row_weight_grad(const double* grad_out, const double* in, std::size_t k,
                               double* grad_w, std::size_t n) {
  for (std::size_t t = 0; t < k; ++t) grad_w[t] += dot(grad_out, in + t, n);
}

void relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] <= 0.0 ? 0.0 : x[i];  // NaN passes through
}

void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void adam_update(double* param, double* m, double* v, double* g, std::size_t n,
                 const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    g[i] = 0.0;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      .isa = Isa::Scalar,
      .name = "scalar",
      .dot = dot,
      .axpy = axpy,
      .sum = sum,
      .correlate_row = correlate_row,
      .correlate_row_adjoint = correlate_row_adjoint,
      .correlate_row_weight_grad = correlate_row_weight_grad,
      .relu = relu,
      .relu_backward = relu_backward,
      .adam_update = adam_update,
  };
  return table;
}

}  // namespace amcnn::simd
