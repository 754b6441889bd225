// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check (see dispatch.cpp).

#include "amcnn/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace amcnn::simd {
namespace {

constexpr std::size_t kLanes = 4;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kLanes), _mm256_loadu_pd(b + i + kLanes), acc1);
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + kLanes));
  }
  for (; i + kLanes <= n; i += kLanes) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void correlate_row(const double* in, const double* w, std::size_t k, double* out, std::size_t n) {
  std::size_t j = 0;
  for (; j + 2 * kLanes <= n; j += 2 * kLanes) {
    __m256d acc0 = _mm256_loadu_pd(out + j);
    __m256d acc1 = _mm256_loadu_pd(out + j + kLanes);
    for (std::size_t t = 0; t < k; ++t) {
      const __m256d wt = _mm256_broadcast_sd(w + t);
      acc0 = _mm256_fmadd_pd(wt, _mm256_loadu_pd(in + j + t), acc0);
      acc1 = _mm256_fmadd_pd(wt, _mm256_loadu_pd(in + j + t + kLanes), acc1);
    }
    _mm256_storeu_pd(out + j, acc0);
    _mm256_storeu_pd(out + j + kLanes, acc1);
  }
  for (; j + kLanes <= n; j += kLanes) {
    __m256d acc = _mm256_loadu_pd(out + j);
    for (std::size_t t = 0; t < k; ++t) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(w + t), _mm256_loadu_pd(in + j + t), acc);
    }
    _mm256_storeu_pd(out + j, acc);
  }
  for (; j < n; ++j) {
    double acc = out[j];
    for (std::size_t t = 0; t < k; ++t) acc += w[t] * in[j + t];
    out[j] = acc;
  }
}

void correlate_row_adjoint(const double* grad_out, const double* w, std::size_t k, double* grad_in,
                           std::size_t n) {
  for (std::size_t t = 0; t < k; ++t) axpy(w[t], grad_out, grad_in + t, n);
}

void correlate_row_weight_grad(const double* grad_out, const double* in, std::size_t k,
                               double* grad_w, std::size_t n) {
  constexpr std::size_t kMaxTaps = 16;
  if (k > kMaxTaps) {
    for (std::size_t t = 0; t < k; ++t) grad_w[t] += dot(grad_out, in + t, n);
    return;
  }
  __m256d acc[kMaxTaps];
  for (std::size_t t = 0; t < k; ++t) acc[t] = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    const __m256d g = _mm256_loadu_pd(grad_out + j);
    for (std::size_t t = 0; t < k; ++t) {
      acc[t] = _mm256_fmadd_pd(g, _mm256_loadu_pd(in + j + t), acc[t]);
    }
  }
  for (std::size_t t = 0; t < k; ++t) {
    double s = hsum(acc[t]);
    for (std::size_t r = j; r < n; ++r) s += grad_out[r] * in[r + t];
    grad_w[t] += s;
  }
}

void relu(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // Select rather than max so that -0.0 and NaN follow the scalar rule.
    const __m256d positive = _mm256_cmp_pd(v, zero, _CMP_NLE_UQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(positive, v));
  }
  for (; i < n; ++i) y[i] = x[i] <= 0.0 ? 0.0 : x[i];
}

void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d positive = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d pass = _mm256_and_pd(positive, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), pass));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void adam_update(double* param, double* m, double* v, double* g, std::size_t n,
                 const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d one_minus_b1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d one_minus_b2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_minus_b1, gv));
    const __m256d vv =
        _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(one_minus_b2, _mm256_mul_pd(gv, gv)));
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    _mm256_storeu_pd(g + i, zero);
  }
  const double sb1 = 1.0 - c.beta1;
  const double sb2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + sb1 * g[i];
    v[i] = c.beta2 * v[i] + sb2 * (g[i] * g[i]);
    param[i] -= c.lr * (m[i] / c.bias_correction1) / (std::sqrt(v[i] / c.bias_correction2) + c.eps);
    g[i] = 0.0;
  }
}

}  // namespace

const KernelTable* avx2_kernel_table() {
  static const KernelTable table{
      .isa = Isa::Avx2,
      .name = "avx2",
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
  return &table;
}

}  // namespace amcnn::simd

#else

namespace amcnn::simd {
const KernelTable* avx2_kernel_table() { return nullptr; }
}  // namespace amcnn::simd

#endif
