#pragma once

// Inner-loop kernels shared by the tensor ops.
//
// Every kernel has a scalar reference implementation and, on x86-64 hosts that
// report AVX2+FMA, a vectorised variant. The active table is chosen once at
// first use; set AMCNN_ISA=scalar|avx2 in the environment to force a choice.
// Variants agree to rounding (FMA contraction and summation order differ), so
// results are bitwise reproducible only for a fixed ISA.

#include <cstddef>
#include <optional>
#include <string_view>

namespace amcnn::simd {

enum class Isa { Scalar, Avx2 };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);

  // out[j] += sum_{t<k} w[t] * in[j + t]         for j in [0, n)
  void (*correlate_row)(const double* in, const double* w, std::size_t k, double* out,
                        std::size_t n);
  // grad_in[j + t] += w[t] * grad_out[j]         for j in [0, n), t in [0, k)
  void (*correlate_row_adjoint)(const double* grad_out, const double* w, std::size_t k,
                                double* grad_in, std::size_t n);
  // grad_w[t] += sum_j grad_out[j] * in[j + t]   for t in [0, k)
  void (*correlate_row_weight_grad)(const double* grad_out, const double* in, std::size_t k,
                                    double* grad_w, std::size_t n);

  // y = max(x, 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  // gx += x > 0 ? gy : 0
  void (*relu_backward)(const double* x, const double* gy, double* gx, std::size_t n);

  // Bias-corrected Adam update of n coordinates; zeroes g afterwards.
  void (*adam_update)(double* param, double* m, double* v, double* g, std::size_t n,
                      const AdamCoeffs& c);
};

const KernelTable& scalar_kernels();
// nullptr when the host (or the build) lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// Active table.
const KernelTable& kernels();
// Switches the active table; returns false if the ISA is unavailable.
bool set_isa(Isa isa);
Isa active_isa();

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

}  // namespace amcnn::simd
