#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "amcnn/optim.hpp"
#include "amcnn/tensor.hpp"

namespace amcnn {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares the reverse-mode gradient of a scalar function at `point` with
// central differences of step h (1e-7 <= h <= 1e-3). Returns
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double grad_check(const ScalarFn& fn, const Tensor& point, double h = 1e-5);

// Wraps a tensor-valued op into a scalar one by contracting its output with a
// fixed pseudo-random weight tensor, so every output element contributes.
ScalarFn random_projection(std::function<Tensor(const Tensor&)> op, std::uint64_t seed);

struct ParameterProbe {
  std::size_t param;  // index into the parameter list
  std::size_t index;  // flat coordinate inside that parameter
};

// Same error measure over selected coordinates of model parameters; `loss`
// is re-evaluated for every perturbation.
double grad_check_parameters(const std::function<Tensor()>& loss, std::span<Parameter> params,
                             std::span<const ParameterProbe> probes, double h = 1e-5);

struct GradCheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return error <= tolerance; }
};

// Finite-difference checks of every differentiable op at random points
// (tolerance 1e-4) and of the end-to-end training loss over 20 random
// parameters of an AM-CNN on a 32x32 input (tolerance 1e-3).
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, double h = 1e-5,
                                                std::size_t points_per_op = 10);

}  // namespace amcnn
