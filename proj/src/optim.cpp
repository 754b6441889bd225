#include "amcnn/optim.hpp"

#include <cmath>

#include "amcnn/simd/kernels.hpp"

namespace amcnn {

Parameter::Parameter(std::string name, Tensor tensor)
    : name(std::move(name)), tensor(std::move(tensor)) {
  this->tensor.set_requires_grad(true);
  adam.first_moment.assign(this->tensor.numel(), 0.0);
  adam.second_moment.assign(this->tensor.numel(), 0.0);
}

void adam_step(std::span<Parameter> params, const AdamConfig& config) {
  const simd::KernelTable& kern = simd::kernels();
  for (Parameter& p : params) {
    const std::size_t n = p.tensor.numel();
    if (p.adam.first_moment.size() != n) p.adam.first_moment.assign(n, 0.0);
    if (p.adam.second_moment.size() != n) p.adam.second_moment.assign(n, 0.0);
    p.adam.step += 1;
    const auto t = static_cast<double>(p.adam.step);
    const simd::AdamCoeffs coeffs{
        .lr = config.lr,
        .beta1 = config.beta1,
        .beta2 = config.beta2,
        .eps = config.eps,
        .bias_correction1 = 1.0 - std::pow(config.beta1, t),
        .bias_correction2 = 1.0 - std::pow(config.beta2, t),
    };
    kern.adam_update(p.tensor.data().data(), p.adam.first_moment.data(),
                     p.adam.second_moment.data(), p.tensor.grad().data(), n, coeffs);
  }
}

void zero_grads(std::span<Parameter> params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

double grad_norm(std::span<const Parameter> params) {
  const simd::KernelTable& kern = simd::kernels();
  double total = 0.0;
  for (const Parameter& p : params) {
    if (!p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    total += kern.dot(g.data(), g.data(), g.size());
  }
  return std::sqrt(total);
}

}  // namespace amcnn
