#include "amcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "amcnn/ops.hpp"

namespace amcnn {
namespace {

void check_step(double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double grad_check(const ScalarFn& fn, const Tensor& point, double h) {
  check_step(h);
  Tensor x = point.detach();
  x.set_requires_grad(true);
  backward(fn(x));
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  Tensor probe = point.detach();
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const double original = probe.data()[i];
    probe.data()[i] = original + h;
    const double up = fn(probe).item();
    probe.data()[i] = original - h;
    const double down = fn(probe).item();
    probe.data()[i] = original;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

ScalarFn random_projection(std::function<Tensor(const Tensor&)> op, std::uint64_t seed) {
  return [op = std::move(op), seed](const Tensor& x) {
    Tensor out = op(x);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> weights(out.numel());
    for (double& w : weights) w = dist(rng);
    return sum(mul(out, Tensor(out.shape(), std::move(weights))));
  };
}

double grad_check_parameters(const std::function<Tensor()>& loss, std::span<Parameter> params,
                             std::span<const ParameterProbe> probes, double h) {
  check_step(h);
  zero_grads(params);
  backward(loss());
  double worst = 0.0;
  for (const ParameterProbe& probe : probes) {
    Tensor& t = params[probe.param].tensor;
    const double analytic = t.grad()[probe.index];
    const double original = t.data()[probe.index];
    t.data()[probe.index] = original + h;
    const double up = loss().item();
    t.data()[probe.index] = original - h;
    const double down = loss().item();
    t.data()[probe.index] = original;
    worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
  }
  zero_grads(params);
  return worst;
}

}  // namespace amcnn
