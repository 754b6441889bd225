#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amcnn/tensor.hpp"

namespace amcnn {

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;
};

// A named trainable tensor, e.g. "branch.L.conv1.weight".
struct Parameter {
  std::string name;
  Tensor tensor;
  AdamState adam;

  Parameter(std::string name, Tensor tensor);
};

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter, then zeroes the grads.
void adam_step(std::span<Parameter> params, const AdamConfig& config);

void zero_grads(std::span<Parameter> params);

// Euclidean norm of all accumulated gradients.
double grad_norm(std::span<const Parameter> params);

}  // namespace amcnn
