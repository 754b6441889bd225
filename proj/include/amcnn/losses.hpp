#pragma once

// Training losses and evaluation metrics.
//
//   L_ED = (1/N) sum_i ||pred_i - gt_i||^2 / Pix_i
//   L_RD = (1/N) sum_i ((y_i - y'_i) / (y_i + z))^2
//   L    = L_ED + alpha * L_RD
//   MAE  = (1/N) sum_i |y_i - y'_i|,   MSE = sqrt((1/N) sum_i (y_i - y'_i)^2)
//
// With an ROI mask, masked-out cells are excluded from the squared error, from
// Pix_i, and from both counts.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "amcnn/density.hpp"
#include "amcnn/tensor.hpp"

namespace amcnn {

struct LossConfig {
  double alpha = 1e-7;
  double z = 1.0;
  bool use_rd = true;

  void validate() const;
};

// One training target at the prediction's resolution.
struct LossTarget {
  const Grid* density = nullptr;
  const BinaryMask* mask = nullptr;  // optional ROI
};

Tensor euclidean_loss(std::span<const Tensor> preds, std::span<const LossTarget> targets);

// Differentiable y' = sum of predicted density (inside the mask, if any).
Tensor predicted_count(const Tensor& pred, const BinaryMask* mask = nullptr);
double masked_count(const Grid& density, const BinaryMask* mask = nullptr);

Tensor relative_deviation_loss(std::span<const double> counts_gt,
                               std::span<const Tensor> counts_pred, double z);
double relative_deviation_loss(std::span<const double> counts_gt,
                               std::span<const double> counts_pred, double z);

// ed + alpha * rd, or exactly ed when use_rd is off.
Tensor combined_loss(const Tensor& ed, const Tensor& rd, const LossConfig& config);

struct LossTerms {
  Tensor ed;
  Tensor rd;
  Tensor total;
};

// Convenience for a batch of predictions: builds all three terms.
LossTerms training_loss(std::span<const Tensor> preds, std::span<const LossTarget> targets,
                        const LossConfig& config);

struct CountPair {
  std::string id;
  double gt = 0.0;
  double pred = 0.0;
};

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  std::vector<CountPair> per_image;
};

// Throws DataError on an empty list.
EvalReport mae_mse(std::vector<CountPair> pairs);

// "image_id,gt_count,pred_count" rows, then "MAE,<v>" and "MSE,<v>".
void write_eval_csv(std::ostream& out, const EvalReport& report);
EvalReport read_eval_csv(std::istream& in);

}  // namespace amcnn
