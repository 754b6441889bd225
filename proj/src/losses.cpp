#include "amcnn/losses.hpp"

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>

#include "amcnn/error.hpp"
#include "amcnn/ops.hpp"
#include "format.hpp"

namespace amcnn {

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw DataError("loss alpha must be non-negative");
  if (!(z > 0.0)) throw DataError("loss z must be positive");
}

namespace {

void check_target(const Tensor& pred, const LossTarget& target) {
  if (target.density == nullptr) throw ShapeError("loss target without a density map");
  const Grid& gt = *target.density;
  if (pred.numel() != gt.values.size() || pred.rank() != 3 || pred.dim(0) != 1 ||
      pred.dim(1) != gt.height || pred.dim(2) != gt.width) {
    throw ShapeError("loss: prediction " + shape_string(pred.shape()) + " vs ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (target.mask != nullptr &&
      (target.mask->height != gt.height || target.mask->width != gt.width)) {
    throw ShapeError("loss: ROI mask does not match the density map");
  }
}

bool keep(const BinaryMask* mask, std::size_t i) { return mask == nullptr || mask->cells[i] != 0; }

}  // namespace

Tensor euclidean_loss(std::span<const Tensor> preds, std::span<const LossTarget> targets) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw ShapeError("euclidean_loss: need matching non-empty prediction and target lists");
  }
  const auto batch = static_cast<double>(preds.size());
  std::vector<double> pixel_scale(preds.size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    check_target(preds[s], targets[s]);
    const auto p = preds[s].data();
    const std::vector<double>& g = targets[s].density->values;
    double sq = 0.0;
    std::size_t pix = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!keep(targets[s].mask, i)) continue;
      const double d = p[i] - g[i];
      sq += d * d;
      ++pix;
    }
    if (pix > 0) {
      pixel_scale[s] = 1.0 / static_cast<double>(pix);
      total += sq * pixel_scale[s];
    }
  }
  // The trace owns copies so targets may go out of scope before backward().
  std::vector<std::vector<double>> gts;
  std::vector<std::optional<BinaryMask>> masks;
  for (const LossTarget& t : targets) {
    gts.push_back(t.density->values);
    masks.push_back(t.mask != nullptr ? std::optional<BinaryMask>(*t.mask) : std::nullopt);
  }
  return Tensor::from_op(
      Shape{1}, {total / batch}, std::vector<Tensor>(preds.begin(), preds.end()),
      [gts = std::move(gts), masks = std::move(masks), pixel_scale = std::move(pixel_scale),
       batch](detail::Node& self) {
        const double upstream = self.grad[0];
        for (std::size_t s = 0; s < self.inputs.size(); ++s) {
          detail::Node& in = *self.inputs[s];
          if (!in.requires_grad) continue;
          std::vector<double>& gin = in.grad_buffer();
          const std::vector<double>& g = gts[s];
          const BinaryMask* mask = masks[s] ? &*masks[s] : nullptr;
          const double factor = upstream * 2.0 * pixel_scale[s] / batch;
          for (std::size_t i = 0; i < gin.size(); ++i) {
            if (keep(mask, i)) gin[i] += factor * (in.data[i] - g[i]);
          }
        }
      });
}

Tensor predicted_count(const Tensor& pred, const BinaryMask* mask) {
  if (mask != nullptr && mask->cells.size() != pred.numel()) {
    throw ShapeError("predicted_count: mask does not match prediction " + shape_string(pred.shape()));
  }
  double total = 0.0;
  const auto p = pred.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (keep(mask, i)) total += p[i];
  }
  std::vector<std::uint8_t> cells = mask != nullptr ? mask->cells : std::vector<std::uint8_t>{};
  return Tensor::from_op(Shape{1}, {total}, {pred}, [cells = std::move(cells)](detail::Node& self) {
    std::vector<double>& gin = self.inputs[0]->grad_buffer();
    const double upstream = self.grad[0];
    for (std::size_t i = 0; i < gin.size(); ++i) {
      if (cells.empty() || cells[i] != 0) gin[i] += upstream;
    }
  });
}

double masked_count(const Grid& density, const BinaryMask* mask) {
  double total = 0.0;
  for (std::size_t i = 0; i < density.values.size(); ++i) {
    if (keep(mask, i)) total += density.values[i];
  }
  return total;
}

Tensor relative_deviation_loss(std::span<const double> counts_gt,
                               std::span<const Tensor> counts_pred, double z) {
  if (counts_gt.empty() || counts_gt.size() != counts_pred.size()) {
    throw ShapeError("relative_deviation_loss: need matching non-empty count lists");
  }
  const auto batch = static_cast<double>(counts_gt.size());
  std::vector<double> gt(counts_gt.begin(), counts_gt.end());
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double r = (gt[i] - counts_pred[i].item()) / (gt[i] + z);
    total += r * r;
  }
  return Tensor::from_op(
      Shape{1}, {total / batch}, std::vector<Tensor>(counts_pred.begin(), counts_pred.end()),
      [gt = std::move(gt), z, batch](detail::Node& self) {
        const double upstream = self.grad[0];
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
          detail::Node& in = *self.inputs[i];
          if (!in.requires_grad) continue;
          const double denom = gt[i] + z;
          const double r = (gt[i] - in.data[0]) / denom;
          in.grad_buffer()[0] += upstream * (-2.0 * r / denom) / batch;
        }
      });
}

double relative_deviation_loss(std::span<const double> counts_gt,
                               std::span<const double> counts_pred, double z) {
  std::vector<Tensor> preds;
  preds.reserve(counts_pred.size());
  for (double v : counts_pred) preds.push_back(Tensor::scalar(v));
  return relative_deviation_loss(counts_gt, preds, z).item();
}

Tensor combined_loss(const Tensor& ed, const Tensor& rd, const LossConfig& config) {
  if (!config.use_rd) return ed;
  return add(ed, scale(rd, config.alpha));
}

LossTerms training_loss(std::span<const Tensor> preds, std::span<const LossTarget> targets,
                        const LossConfig& config) {
  LossTerms terms;
  terms.ed = euclidean_loss(preds, targets);
  std::vector<double> gt_counts;
  std::vector<Tensor> pred_counts;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    gt_counts.push_back(masked_count(*targets[i].density, targets[i].mask));
    pred_counts.push_back(predicted_count(preds[i], targets[i].mask));
  }
  terms.rd = relative_deviation_loss(gt_counts, pred_counts, config.z);
  terms.total = combined_loss(terms.ed, terms.rd, config);
  return terms;
}

EvalReport mae_mse(std::vector<CountPair> pairs) {
  if (pairs.empty()) throw DataError("mae_mse: no samples to evaluate");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const CountPair& p : pairs) {
    const double d = p.gt - p.pred;
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const auto n = static_cast<double>(pairs.size());
  EvalReport report;
  report.mae = abs_sum / n;
  report.mse = std::sqrt(sq_sum / n);
  report.per_image = std::move(pairs);
  return report;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "image_id,gt_count,pred_count\n";
  for (const CountPair& p : report.per_image) {
    out << p.id << ',' << format_double(p.gt) << ',' << format_double(p.pred) << '\n';
  }
  out << "MAE," << format_double(report.mae) << '\n';
  out << "MSE," << format_double(report.mse) << '\n';
}

EvalReport read_eval_csv(std::istream& in) {
  EvalReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("image_id")) continue;
    if (trim(line).empty()) continue;
    const auto c1 = line.find(',');
    const auto bad = [&] {
      return DataError("eval table line " + std::to_string(line_no) + ": malformed '" + line + "'");
    };
    if (c1 == std::string::npos) throw bad();
    const std::string key = line.substr(0, c1);
    const auto c2 = line.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      double v = 0.0;
      if (!parse_double(trim(std::string_view(line).substr(c1 + 1)), v)) throw bad();
      if (key == "MAE") {
        report.mae = v;
      } else if (key == "MSE") {
        report.mse = v;
      } else {
        throw bad();
      }
      continue;
    }
    CountPair pair{key, 0.0, 0.0};
    if (!parse_double(trim(std::string_view(line).substr(c1 + 1, c2 - c1 - 1)), pair.gt) ||
        !parse_double(trim(std::string_view(line).substr(c2 + 1)), pair.pred)) {
      throw bad();
    }
    report.per_image.push_back(pair);
  }
  return report;
}

}  // namespace amcnn
