#include "amcnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "amcnn/error.hpp"
#include "format.hpp"

namespace amcnn {

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw DataError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw DataError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw DataError("Adam eps must be positive");
  if (batch != 1) throw DataError("only batch size 1 is supported");
  loss.validate();
  sigma.validate();
}

void write_iteration_csv_header(std::ostream& out) { out << "step,l_ed,l_rd,l,grad_norm\n"; }

void write_iteration_csv(std::ostream& out, const IterationRecord& r) {
  out << r.step << ',' << format_double(r.ed) << ',' << format_double(r.rd) << ','
      << format_double(r.total) << ',' << format_double(r.grad_norm) << '\n';
}

void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  write_iteration_csv_header(out);
  for (const IterationRecord& r : log.iterations) write_iteration_csv(out, r);
}

namespace {

void write_eval_row(std::ostream& out, const EpochRecord& r) {
  out << r.epoch << ',' << r.step << ',' << format_double(r.mae) << ',' << format_double(r.mse)
      << '\n';
}

void require_ground_truth(const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  for (const Sample& s : dataset) {
    if (!s.density) throw DataError("sample " + s.id + " has no ground-truth density attached");
  }
}

using EpochSource = std::function<std::vector<Sample>(std::mt19937_64&)>;

// Shared loop for both stages: draws epochs of patches, shuffles them, and
// runs one Adam step per patch until `iterations` steps are done.
void run_stage(ModelParams& model, const EpochSource& next_epoch, std::size_t iterations,
               const LossConfig& loss, const TrainConfig& config, const std::vector<Sample>& dataset,
               TrainLog& log, const TrainStreams& streams, bool write_checkpoints) {
  const auto started = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);
  if (streams.iterations != nullptr) write_iteration_csv_header(*streams.iterations);
  if (streams.evals != nullptr) *streams.evals << "epoch,step,mae,mse\n";
  zero_grads(model.params);

  std::size_t step = 0;
  std::size_t epoch = 0;
  while (step < iterations) {
    std::vector<Sample> patches = next_epoch(rng);
    if (patches.empty()) throw DataError("an epoch produced no training patches");
    std::shuffle(patches.begin(), patches.end(), rng);
    for (const Sample& patch : patches) {
      if (step >= iterations) break;
      ++step;
      const TrainingExample example = make_example(patch);
      const ForwardResult out = forward(model, example.image);
      const LossTarget target{&example.density, example.mask ? &*example.mask : nullptr};
      const LossTerms terms = training_loss({&out.density, 1}, {&target, 1}, loss);
      const double total = terms.total.item();
      if (!std::isfinite(total)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step) + " (patch of " +
                             example.id + ")");
      }
      backward(terms.total);
      IterationRecord record{step, terms.ed.item(), terms.rd.item(), total, grad_norm(model.params)};
      if (!std::isfinite(record.grad_norm)) {
        throw NumericalError("non-finite gradient at step " + std::to_string(step));
      }
      adam_step(model.params, config.adam);
      log.iterations.push_back(record);
      if (streams.iterations != nullptr) write_iteration_csv(*streams.iterations, record);
      if (write_checkpoints && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
        std::filesystem::create_directories(config.checkpoint_dir);
        save_checkpoint(model, config.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt"));
      }
    }
    ++epoch;
    if (config.eval_each_epoch) {
      const EvalReport report = evaluate(model, dataset);
      EpochRecord record{epoch, step, report.mae, report.mse};
      log.evals.push_back(record);
      if (streams.evals != nullptr) write_eval_row(*streams.evals, record);
    }
  }
  log.wall_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

}  // namespace

TrainingExample make_example(const Sample& sample) {
  if (!sample.density) throw DataError("sample " + sample.id + " has no ground-truth density");
  TrainingExample example;
  example.id = sample.id;
  example.image = image_tensor(sample.image);
  example.density = sum_pool_downsample(*sample.density, 4).grid;
  if (sample.roi) example.mask = sample.roi->quarter;
  example.count = masked_count(example.density, example.mask ? &*example.mask : nullptr);
  return example;
}

std::vector<Sample> pretrain_epoch(const std::vector<Sample>& dataset, std::size_t c_p,
                                   std::mt19937_64& rng) {
  std::vector<Sample> patches;
  for (const Sample& s : dataset) {
    std::vector<Sample> crops = random_crop(s, AugmentSpec{c_p, false}, rng);
    std::move(crops.begin(), crops.end(), std::back_inserter(patches));
  }
  return patches;
}

std::vector<Sample> finetune_epoch(const std::vector<Sample>& dataset, std::size_t c_f,
                                   std::mt19937_64& rng) {
  std::vector<Sample> patches;
  for (const Sample& s : dataset) {
    if (c_f == 0) {
      patches.push_back(s);
      patches.push_back(hflip(s));
      continue;
    }
    std::vector<Sample> crops = random_crop(s, AugmentSpec{c_f, true}, rng);
    std::move(crops.begin(), crops.end(), std::back_inserter(patches));
  }
  return patches;
}

PretrainResult pretrain_branch(const BranchSpec& spec, const std::vector<Sample>& dataset,
                               const TrainConfig& config, std::size_t in_channels,
                               const TrainStreams& streams) {
  config.validate();
  require_ground_truth(dataset);
  ModelConfig model_config;
  model_config.variant = Variant::BranchOnly;
  model_config.branches = {spec};
  model_config.in_channels = in_channels;
  model_config.seed = config.seed + static_cast<std::uint64_t>(spec.label) + 1;
  PretrainResult result{build_model(model_config), {}};

  LossConfig loss = config.loss;
  loss.use_rd = false;
  TrainConfig stage = config;
  stage.eval_each_epoch = false;
  const std::size_t c_p = config.c_p;
  run_stage(
      result.model,
      [&](std::mt19937_64& rng) {
        return c_p == 0 ? dataset : pretrain_epoch(dataset, c_p, rng);
      },
      config.pretrain_iterations, loss, stage, dataset, result.log, streams, false);
  return result;
}

void init_from_pretrained(ModelParams& model, const std::vector<ModelParams>& pretrained) {
  for (const ModelParams& source : pretrained) {
    for (const BranchSpec& spec : source.config.branches) {
      load_branch_weights(model, source, spec.label);
    }
  }
}

TrainLog finetune(ModelParams& model, const std::vector<Sample>& dataset, const TrainConfig& config,
                  const TrainStreams& streams) {
  config.validate();
  require_ground_truth(dataset);
  TrainLog log;
  const std::size_t c_f = config.c_f;
  run_stage(
      model, [&](std::mt19937_64& rng) { return finetune_epoch(dataset, c_f, rng); },
      config.finetune_iterations, config.loss, config, dataset, log, streams, true);
  return log;
}

EvalReport evaluate_maps(const std::vector<std::string>& ids, const std::vector<Grid>& predictions,
                         const std::vector<Grid>& ground_truth,
                         const std::vector<const BinaryMask*>& masks) {
  if (predictions.size() != ground_truth.size() || ids.size() != predictions.size() ||
      (!masks.empty() && masks.size() != predictions.size())) {
    throw DataError("evaluate_maps: list lengths differ");
  }
  std::vector<CountPair> pairs;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const BinaryMask* mask = masks.empty() ? nullptr : masks[i];
    const Grid& pred = predictions[i];
    const Grid& gt = ground_truth[i];
    if (pred.height != gt.height || pred.width != gt.width) {
      throw ShapeError("evaluate_maps: prediction and ground truth sizes differ for " + ids[i]);
    }
    if (mask != nullptr && (mask->height != gt.height || mask->width != gt.width)) {
      throw ShapeError("evaluate_maps: ROI mask size differs for " + ids[i]);
    }
    pairs.push_back({ids[i], masked_count(gt, mask), masked_count(pred, mask)});
  }
  return mae_mse(std::move(pairs));
}

Image attention_image(const Tensor& probability) {
  const auto values = probability.data();
  const double peak = *std::max_element(values.begin(), values.end());
  Image image{1, probability.dim(1), probability.dim(2), std::vector<double>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    image.values[i] = peak > 0.0 ? values[i] / peak : 0.0;
  }
  return image;
}

EvalReport evaluate(const ModelParams& model, const std::vector<Sample>& dataset,
                    const EvalOptions& options) {
  if (dataset.empty()) throw DataError("evaluation dataset is empty");
  if (options.export_dir) std::filesystem::create_directories(*options.export_dir);
  std::vector<CountPair> pairs;
  for (const Sample& sample : dataset) {
    const TrainingExample example = make_example(sample);
    const ForwardResult out = forward(model, example.image);
    const BinaryMask* mask = example.mask ? &*example.mask : nullptr;
    Grid predicted(out.density.dim(1), out.density.dim(2));
    predicted.values.assign(out.density.data().begin(), out.density.data().end());
    pairs.push_back({sample.id, example.count, masked_count(predicted, mask)});

    if (options.export_dir) {
      const auto& dir = *options.export_dir;
      write_dmap(dir / (sample.id + ".density.dmap"), DensityMap{predicted, 4});
      for (std::size_t k = 0; k < out.attention.size(); ++k) {
        const Tensor& m = out.attention[k];
        Grid grid(m.dim(1), m.dim(2));
        grid.values.assign(m.data().begin(), m.data().end());
        const std::string stem = sample.id + ".attention" + std::to_string(k);
        write_dmap(dir / (stem + ".dmap"), DensityMap{grid, 4});
        write_pnm(dir / (stem + ".pgm"), attention_image(m));
      }
    }
  }
  return mae_mse(std::move(pairs));
}

}  // namespace amcnn
