#pragma once

// Two-stage training: each branch is pretrained on its own with a temporary
// 1x1 density head and the Euclidean loss, then the full model is fine-tuned
// with L_ED + alpha * L_RD on cropped and mirrored patches.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "amcnn/data.hpp"
#include "amcnn/losses.hpp"
#include "amcnn/model.hpp"
#include "amcnn/optim.hpp"

namespace amcnn {

struct TrainConfig {
  AdamConfig adam;  // lr 1e-5, beta1 0.9, beta2 0.999, eps 1e-8
  std::size_t batch = 1;
  std::size_t c_p = 9;
  std::size_t c_f = 100;
  std::size_t pretrain_iterations = 2000;
  std::size_t finetune_iterations = 5000;
  std::uint64_t seed = 0;
  LossConfig loss;
  SigmaPolicy sigma;
  bool rescale_attention = true;
  // Write <checkpoint_dir>/step_<n>.ckpt every n steps (0 = never).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  // Evaluate on the training set after every epoch.
  bool eval_each_epoch = false;

  void validate() const;
};

struct IterationRecord {
  std::size_t step = 0;
  double ed = 0.0;
  double rd = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double mae = 0.0;
  double mse = 0.0;
};

struct TrainLog {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> evals;
  double wall_seconds = 0.0;
};

void write_iteration_csv_header(std::ostream& out);
void write_iteration_csv(std::ostream& out, const IterationRecord& record);
void write_train_log_csv(std::ostream& out, const TrainLog& log);

// Optional sinks that receive log rows as they are produced.
struct TrainStreams {
  std::ostream* iterations = nullptr;
  std::ostream* evals = nullptr;
};

// A patch ready for the network: ground truth pooled to quarter resolution.
struct TrainingExample {
  std::string id;
  Tensor image;
  Grid density;                     // scale 4
  std::optional<BinaryMask> mask;   // scale 4
  double count = 0.0;               // ground-truth count inside the mask
};

// Requires sample.density (see attach_ground_truth).
TrainingExample make_example(const Sample& sample);

// C_p random half-size crops per image.
std::vector<Sample> pretrain_epoch(const std::vector<Sample>& dataset, std::size_t c_p,
                                   std::mt19937_64& rng);
// C_f random crops per image, each followed by its mirror (2 x C_f patches).
// With C_f == 0 the whole images and their mirrors are used instead.
std::vector<Sample> finetune_epoch(const std::vector<Sample>& dataset, std::size_t c_f,
                                   std::mt19937_64& rng);

// Dataset samples must carry ground truth. Returns a BranchOnly model whose
// "branch.<label>." tensors are the pretrained weights (the head is discarded
// when they are copied into a full model). Throws NumericalError on a
// non-finite loss, naming the step.
struct PretrainResult {
  ModelParams model;
  TrainLog log;
};
PretrainResult pretrain_branch(const BranchSpec& spec, const std::vector<Sample>& dataset,
                               const TrainConfig& config, std::size_t in_channels = 1,
                               const TrainStreams& streams = {});

// Copies each pretrained branch into `model`; throws ShapeError on mismatch.
void init_from_pretrained(ModelParams& model, const std::vector<ModelParams>& pretrained);

TrainLog finetune(ModelParams& model, const std::vector<Sample>& dataset, const TrainConfig& config,
                  const TrainStreams& streams = {});

struct EvalOptions {
  // When set, writes <id>.density.dmap, <id>.attention<k>.dmap and
  // <id>.attention<k>.pgm per sample.
  std::optional<std::filesystem::path> export_dir;
};

// y = ground-truth count inside the ROI, y' = predicted count inside the ROI.
EvalReport evaluate(const ModelParams& model, const std::vector<Sample>& dataset,
                    const EvalOptions& options = {});

// Same metric from precomputed quarter-scale prediction maps.
EvalReport evaluate_maps(const std::vector<std::string>& ids, const std::vector<Grid>& predictions,
                         const std::vector<Grid>& ground_truth,
                         const std::vector<const BinaryMask*>& masks);

// Probability map scaled by its maximum to an 8-bit grey image.
Image attention_image(const Tensor& probability);

}  // namespace amcnn
