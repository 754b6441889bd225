#pragma once

// AM-CNN: three shallow convolutional branches with different receptive
// fields, a spatial-softmax attention head over their features, and a 1x1
// density output at quarter resolution.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amcnn/error.hpp"
#include "amcnn/io.hpp"
#include "amcnn/optim.hpp"
#include "amcnn/tensor.hpp"

namespace amcnn {

enum class BranchLabel : std::uint8_t { L = 0, M = 1, S = 2 };

char to_char(BranchLabel label);
std::optional<BranchLabel> parse_branch_label(char c);

// conv(k0,c0) - pool - conv(k1,c1) - pool - conv(k2,c2) - conv(k3,c3), ReLU after each conv.
struct BranchSpec {
  BranchLabel label = BranchLabel::L;
  std::array<std::size_t, 4> kernel_sizes{};
  std::array<std::size_t, 4> channels{};

  void validate() const;
  std::size_t out_channels() const { return channels[3]; }

  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

// L: 9-7-7-7 / 16-32-16-8, M: 7-5-5-5 / 20-40-20-10, S: 5-3-3-3 / 24-48-24-12.
BranchSpec default_branch_spec(BranchLabel label);
std::vector<BranchSpec> default_branch_specs();

enum class Variant : std::uint8_t {
  AmCnn = 0,         // attention over the concatenated branch features
  AmCnn3 = 1,        // one attention head per branch, attended features concatenated
  SingleBranch = 2,  // one branch + attention
  BranchOnly = 3,    // one branch + 1x1 head, no attention (pretraining network)
};

std::string to_string(Variant variant);
std::optional<Variant> parse_variant(const std::string& text);

struct ModelConfig {
  Variant variant = Variant::AmCnn;
  std::vector<BranchSpec> branches = default_branch_specs();
  std::size_t in_channels = 1;
  std::size_t attention_kernel = 1;
  // Multiply the probability map by the number of positions before weighting
  // features, so uniform attention is the identity.
  bool rescale_attention = true;
  double init_std = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t concat_channels() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class ModelParams {
 public:
  ModelConfig config;
  std::vector<Parameter> params;

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  // Throws Error if absent.
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  // Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  std::size_t scalar_count() const;
};

// Weights ~ Normal(0, init_std^2) drawn in declaration order from `seed`,
// biases zero.
ModelParams build_model(const ModelConfig& config);
ModelParams build_model(Variant variant, std::vector<BranchSpec> specs, std::uint64_t seed);

std::string branch_prefix(BranchLabel label);

// [C,H,W] image tensor; H and W must be divisible by 4.
Tensor image_tensor(const Image& image);

// Branch features [C_out, H/4, W/4].
Tensor forward_branch(const ModelParams& model, BranchLabel label, const Tensor& image);

struct AttentionOutput {
  Tensor score;        // S = tanh(W * f + b), [1,H,W]
  Tensor probability;  // M = spatial softmax of S
  Tensor features;     // F_att = f (.) M (times H*W when rescaled)
};

AttentionOutput attention_head(const Tensor& features, const Tensor& weight, const Tensor& bias,
                               bool rescale);

struct ForwardResult {
  Tensor density;                  // [1, H/4, W/4], non-negative
  std::vector<Tensor> attention;   // probability maps, one per attention head
};

ForwardResult forward(const ModelParams& model, const Tensor& image);

// Copies every "branch.<label>." tensor of `source` into `target` by name.
// Throws ShapeError if a tensor is missing or its shape differs.
void load_branch_weights(ModelParams& target, const ModelParams& source, BranchLabel label);

class CheckpointError : public Error {
 public:
  enum class Kind { Io, Version, Truncated, Inconsistent };

  CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// "AMCNN1", metadata (variant, rescale flag, in_channels, attention kernel,
// init std, seed, branch specs), then per-tensor records: name length + bytes,
// rank, extents, little-endian f64 values. All integers little-endian.
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
void save_checkpoint(const ModelParams& model, std::ostream& out);
ModelParams load_checkpoint(const std::filesystem::path& path);
ModelParams load_checkpoint(std::istream& in);

}  // namespace amcnn
