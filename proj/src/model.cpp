#include "amcnn/model.hpp"

#include <random>

#include "amcnn/ops.hpp"

namespace amcnn {

char to_char(BranchLabel label) {
  switch (label) {
    case BranchLabel::L:
      return 'L';
    case BranchLabel::M:
      return 'M';
    case BranchLabel::S:
      return 'S';
  }
  return '?';
}

std::optional<BranchLabel> parse_branch_label(char c) {
  switch (c) {
    case 'L':
      return BranchLabel::L;
    case 'M':
      return BranchLabel::M;
    case 'S':
      return BranchLabel::S;
    default:
      return std::nullopt;
  }
}

void BranchSpec::validate() const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (kernel_sizes[i] == 0 || kernel_sizes[i] % 2 == 0) {
      throw ShapeError(std::string("branch ") + to_char(label) + ": kernel sizes must be odd");
    }
    if (channels[i] == 0) {
      throw ShapeError(std::string("branch ") + to_char(label) + ": channel counts must be positive");
    }
  }
}

BranchSpec default_branch_spec(BranchLabel label) {
  switch (label) {
    case BranchLabel::L:
      return {label, {9, 7, 7, 7}, {16, 32, 16, 8}};
    case BranchLabel::M:
      return {label, {7, 5, 5, 5}, {20, 40, 20, 10}};
    case BranchLabel::S:
      return {label, {5, 3, 3, 3}, {24, 48, 24, 12}};
  }
  throw ShapeError("unknown branch label");
}

std::vector<BranchSpec> default_branch_specs() {
  return {default_branch_spec(BranchLabel::L), default_branch_spec(BranchLabel::M),
          default_branch_spec(BranchLabel::S)};
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::AmCnn:
      return "amcnn";
    case Variant::AmCnn3:
      return "amcnn3";
    case Variant::SingleBranch:
      return "single";
    case Variant::BranchOnly:
      return "branch";
  }
  return "?";
}

std::optional<Variant> parse_variant(const std::string& text) {
  if (text == "amcnn") return Variant::AmCnn;
  if (text == "amcnn3") return Variant::AmCnn3;
  if (text == "single") return Variant::SingleBranch;
  if (text == "branch") return Variant::BranchOnly;
  return std::nullopt;
}

void ModelConfig::validate() const {
  const bool single = variant == Variant::SingleBranch || variant == Variant::BranchOnly;
  if (single && branches.size() != 1) {
    throw ShapeError(to_string(variant) + " model needs exactly 1 branch, got " +
                     std::to_string(branches.size()));
  }
  if (!single && branches.empty()) throw ShapeError("model needs at least one branch");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    branches[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (branches[j].label == branches[i].label) {
        throw ShapeError(std::string("duplicate branch label ") + to_char(branches[i].label));
      }
    }
  }
  if (in_channels == 0) throw ShapeError("model needs at least one input channel");
  if (attention_kernel % 2 == 0) throw ShapeError("attention kernel size must be odd");
  if (!(init_std >= 0.0)) throw ShapeError("init std must be non-negative");
}

std::size_t ModelConfig::concat_channels() const {
  std::size_t total = 0;
  for (const BranchSpec& b : branches) total += b.out_channels();
  return total;
}

Parameter* ModelParams::find(const std::string& name) {
  for (Parameter& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ModelParams::find(const std::string& name) const {
  for (const Parameter& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ModelParams::get(const std::string& name) {
  if (Parameter* p = find(name)) return *p;
  throw Error("model has no parameter '" + name + "'");
}

const Parameter& ModelParams::get(const std::string& name) const {
  if (const Parameter* p = find(name)) return *p;
  throw Error("model has no parameter '" + name + "'");
}

std::vector<Parameter*> ModelParams::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (Parameter& p : params) {
    if (p.name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params) n += p.tensor.numel();
  return n;
}

std::string branch_prefix(BranchLabel label) { return std::string("branch.") + to_char(label) + "."; }

ModelParams build_model(const ModelConfig& config) {
  config.validate();
  ModelParams model;
  model.config = config;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, config.init_std);

  auto add_conv = [&](const std::string& prefix, std::size_t c_out, std::size_t c_in,
                      std::size_t k) {
    Tensor weight(Shape{c_out, c_in, k, k});
    if (config.init_std > 0.0) {
      for (double& w : weight.data()) w = normal(rng);
    }
    model.params.emplace_back(prefix + "weight", std::move(weight));
    model.params.emplace_back(prefix + "bias", Tensor(Shape{c_out}));
  };

  for (const BranchSpec& spec : config.branches) {
    std::size_t c_in = config.in_channels;
    for (std::size_t layer = 0; layer < 4; ++layer) {
      add_conv(branch_prefix(spec.label) + "conv" + std::to_string(layer + 1) + ".",
               spec.channels[layer], c_in, spec.kernel_sizes[layer]);
      c_in = spec.channels[layer];
    }
  }
  switch (config.variant) {
    case Variant::AmCnn:
    case Variant::SingleBranch:
      add_conv("attention.", 1, config.concat_channels(), config.attention_kernel);
      break;
    case Variant::AmCnn3:
      for (const BranchSpec& spec : config.branches) {
        add_conv(std::string("attention.") + to_char(spec.label) + ".", 1, spec.out_channels(),
                 config.attention_kernel);
      }
      break;
    case Variant::BranchOnly:
      break;
  }
  add_conv("head.", 1, config.concat_channels(), 1);
  return model;
}

ModelParams build_model(Variant variant, std::vector<BranchSpec> specs, std::uint64_t seed) {
  ModelConfig config;
  config.variant = variant;
  config.branches = std::move(specs);
  config.seed = seed;
  return build_model(config);
}

Tensor image_tensor(const Image& image) {
  return Tensor(Shape{image.channels, image.height, image.width}, image.values);
}

namespace {

void require_quarterable(const Tensor& image) {
  if (image.rank() != 3 || image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0 || image.dim(1) == 0 ||
      image.dim(2) == 0) {
    throw ShapeError("model input must be [C,H,W] with H and W divisible by 4, got " +
                     shape_string(image.shape()));
  }
}

Tensor conv_layer(const ModelParams& model, const std::string& prefix, const Tensor& input) {
  return conv2d(input, model.get(prefix + "weight").tensor, model.get(prefix + "bias").tensor);
}

}  // namespace

Tensor forward_branch(const ModelParams& model, BranchLabel label, const Tensor& image) {
  require_quarterable(image);
  const std::string prefix = branch_prefix(label);
  if (model.find(prefix + "conv1.weight") == nullptr) {
    throw Error(std::string("model has no branch ") + to_char(label));
  }
  Tensor x = relu(conv_layer(model, prefix + "conv1.", image));
  x = maxpool2x2(x);
  x = relu(conv_layer(model, prefix + "conv2.", x));
  x = maxpool2x2(x);
  x = relu(conv_layer(model, prefix + "conv3.", x));
  return relu(conv_layer(model, prefix + "conv4.", x));
}

AttentionOutput attention_head(const Tensor& features, const Tensor& weight, const Tensor& bias,
                               bool rescale) {
  AttentionOutput out;
  out.score = tanh(conv2d(features, weight, bias));
  out.probability = spatial_softmax(out.score);
  const double positions = static_cast<double>(features.dim(1) * features.dim(2));
  out.features =
      broadcast_mul(features, rescale ? scale(out.probability, positions) : out.probability);
  return out;
}

ForwardResult forward(const ModelParams& model, const Tensor& image) {
  require_quarterable(image);
  const ModelConfig& cfg = model.config;
  ForwardResult result;

  std::vector<Tensor> branch_features;
  branch_features.reserve(cfg.branches.size());
  for (const BranchSpec& spec : cfg.branches) {
    branch_features.push_back(forward_branch(model, spec.label, image));
  }

  Tensor head_input;
  switch (cfg.variant) {
    case Variant::AmCnn:
    case Variant::SingleBranch: {
      Tensor features = branch_features.size() == 1 ? branch_features[0]
                                                    : concat_channels(branch_features);
      AttentionOutput att = attention_head(features, model.get("attention.weight").tensor,
                                           model.get("attention.bias").tensor,
                                           cfg.rescale_attention);
      result.attention.push_back(att.probability);
      head_input = att.features;
      break;
    }
    case Variant::AmCnn3: {
      std::vector<Tensor> attended;
      for (std::size_t i = 0; i < cfg.branches.size(); ++i) {
        const std::string prefix = std::string("attention.") + to_char(cfg.branches[i].label) + ".";
        AttentionOutput att =
            attention_head(branch_features[i], model.get(prefix + "weight").tensor,
                           model.get(prefix + "bias").tensor, cfg.rescale_attention);
        result.attention.push_back(att.probability);
        attended.push_back(att.features);
      }
      head_input = concat_channels(attended);
      break;
    }
    case Variant::BranchOnly:
      head_input = branch_features[0];
      break;
  }
  result.density = relu(conv_layer(model, "head.", head_input));
  return result;
}

void load_branch_weights(ModelParams& target, const ModelParams& source, BranchLabel label) {
  const std::string prefix = branch_prefix(label);
  std::size_t copied = 0;
  for (const Parameter& src : source.params) {
    if (!src.name.starts_with(prefix)) continue;
    Parameter* dst = target.find(src.name);
    if (dst == nullptr) throw ShapeError("target model has no parameter '" + src.name + "'");
    if (dst->tensor.shape() != src.tensor.shape()) {
      throw ShapeError("parameter '" + src.name + "' has shape " +
                       shape_string(dst->tensor.shape()) + " in the target but " +
                       shape_string(src.tensor.shape()) + " in the source");
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst->tensor.data().begin());
    ++copied;
  }
  if (copied == 0) throw ShapeError("source model has no branch " + prefix);
  for (const Parameter& dst : target.params) {
    if (dst.name.starts_with(prefix) && source.find(dst.name) == nullptr) {
      throw ShapeError("source model lacks parameter '" + dst.name + "'");
    }
  }
}

}  // namespace amcnn
