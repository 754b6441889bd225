#include "amcnn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <optional>

#include "amcnn/data.hpp"
#include "amcnn/error.hpp"
#include "amcnn/gradcheck.hpp"
#include "amcnn/simd/kernels.hpp"
#include "amcnn/trainer.hpp"
#include "format.hpp"

namespace amcnn::cli {

namespace fs = std::filesystem;

const std::vector<SettingInfo>& settings_table() {
  static const std::vector<SettingInfo> table = {
      {"lr", "1e-05", "Adam learning rate"},
      {"beta1", "0.9", "Adam first-moment decay (the momentum term)"},
      {"beta2", "0.999", "Adam second-moment decay"},
      {"eps", "1e-08", "Adam epsilon"},
      {"batch", "1", "images per step (only 1 is supported)"},
      {"alpha", "1e-07", "weight of the relative deviation loss"},
      {"z", "1", "relative deviation loss denominator offset"},
      {"use_rd", "true", "add the relative deviation loss during fine-tuning"},
      {"c_p", "9", "random crops per image per pretraining epoch"},
      {"c_f", "100", "random crops per image per fine-tuning epoch (each also mirrored)"},
      {"pretrain_iterations", "2000", "pretraining steps per branch"},
      {"finetune_iterations", "5000", "fine-tuning steps"},
      {"checkpoint_every", "0", "write a checkpoint every n fine-tuning steps (0 = never)"},
      {"seed", "0", "global random seed"},
      {"sigma", "knn:0.3", "ground-truth kernel width policy: knn:<beta> | persp | fixed:<sigma>"},
      {"fallback_sigma", "4", "fixed sigma used when the knn policy has too few heads"},
      {"variant", "amcnn", "model variant: amcnn | amcnn3 | single | branch"},
      {"branches", "LMS", "branches to build, from L, M, S"},
      {"channels", "1", "input channels: 1 (luminance) or 3 (RGB)"},
      {"attention_kernel", "1", "kernel size of the attention score convolution"},
      {"rescale_attention", "true", "scale the probability map by the number of positions"},
      {"init_std", "0.01", "standard deviation of the initial weights"},
      {"synth_count", "8", "number of synthetic scenes"},
      {"synth_height", "128", "synthetic scene height"},
      {"synth_width", "128", "synthetic scene width"},
      {"min_heads", "5", "minimum heads per synthetic scene"},
      {"max_heads", "20", "maximum heads per synthetic scene"},
      {"noise", "0.02", "synthetic pixel noise standard deviation"},
      {"threads", "1", "worker threads"},
      {"isa", "auto", "kernel instruction set: auto | scalar | avx2"},
  };
  return table;
}

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

std::string key_name(std::string text) {
  std::replace(text.begin(), text.end(), '-', '_');
  return text;
}

class Settings {
 public:
  Settings() {
    for (const SettingInfo& s : settings_table()) values_[s.key] = {s.default_value, "default"};
  }

  void set(const std::string& key, const std::string& value, const std::string& origin) {
    const auto it = values_.find(key_name(key));
    if (it == values_.end()) throw UsageError(origin + ": unknown key '" + key + "'");
    it->second = {value, origin};
  }

  const std::string& str(const std::string& key) const { return values_.at(key).value; }

  double number(const std::string& key) const {
    double v = 0.0;
    if (!parse_double(trim(str(key)), v)) invalid(key, "a finite number");
    return v;
  }

  std::uint64_t u64(const std::string& key) const {
    const std::string_view text = trim(str(key));
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
      invalid(key, "a non-negative integer");
    }
    return v;
  }

  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool boolean(const std::string& key) const {
    const std::string_view text = trim(str(key));
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    invalid(key, "true or false");
  }

  [[noreturn]] void invalid(const std::string& key, const std::string& expected) const {
    const Entry& e = values_.at(key);
    throw UsageError(e.origin + ": invalid value '" + e.value + "' for " + key + " (expected " +
                     expected + ")");
  }

  const std::string& origin(const std::string& key) const { return values_.at(key).origin; }

 private:
  struct Entry {
    std::string value;
    std::string origin;
  };
  std::map<std::string, Entry> values_;
};

void load_config_file(const fs::path& path, Settings& settings) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open config file");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    const std::string where = path.string() + ":" + std::to_string(number);
    if (eq == std::string_view::npos) throw UsageError(where + ": expected key=value");
    settings.set(std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1))),
                 where);
  }
}

// One subcommand: its CLI11 app, the shared --config/--set options, and one
// flag per settings key it reads.
struct Command {
  CLI::App* app = nullptr;
  std::string config;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flags;

  Command(CLI::App& parent, const std::string& name, const std::string& description,
          const std::vector<std::string>& keys) {
    app = parent.add_subcommand(name, description);
    app->add_option("--config", config, "flat key=value config file");
    app->add_option("--set", overrides, "override a config key (key=value, repeatable)");
    std::vector<std::string> all = keys;
    all.insert(all.end(), {"threads", "isa"});
    for (const std::string& key : all) {
      const auto it = std::find_if(settings_table().begin(), settings_table().end(),
                                   [&](const SettingInfo& s) { return s.key == key; });
      flags[key] = app->add_option(flag_name(key), flag_values[key], it->description)
                       ->default_str(it->default_value);
    }
  }

  Settings settings() const {
    Settings s;
    if (!config.empty()) load_config_file(config, s);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set " + kv + ": expected key=value");
      s.set(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))), "--set");
    }
    for (const auto& [key, opt] : flags) {
      if (opt->count() > 0) s.set(key, flag_values.at(key), flag_name(key));
    }
    return s;
  }
};

void apply_runtime(const Settings& s) {
  const std::size_t threads = s.size("threads");
  if (threads == 0) s.invalid("threads", "at least 1");
  set_num_threads(static_cast<int>(threads));
  const std::string& isa = s.str("isa");
  if (isa == "auto") return;
  const auto parsed = simd::parse_isa(isa);
  if (!parsed) s.invalid("isa", "auto, scalar or avx2");
  if (!simd::set_isa(*parsed)) throw UsageError(s.origin("isa") + ": " + isa + " is not supported on this CPU");
}

SigmaPolicy sigma_policy(const Settings& s) {
  SigmaPolicy policy;
  try {
    policy = parse_sigma_policy(s.str("sigma"));
  } catch (const Error&) {
    s.invalid("sigma", "knn:<beta>, persp or fixed:<sigma>");
  }
  if (policy.kind != SigmaKind::Fixed) policy.fixed_sigma = s.number("fallback_sigma");
  if (!(policy.fixed_sigma > 0.0)) s.invalid("fallback_sigma", "a positive number");
  return policy;
}

std::vector<BranchSpec> branch_specs(const Settings& s) {
  std::vector<BranchSpec> specs;
  for (char c : s.str("branches")) {
    const auto label = parse_branch_label(c);
    if (!label) s.invalid("branches", "letters from L, M, S");
    if (std::any_of(specs.begin(), specs.end(), [&](const BranchSpec& b) { return b.label == *label; })) {
      s.invalid("branches", "each branch at most once");
    }
    specs.push_back(default_branch_spec(*label));
  }
  if (specs.empty()) s.invalid("branches", "at least one branch");
  return specs;
}

std::size_t input_channels(const Settings& s) {
  const std::size_t c = s.size("channels");
  if (c != 1 && c != 3) s.invalid("channels", "1 or 3");
  return c;
}

ModelConfig model_config(const Settings& s) {
  ModelConfig config;
  const auto variant = parse_variant(s.str("variant"));
  if (!variant) s.invalid("variant", "amcnn, amcnn3, single or branch");
  config.variant = *variant;
  config.branches = branch_specs(s);
  config.in_channels = input_channels(s);
  config.attention_kernel = s.size("attention_kernel");
  config.rescale_attention = s.boolean("rescale_attention");
  config.init_std = s.number("init_std");
  config.seed = s.u64("seed");
  try {
    config.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("model settings: ") + e.what());
  }
  return config;
}

TrainConfig train_config(const Settings& s) {
  TrainConfig config;
  config.adam = {s.number("lr"), s.number("beta1"), s.number("beta2"), s.number("eps")};
  config.batch = s.size("batch");
  config.c_p = s.size("c_p");
  config.c_f = s.size("c_f");
  config.pretrain_iterations = s.size("pretrain_iterations");
  config.finetune_iterations = s.size("finetune_iterations");
  config.checkpoint_every = s.size("checkpoint_every");
  config.seed = s.u64("seed");
  config.loss = {s.number("alpha"), s.number("z"), s.boolean("use_rd")};
  config.sigma = sigma_policy(s);
  config.rescale_attention = s.boolean("rescale_attention");
  try {
    config.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("training settings: ") + e.what());
  }
  return config;
}

std::vector<Sample> load_dataset(const fs::path& dir, std::size_t channels,
                                 const std::optional<SigmaPolicy>& policy, std::ostream& err) {
  std::vector<Sample> samples;
  for (const SampleFiles& files : scan_dataset(dir)) {
    LoadResult loaded = load_sample(files, channels);
    if (loaded.dropped_heads > 0) {
      err << "warning: " << files.annotations.string() << ": " << loaded.dropped_heads
          << " head(s) outside the cropped image were dropped\n";
    }
    if (policy) {
      const SigmaResult sigmas = attach_ground_truth(loaded.sample, *policy);
      if (!sigmas.warning.empty()) {
        err << "warning: " << files.annotations.string() << ": " << sigmas.warning << '\n';
      }
    }
    samples.push_back(std::move(loaded.sample));
  }
  if (samples.empty()) throw DataError(dir.string() + ": no .pgm/.ppm images found");
  return samples;
}

void open_output(std::ofstream& stream, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  stream.open(path, std::ios::binary);
  if (!stream) throw DataError(path.string() + ": cannot open for writing");
}

DensityMap ground_truth_map(const Sample& sample, int scale) {
  DensityMap map = *sample.density;
  if (sample.roi) map = apply_roi_mask(map, *sample.roi);
  return scale == 4 ? sum_pool_downsample(map, 4) : map;
}

// --- gen-density -------------------------------------------------------------

struct GenDensityArgs {
  std::string data, out, annotations, image, perspective, roi;
  int scale = 1;
};

int gen_density(const Command& cmd, const GenDensityArgs& a, std::ostream& out, std::ostream& err) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  const SigmaPolicy policy = sigma_policy(s);
  if (a.data.empty() == a.annotations.empty()) {
    throw UsageError("gen-density: pass either --data DIR or --annotations FILE with --image FILE");
  }
  if (!a.data.empty()) {
    for (const Sample& sample : load_dataset(a.data, 1, policy, err)) {
      const fs::path path = fs::path(a.out) / (sample.id + ".density.dmap");
      fs::create_directories(a.out);
      const DensityMap map = ground_truth_map(sample, a.scale);
      write_dmap(path, map);
      out << path.string() << ',' << format_double(map.count()) << '\n';
    }
    return kOk;
  }
  if (a.image.empty()) throw UsageError("gen-density: --annotations needs --image for the map size");
  SampleFiles files{fs::path(a.image).stem().string(), a.image, a.annotations, {}, {}};
  if (!a.perspective.empty()) files.perspective = a.perspective;
  if (!a.roi.empty()) files.roi = a.roi;
  LoadResult loaded = load_sample(files, 1);
  if (loaded.dropped_heads > 0) {
    err << "warning: " << a.annotations << ": " << loaded.dropped_heads
        << " head(s) outside the cropped image were dropped\n";
  }
  const SigmaResult sigmas = attach_ground_truth(loaded.sample, policy);
  if (!sigmas.warning.empty()) err << "warning: " << a.annotations << ": " << sigmas.warning << '\n';
  const DensityMap map = ground_truth_map(loaded.sample, a.scale);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_dmap(a.out, map);
  out << a.out << ',' << format_double(map.count()) << '\n';
  return kOk;
}

// --- synth -----------------------------------------------------------------

int synth(const Command& cmd, const std::string& out_dir, std::ostream& out) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  SynthConfig config;
  config.height = s.size("synth_height");
  config.width = s.size("synth_width");
  config.min_count = s.size("min_heads");
  config.max_count = s.size("max_heads");
  config.noise = s.number("noise");
  const std::size_t count = s.size("synth_count");
  const std::uint64_t seed = s.u64("seed");
  char id[32];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(id, sizeof id, "synth_%03zu", i);
    std::mt19937_64 rng(sample_seed(seed, id));
    save_sample(out_dir, synth_scene(config, rng, id));
  }
  out << "wrote " << count << " scenes to " << out_dir << '\n';
  return kOk;
}

// --- pretrain / train --------------------------------------------------------

int pretrain(const Command& cmd, const std::string& data, const std::string& out_dir,
             std::ostream& out, std::ostream& err) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  const TrainConfig config = train_config(s);
  const std::vector<BranchSpec> specs = branch_specs(s);
  const std::size_t channels = input_channels(s);
  const std::vector<Sample> dataset = load_dataset(data, channels, config.sigma, err);
  for (const BranchSpec& spec : specs) {
    const std::string label(1, to_char(spec.label));
    std::ofstream log;
    open_output(log, fs::path(out_dir) / ("pretrain_" + label + ".csv"));
    const PretrainResult result = pretrain_branch(spec, dataset, config, channels, {&log, nullptr});
    const fs::path path = fs::path(out_dir) / ("branch_" + label + ".ckpt");
    save_checkpoint(result.model, path);
    out << "branch " << label << ": " << result.log.iterations.size() << " steps, final L_ED "
        << format_double(result.log.iterations.empty() ? 0.0 : result.log.iterations.back().ed)
        << ", saved " << path.string() << '\n';
  }
  return kOk;
}

struct TrainArgs {
  std::string data, out, pretrained, log, eval_log, checkpoint_dir;
  bool from_scratch = false;
};

int train(const Command& cmd, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  TrainConfig config = train_config(s);
  const ModelConfig mconfig = model_config(s);
  if (a.pretrained.empty() == !a.from_scratch) {
    throw UsageError("train: pass exactly one of --pretrained DIR or --from-scratch");
  }
  ModelParams model = build_model(mconfig);
  if (!a.pretrained.empty()) {
    std::vector<ModelParams> branches;
    for (const BranchSpec& spec : mconfig.branches) {
      branches.push_back(
          load_checkpoint(fs::path(a.pretrained) / ("branch_" + std::string(1, to_char(spec.label)) + ".ckpt")));
    }
    init_from_pretrained(model, branches);
  }
  const std::vector<Sample> dataset = load_dataset(a.data, mconfig.in_channels, config.sigma, err);

  const fs::path out_path(a.out);
  config.checkpoint_dir = a.checkpoint_dir.empty()
                              ? out_path.parent_path() / (out_path.stem().string() + "_checkpoints")
                              : fs::path(a.checkpoint_dir);
  std::ofstream log, eval_log;
  TrainStreams streams;
  if (!a.log.empty()) {
    open_output(log, a.log);
    streams.iterations = &log;
  }
  if (!a.eval_log.empty()) {
    open_output(eval_log, a.eval_log);
    streams.evals = &eval_log;
    config.eval_each_epoch = true;
  }
  const TrainLog result = finetune(model, dataset, config, streams);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_checkpoint(model, out_path);
  const EvalReport report = evaluate(model, dataset);
  out << "trained " << result.iterations.size() << " steps; training-set MAE "
      << format_double(report.mae) << " MSE " << format_double(report.mse) << "; saved "
      << out_path.string() << '\n';
  return kOk;
}

// --- eval / predict ----------------------------------------------------------

struct EvalArgs {
  std::string data, model, predictions, export_dir, out;
};

int eval(const Command& cmd, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  if (a.model.empty() == a.predictions.empty()) {
    throw UsageError("eval: pass exactly one of --model FILE or --predictions DIR");
  }
  if (!a.export_dir.empty() && a.model.empty()) throw UsageError("eval: --export needs --model");
  const SigmaPolicy policy = sigma_policy(s);
  EvalReport report;
  if (!a.model.empty()) {
    const ModelParams model = load_checkpoint(fs::path(a.model));
    const auto dataset = load_dataset(a.data, model.config.in_channels, policy, err);
    EvalOptions options;
    if (!a.export_dir.empty()) options.export_dir = a.export_dir;
    report = evaluate(model, dataset, options);
  } else {
    const auto dataset = load_dataset(a.data, input_channels(s), policy, err);
    std::vector<std::string> ids;
    std::vector<Grid> preds, gts;
    std::vector<const BinaryMask*> masks;
    for (const Sample& sample : dataset) {
      const fs::path path = fs::path(a.predictions) / (sample.id + ".density.dmap");
      DensityMap pred = read_dmap(path);
      if (pred.scale == 1 && pred.grid.height == sample.height() && pred.grid.width == sample.width()) {
        pred = sum_pool_downsample(pred, 4);
      }
      if (pred.scale != 4 || pred.grid.height != sample.height() / 4 ||
          pred.grid.width != sample.width() / 4) {
        throw DataError(path.string() + ": expected a " + std::to_string(sample.height() / 4) + "x" +
                        std::to_string(sample.width() / 4) + " scale-4 map (or a full-size scale-1 map)");
      }
      ids.push_back(sample.id);
      preds.push_back(std::move(pred.grid));
      gts.push_back(sum_pool_downsample(*sample.density, 4).grid);
      masks.push_back(sample.roi ? &sample.roi->quarter : nullptr);
    }
    report = evaluate_maps(ids, preds, gts, masks);
  }
  write_eval_csv(out, report);
  if (!a.out.empty()) {
    std::ofstream file;
    open_output(file, a.out);
    write_eval_csv(file, report);
  }
  return kOk;
}

struct PredictArgs {
  std::string model, image, roi, out;
};

int predict(const Command& cmd, const PredictArgs& a, std::ostream& out) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  const ModelParams model = load_checkpoint(fs::path(a.model));
  Image image = read_pnm(fs::path(a.image));
  if (model.config.in_channels == 1) {
    image = to_luminance(image);
  } else if (image.channels == 1) {
    throw DataError(a.image + ": the model expects a 3-channel image");
  }
  const std::size_t height = image.height - image.height % 4;
  const std::size_t width = image.width - image.width % 4;
  if (height == 0 || width == 0) throw DataError(a.image + ": image smaller than 4x4");
  Image cropped{image.channels, height, width, std::vector<double>(image.channels * height * width)};
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) cropped.at(c, y, x) = image.at(c, y, x);
    }
  }

  const ForwardResult result = forward(model, image_tensor(cropped));
  Grid density(result.density.dim(1), result.density.dim(2));
  density.values.assign(result.density.data().begin(), result.density.data().end());
  std::optional<RoiMask> roi;
  if (!a.roi.empty()) roi = make_roi(read_points_csv(fs::path(a.roi)), height, width);

  fs::create_directories(a.out);
  const std::string stem = fs::path(a.image).stem().string();
  write_dmap(fs::path(a.out) / (stem + ".density.dmap"), DensityMap{density, 4});
  for (std::size_t k = 0; k < result.attention.size(); ++k) {
    const Tensor& m = result.attention[k];
    Grid grid(m.dim(1), m.dim(2));
    grid.values.assign(m.data().begin(), m.data().end());
    const std::string name = stem + ".attention" + std::to_string(k);
    write_dmap(fs::path(a.out) / (name + ".dmap"), DensityMap{grid, 4});
    write_pnm(fs::path(a.out) / (name + ".pgm"), attention_image(m));
  }
  out << "count," << format_double(masked_count(density, roi ? &roi->quarter : nullptr)) << '\n';
  return kOk;
}

// --- grad-check --------------------------------------------------------------

int grad_check_command(const Command& cmd, double h, std::size_t points, std::ostream& out) {
  const Settings s = cmd.settings();
  apply_runtime(s);
  if (!(h >= 1e-7 && h <= 1e-3)) throw UsageError("--step: value must lie in [1e-7, 1e-3]");
  if (points == 0) throw UsageError("--points: must be at least 1");
  bool ok = true;
  out << "check,max_rel_error,tolerance,status\n";
  for (const GradCheckResult& r : run_gradient_suite(s.u64("seed"), h, points)) {
    out << r.name << ',' << format_double(r.error) << ',' << format_double(r.tolerance) << ','
        << (r.passed() ? "ok" : "FAIL") << '\n';
    ok = ok && r.passed();
  }
  return ok ? kOk : kNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crowd density estimation with multi-branch attention CNNs", "amcnn"};
  app.require_subcommand(1);
  app.fallthrough(false);
  app.get_formatter()->column_width(40);

  const std::vector<std::string> sigma_keys = {"sigma", "fallback_sigma"};
  const std::vector<std::string> optim_keys = {"lr", "beta1", "beta2", "eps", "batch", "seed",
                                               "sigma", "fallback_sigma", "channels"};
  std::list<Command> commands;

  GenDensityArgs gen;
  Command& gen_cmd = commands.emplace_back(app, "gen-density", "write ground-truth density maps (DMAP) from head annotations", sigma_keys);
  gen_cmd.app->add_option("--data", gen.data, "dataset directory (writes <out>/<id>.density.dmap)");
  gen_cmd.app->add_option("--annotations", gen.annotations, "single annotation CSV");
  gen_cmd.app->add_option("--image", gen.image, "image giving the map size (single mode)");
  gen_cmd.app->add_option("--perspective", gen.perspective, "perspective map (single mode)");
  gen_cmd.app->add_option("--roi", gen.roi, "ROI polygon CSV (single mode)");
  gen_cmd.app->add_option("--scale", gen.scale, "1 = full resolution, 4 = sum-pooled quarter resolution")
      ->default_str("1")
      ->check(CLI::IsMember({1, 4}));
  gen_cmd.app->add_option("--out", gen.out, "output directory (--data) or DMAP file")->required();

  std::string synth_out;
  Command& synth_cmd = commands.emplace_back(
      app, "synth", "generate a synthetic dataset directory",
      std::vector<std::string>{"seed", "synth_count", "synth_height", "synth_width", "min_heads",
                               "max_heads", "noise"});
  synth_cmd.app->add_option("--out", synth_out, "output dataset directory")->required();

  std::string pre_data, pre_out;
  std::vector<std::string> pre_keys = optim_keys;
  pre_keys.insert(pre_keys.end(), {"c_p", "pretrain_iterations", "branches", "init_std"});
  Command& pre_cmd = commands.emplace_back(app, "pretrain", "pretrain each branch on its own (L_ED only)", pre_keys);
  pre_cmd.app->add_option("--data", pre_data, "training dataset directory")->required();
  pre_cmd.app->add_option("--out", pre_out, "output directory for branch_<X>.ckpt and pretrain_<X>.csv")
      ->required();

  TrainArgs tr;
  std::vector<std::string> train_keys = optim_keys;
  train_keys.insert(train_keys.end(),
                    {"alpha", "z", "use_rd", "c_f", "finetune_iterations", "checkpoint_every",
                     "variant", "branches", "attention_kernel", "rescale_attention", "init_std"});
  Command& train_cmd = commands.emplace_back(app, "train", "fine-tune the full model (L_ED + alpha * L_RD)", train_keys);
  train_cmd.app->add_option("--data", tr.data, "training dataset directory")->required();
  train_cmd.app->add_option("--out", tr.out, "final checkpoint path")->required();
  train_cmd.app->add_option("--pretrained", tr.pretrained, "directory with branch_<X>.ckpt from pretrain");
  train_cmd.app->add_flag("--from-scratch", tr.from_scratch, "skip branch pretraining");
  train_cmd.app->add_option("--log", tr.log, "per-step CSV: step,l_ed,l_rd,l,grad_norm");
  train_cmd.app->add_option("--eval-log", tr.eval_log, "per-epoch training-set MAE/MSE CSV");
  train_cmd.app->add_option("--checkpoint-dir", tr.checkpoint_dir,
                            "directory for periodic checkpoints (default <out stem>_checkpoints)");

  EvalArgs ev;
  Command& eval_cmd = commands.emplace_back(app, "eval", "report MAE/MSE over a dataset",
                                            std::vector<std::string>{"sigma", "fallback_sigma", "channels"});
  eval_cmd.app->add_option("--data", ev.data, "dataset directory with annotations")->required();
  eval_cmd.app->add_option("--model", ev.model, "checkpoint to evaluate");
  eval_cmd.app->add_option("--predictions", ev.predictions, "directory of <id>.density.dmap predictions");
  eval_cmd.app->add_option("--export", ev.export_dir, "write density and probability maps here (--model)");
  eval_cmd.app->add_option("--out", ev.out, "also write the report CSV to this file");

  PredictArgs pr;
  Command& predict_cmd = commands.emplace_back(app, "predict", "write density and probability maps for one image",
                                               std::vector<std::string>{});
  predict_cmd.app->add_option("--model", pr.model, "checkpoint")->required();
  predict_cmd.app->add_option("--image", pr.image, "PGM/PPM image")->required();
  predict_cmd.app->add_option("--roi", pr.roi, "ROI polygon CSV for the reported count");
  predict_cmd.app->add_option("--out", pr.out, "output directory")->required();

  double h = 1e-5;
  std::size_t points = 10;
  Command& gc_cmd = commands.emplace_back(app, "grad-check", "finite-difference check of every op and the training loss",
                                          std::vector<std::string>{"seed"});
  gc_cmd.app->add_option("--step", h, "central difference step")->default_str("1e-05");
  gc_cmd.app->add_option("--points", points, "random points per op")->default_str("10");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd.app) return gen_density(gen_cmd, gen, out, err);
    if (*synth_cmd.app) return synth(synth_cmd, synth_out, out);
    if (*pre_cmd.app) return pretrain(pre_cmd, pre_data, pre_out, out, err);
    if (*train_cmd.app) return train(train_cmd, tr, out, err);
    if (*eval_cmd.app) return eval(eval_cmd, ev, out, err);
    if (*predict_cmd.app) return predict(predict_cmd, pr, out);
    if (*gc_cmd.app) return grad_check_command(gc_cmd, h, points, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace amcnn::cli
