#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "amcnn/model.hpp"
#include "amcnn/ops.hpp"
#include "test_util.hpp"

using namespace amcnn;

namespace {

ModelParams model_with(Variant variant, std::uint64_t seed = 1, double init_std = 0.01) {
  ModelConfig config;
  config.variant = variant;
  if (variant == Variant::SingleBranch || variant == Variant::BranchOnly) {
    config.branches = {default_branch_spec(BranchLabel::M)};
  }
  config.seed = seed;
  config.init_std = init_std;
  return build_model(config);
}

double sample_std(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size() - 1));
}

CheckpointError::Kind load_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    load_checkpoint(in);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("checkpoint unexpectedly loaded");
  return CheckpointError::Kind::Io;
}

std::string saved(const ModelParams& model) {
  std::ostringstream out;
  save_checkpoint(model, out);
  return out.str();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("branch specs follow the filter table") {
  const BranchSpec l = default_branch_spec(BranchLabel::L);
  const BranchSpec m = default_branch_spec(BranchLabel::M);
  const BranchSpec s = default_branch_spec(BranchLabel::S);
  CHECK(l.kernel_sizes == std::array<std::size_t, 4>{9, 7, 7, 7});
  CHECK(m.kernel_sizes == std::array<std::size_t, 4>{7, 5, 5, 5});
  CHECK(s.kernel_sizes == std::array<std::size_t, 4>{5, 3, 3, 3});
  CHECK(l.channels == std::array<std::size_t, 4>{16, 32, 16, 8});
  CHECK(m.channels == std::array<std::size_t, 4>{20, 40, 20, 10});
  CHECK(s.channels == std::array<std::size_t, 4>{24, 48, 24, 12});
  CHECK(ModelConfig{}.concat_channels() == 30);
  CHECK(parse_variant("amcnn3") == Variant::AmCnn3);
  CHECK(to_string(Variant::SingleBranch) == "single");
  CHECK_FALSE(parse_variant("vgg"));
}

TEST_CASE("parameters are named and shaped consistently") {
  const ModelParams m = model_with(Variant::AmCnn);
  CHECK(m.get("branch.L.conv1.weight").tensor.shape() == Shape{16, 1, 9, 9});
  CHECK(m.get("branch.S.conv4.weight").tensor.shape() == Shape{12, 24, 3, 3});
  CHECK(m.get("attention.weight").tensor.shape() == Shape{1, 30, 1, 1});
  CHECK(m.get("head.weight").tensor.shape() == Shape{1, 30, 1, 1});
  CHECK(m.params.size() == 3 * 8 + 2 + 2);
  for (const Parameter& p : m.params) {
    CHECK(p.tensor.requires_grad());
    if (p.tensor.rank() == 1) {
      for (double v : p.tensor.values()) CHECK(v == 0.0);
    }
  }

  const ModelParams three = model_with(Variant::AmCnn3);
  CHECK(three.get("attention.M.weight").tensor.shape() == Shape{1, 10, 1, 1});
  CHECK(three.find("attention.weight") == nullptr);

  ModelParams single = model_with(Variant::SingleBranch);
  CHECK(single.params.size() == 8 + 2 + 2);
  CHECK(single.get("head.weight").tensor.shape() == Shape{1, 10, 1, 1});
  CHECK(single.with_prefix("branch.M.").size() == 8);
  CHECK(single.with_prefix("branch.L.").empty());
}

TEST_CASE("build_model is deterministic per seed") {
  const ModelParams a = model_with(Variant::AmCnn, 5);
  const ModelParams b = model_with(Variant::AmCnn, 5);
  const ModelParams c = model_with(Variant::AmCnn, 6);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].tensor.values() == b.params[i].tensor.values());
  }
  CHECK(a.get("attention.weight").tensor.values() != c.get("attention.weight").tensor.values());
}

TEST_CASE("attention weights are drawn with deviation 0.01") {
  ModelConfig config;
  config.attention_kernel = 19;  // 30 * 19 * 19 = 10830 samples
  config.seed = 42;
  const ModelParams m = build_model(config);
  const auto w = m.get("attention.weight").tensor.data();
  REQUIRE(w.size() >= 10000);
  const double sd = sample_std(w);
  CHECK(sd >= 0.008);
  CHECK(sd <= 0.012);
}

TEST_CASE("invalid configs are rejected") {
  ModelConfig config;
  config.attention_kernel = 2;
  CHECK_THROWS_AS(config.validate(), ShapeError);
  config = ModelConfig{};
  config.variant = Variant::SingleBranch;
  CHECK_THROWS_AS(config.validate(), ShapeError);
  config = ModelConfig{};
  config.branches.push_back(default_branch_spec(BranchLabel::L));
  CHECK_THROWS_AS(config.validate(), ShapeError);
}

TEST_CASE("forward shapes") {
  const ModelParams m = model_with(Variant::AmCnn);
  for (std::size_t h : {16, 32, 64}) {
    for (std::size_t w : {16, 48}) {
      const ForwardResult r = forward(m, Tensor({1, h, w}, 0.5));
      CHECK(r.density.shape() == Shape{1, h / 4, w / 4});
      REQUIRE(r.attention.size() == 1);
      CHECK(r.attention[0].shape() == Shape{1, h / 4, w / 4});
    }
  }
  CHECK(forward(model_with(Variant::AmCnn3), Tensor({1, 64, 64})).attention.size() == 3);
  CHECK(forward(model_with(Variant::BranchOnly), Tensor({1, 32, 32})).attention.empty());
  CHECK_THROWS_AS(forward(m, Tensor({1, 30, 32})), ShapeError);
  CHECK_THROWS_AS(forward(m, Tensor({3, 32, 32})), ShapeError);
}

TEST_CASE("branch features") {
  const ModelParams m = model_with(Variant::AmCnn, 3, 0.1);
  CHECK(forward_branch(m, BranchLabel::L, Tensor({1, 64, 64})).shape() == Shape{8, 16, 16});
  const Tensor zero_branch = forward_branch(m, BranchLabel::S, Tensor({1, 32, 32}));
  for (double v : zero_branch.values()) CHECK(v == 0.0);
  CHECK(forward_branch(m, BranchLabel::M, Tensor({1, 64, 128}, 1.0)).shape() == Shape{10, 16, 32});
}

TEST_CASE("attention head algebra") {
  std::mt19937_64 rng(4);
  const Tensor w = test::random_tensor({1, 3, 1, 1}, rng);
  const Tensor b({1}, 0.2);

  // Spatially uniform features: uniform M, and with rescale F_att == features.
  Tensor f({3, 4, 5});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 5; ++x) f.at(c, y, x) = 0.3 * (c + 1);
    }
  }
  const AttentionOutput u = attention_head(f, w, b, true);
  for (double v : u.probability.values()) CHECK(v == doctest::Approx(1.0 / 20).epsilon(1e-14));
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(u.features.values()[i] == doctest::Approx(f.values()[i]).epsilon(1e-13));
  const AttentionOutput literal = attention_head(f, w, b, false);
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(literal.features.values()[i] == doctest::Approx(f.values()[i] / 20).epsilon(1e-13));

  const Tensor g = test::random_tensor({3, 6, 6}, rng);
  const AttentionOutput r = attention_head(g, w, b, true);
  double s = 0.0;
  for (double v : r.probability.values()) {
    CHECK(v > 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
  const Tensor expected = tanh(conv2d(g, w, b));
  CHECK(r.score.values() == expected.values());
  for (double v : r.score.values()) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("density is non-negative") {
  std::mt19937_64 rng(5);
  const ModelParams m = model_with(Variant::AmCnn, 8, 0.2);
  const ForwardResult r = forward(m, test::random_tensor({1, 32, 32}, rng));
  for (double v : r.density.values()) CHECK(v >= 0.0);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  std::mt19937_64 rng(6);
  for (Variant v : {Variant::AmCnn, Variant::AmCnn3, Variant::SingleBranch, Variant::BranchOnly}) {
    const ModelParams m = model_with(v, 7, 0.05);
    std::istringstream in(saved(m));
    const ModelParams back = load_checkpoint(in);
    CHECK(back.config == m.config);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      CHECK(back.params[i].name == m.params[i].name);
      CHECK(back.params[i].tensor.values() == m.params[i].tensor.values());
    }
    const Tensor image = test::random_tensor({1, 32, 32}, rng);
    CHECK(forward(back, image).density.values() == forward(m, image).density.values());
  }
  const std::string bytes = saved(model_with(Variant::AmCnn));
  CHECK(bytes.substr(0, 6) == "AMCNN1");
}

TEST_CASE("corrupt checkpoints raise distinct errors") {
  const std::string good = saved(model_with(Variant::AmCnn));
  std::string magic = good;
  magic[0] = 'X';
  CHECK(load_error(magic) == CheckpointError::Kind::Version);
  std::string version = good;
  version[5] = '2';
  CHECK(load_error(version) == CheckpointError::Kind::Version);
  CHECK(load_error(good.substr(0, good.size() / 2)) == CheckpointError::Kind::Truncated);
  CHECK(load_error(good.substr(0, 3)) == CheckpointError::Kind::Version);
  std::string variant = good;
  variant[6] = 9;
  CHECK(load_error(variant) == CheckpointError::Kind::Inconsistent);

  test::TempDir dir("model");
  try {
    load_checkpoint(dir / "absent.ckpt");
    FAIL("loaded a missing file");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Io);
    CHECK(std::string(e.what()).find("absent.ckpt") != std::string::npos);
  }
}

TEST_CASE("pretrained branch weights load by name") {
  ModelConfig single;
  single.variant = Variant::BranchOnly;
  single.branches = {default_branch_spec(BranchLabel::S)};
  single.seed = 11;
  const ModelParams source = build_model(single);
  ModelParams target = model_with(Variant::AmCnn, 12);
  const auto head_before = target.get("head.weight").tensor.values();
  load_branch_weights(target, source, BranchLabel::S);
  for (const Parameter& p : source.params) {
    if (p.name.rfind("branch.S.", 0) == 0) CHECK(target.get(p.name).tensor.values() == p.tensor.values());
  }
  CHECK(target.get("head.weight").tensor.values() == head_before);

  ModelConfig wrong = single;
  wrong.branches[0].channels[3] = 7;
  CHECK_THROWS_AS(load_branch_weights(target, build_model(wrong), BranchLabel::S), ShapeError);
  CHECK_THROWS_AS(load_branch_weights(target, source, BranchLabel::L), ShapeError);
}

}  // TEST_SUITE
