#include <cmath>
#include <random>

#include "amcnn/gradcheck.hpp"
#include "amcnn/losses.hpp"
#include "amcnn/model.hpp"
#include "amcnn/ops.hpp"

namespace amcnn {
namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;
constexpr std::size_t kEndToEndProbes = 20;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Values with magnitude in [0.1, 1] so that ReLU is probed away from its kink.
Tensor off_kink_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

Grid random_grid(std::size_t h, std::size_t w, std::mt19937_64& rng, double hi) {
  std::uniform_real_distribution<double> dist(0.0, hi);
  Grid g(h, w);
  for (double& v : g.values) v = dist(rng);
  return g;
}

// Rescales conv weights to He-normal magnitudes so activations stay O(1)
// through the branches and the check is not dominated by vanishing signals.
void he_reinit(ModelParams& model, std::mt19937_64& rng) {
  for (Parameter& p : model.params) {
    Tensor& t = p.tensor;
    if (t.rank() == 4) {
      const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
      for (double& v : t.data()) v = normal(rng);
    } else {
      std::uniform_real_distribution<double> bias(0.0, 0.1);
      for (double& v : t.data()) v = bias(rng);
    }
  }
}

double end_to_end_error(Variant variant, double alpha, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  ModelConfig config;
  config.variant = variant;
  config.seed = seed;
  ModelParams model = build_model(config);
  he_reinit(model, rng);
  const Tensor image = random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  const Grid target = random_grid(8, 8, rng, 0.2);
  LossConfig loss_config;
  loss_config.alpha = alpha;
  const auto loss = [&] {
    const ForwardResult out = forward(model, image);
    const LossTarget t{&target, nullptr};
    return training_loss({&out.density, 1}, {&t, 1}, loss_config).total;
  };

  const std::size_t total = model.scalar_count();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::vector<ParameterProbe> probes;
  for (std::size_t i = 0; i < kEndToEndProbes; ++i) {
    std::size_t flat = pick(rng);
    std::size_t param = 0;
    while (flat >= model.params[param].tensor.numel()) flat -= model.params[param++].tensor.numel();
    probes.push_back({param, flat});
  }
  return grad_check_parameters(loss, model.params, probes, h);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, double h,
                                                std::size_t points_per_op) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> results;

  const auto check = [&](const std::string& name, auto make_fn, auto make_point) {
    double worst = 0.0;
    for (std::size_t i = 0; i < points_per_op; ++i) {
      const ScalarFn fn = make_fn();
      worst = std::max(worst, grad_check(fn, make_point(), h));
    }
    results.push_back({name, worst, kOpTolerance});
  };
  const auto projected = [&](std::function<Tensor(const Tensor&)> op) {
    return random_projection(std::move(op), rng());
  };

  check(
      "conv2d/input",
      [&] {
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        return projected([w, b](const Tensor& x) { return conv2d(x, w, b); });
      },
      [&] { return random_tensor({2, 6, 7}, rng); });
  check(
      "conv2d/weight",
      [&] {
        Tensor x = random_tensor({2, 6, 7}, rng);
        Tensor b = random_tensor({3}, rng);
        return projected([x, b](const Tensor& w) { return conv2d(x, w, b); });
      },
      [&] { return random_tensor({3, 2, 5, 5}, rng); });
  check(
      "conv2d/bias",
      [&] {
        Tensor x = random_tensor({2, 5, 5}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        return projected([x, w](const Tensor& b) { return conv2d(x, w, b); });
      },
      [&] { return random_tensor({3}, rng); });
  check(
      "maxpool2x2", [&] { return projected([](const Tensor& x) { return maxpool2x2(x); }); },
      [&] { return random_tensor({2, 4, 6}, rng); });
  check(
      "relu", [&] { return projected([](const Tensor& x) { return relu(x); }); },
      [&] { return off_kink_tensor({2, 3, 3}, rng); });
  check(
      "tanh", [&] { return projected([](const Tensor& x) { return tanh(x); }); },
      [&] { return random_tensor({2, 3, 3}, rng, -2.0, 2.0); });
  check(
      "spatial_softmax",
      [&] { return projected([](const Tensor& x) { return spatial_softmax(x); }); },
      [&] { return random_tensor({1, 4, 5}, rng, -3.0, 3.0); });
  check(
      "broadcast_mul/features",
      [&] {
        Tensor m = random_tensor({1, 3, 4}, rng);
        return projected([m](const Tensor& f) { return broadcast_mul(f, m); });
      },
      [&] { return random_tensor({3, 3, 4}, rng); });
  check(
      "broadcast_mul/map",
      [&] {
        Tensor f = random_tensor({3, 3, 4}, rng);
        return projected([f](const Tensor& m) { return broadcast_mul(f, m); });
      },
      [&] { return random_tensor({1, 3, 4}, rng); });
  check(
      "attention_head",
      [&] {
        Tensor w = random_tensor({1, 3, 1, 1}, rng);
        Tensor b = random_tensor({1}, rng);
        return projected(
            [w, b](const Tensor& f) { return attention_head(f, w, b, true).features; });
      },
      [&] { return random_tensor({3, 4, 4}, rng); });
  check(
      "euclidean_loss",
      [&] {
        auto gt = std::make_shared<Grid>(random_grid(4, 4, rng, 1.0));
        return ScalarFn([gt](const Tensor& p) {
          const LossTarget t{gt.get(), nullptr};
          return euclidean_loss({&p, 1}, {&t, 1});
        });
      },
      [&] { return random_tensor({1, 4, 4}, rng, 0.0, 1.0); });
  check(
      "relative_deviation_loss",
      [&] {
        std::uniform_real_distribution<double> count(0.0, 20.0);
        const double y = count(rng);
        return ScalarFn([y](const Tensor& p) {
          const Tensor c = predicted_count(p);
          return relative_deviation_loss(std::span<const double>(&y, 1), {&c, 1}, 1.0);
        });
      },
      [&] { return random_tensor({1, 4, 4}, rng, 0.0, 1.0); });

  results.push_back({"end_to_end/amcnn", end_to_end_error(Variant::AmCnn, 1e-7, rng(), h),
                     kEndToEndTolerance});
  results.push_back({"end_to_end/amcnn(alpha=1)", end_to_end_error(Variant::AmCnn, 1.0, rng(), h),
                     kEndToEndTolerance});
  results.push_back({"end_to_end/amcnn3", end_to_end_error(Variant::AmCnn3, 1e-7, rng(), h),
                     kEndToEndTolerance});
  return results;
}

}  // namespace amcnn
