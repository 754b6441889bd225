#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "amcnn/error.hpp"
#include "amcnn/losses.hpp"
#include "amcnn/ops.hpp"

using namespace amcnn;

namespace {

Tensor as_tensor(const Grid& g) { return Tensor({1, g.height, g.width}, g.values); }

double ed_of(const Grid& pred, const Grid& gt, const BinaryMask* mask = nullptr) {
  const Tensor p = as_tensor(pred);
  const LossTarget t{&gt, mask};
  return euclidean_loss({&p, 1}, {&t, 1}).item();
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("euclidean loss by hand") {
  Grid gt(2, 2, 0.5);
  CHECK(ed_of(gt, gt) == 0.0);
  Grid pred = gt;
  pred.at(1, 0) += 2.0;
  CHECK(ed_of(pred, gt) == 1.0);

  Grid a(3, 3), b(3, 3);
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < 9; ++i) {
    a.values[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    b.values[i] = std::uniform_real_distribution<double>(0, 1)(rng);
  }
  Grid a3 = a, b3 = b;
  for (std::size_t i = 0; i < 9; ++i) {
    a3.values[i] *= 3.0;
    b3.values[i] *= 3.0;
  }
  CHECK(ed_of(a3, b3) == doctest::Approx(9.0 * ed_of(a, b)).epsilon(1e-13));

  CHECK_THROWS_AS(ed_of(Grid(2, 3), Grid(2, 2)), ShapeError);
}

TEST_CASE("euclidean loss averages over the batch") {
  const Grid g1(2, 2, 0.0), g2(1, 4, 0.0);
  const Tensor p1({1, 2, 2}, {2, 0, 0, 0}), p2({1, 1, 4}, {1, 1, 0, 0});
  const Tensor preds[] = {p1, p2};
  const LossTarget targets[] = {{&g1, nullptr}, {&g2, nullptr}};
  CHECK(euclidean_loss(preds, targets).item() == doctest::Approx((4.0 / 4 + 2.0 / 4) / 2));
}

TEST_CASE("masked pixels leave both the sum and the pixel count") {
  Grid gt(2, 2, 0.0);
  Grid pred(2, 2, 0.0);
  pred.at(0, 0) = 2.0;
  pred.at(1, 1) = 100.0;
  const BinaryMask mask{2, 2, {1, 1, 1, 0}};
  CHECK(ed_of(pred, gt, &mask) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  const Tensor p = as_tensor(pred);
  CHECK(predicted_count(p, &mask).item() == 2.0);
  CHECK(masked_count(pred, &mask) == 2.0);
  CHECK(masked_count(pred) == 102.0);
}

TEST_CASE("relative deviation loss") {
  const double y = 10.0, yp = 8.0;
  CHECK(std::abs(relative_deviation_loss({&y, 1}, {&yp, 1}, 1.0) - 4.0 / 121.0) <= 1e-12);
  CHECK(relative_deviation_loss({&y, 1}, {&y, 1}, 1.0) == 0.0);
  const double zero = 0.0;
  CHECK(relative_deviation_loss({&zero, 1}, {&zero, 1}, 1.0) == 0.0);

  const Tensor t = Tensor::scalar(8.0);
  CHECK(relative_deviation_loss({&y, 1}, {&t, 1}, 1.0).item() ==
        relative_deviation_loss({&y, 1}, {&yp, 1}, 1.0));

  // Fixed absolute error weighs less as the crowd grows.
  double previous = 1e300;
  for (double gt : {5.0, 50.0, 500.0}) {
    const double pred = gt + 5.0;
    const double l = relative_deviation_loss({&gt, 1}, {&pred, 1}, 1.0);
    CHECK(l < previous);
    previous = l;
  }
}

TEST_CASE("combined loss") {
  const Tensor ed = Tensor::scalar(1.0);
  const Tensor rd = Tensor::scalar(0.0330578);
  LossConfig cfg;
  CHECK(combined_loss(ed, rd, cfg).item() == 1.0 + 1e-7 * 0.0330578);
  CHECK(combined_loss(ed, rd, cfg).item() > 1.0);
  cfg.alpha = 0.0;
  CHECK(combined_loss(ed, rd, cfg).item() == 1.0);
  cfg.alpha = 1e-7;
  CHECK(combined_loss(ed, Tensor::scalar(0.0), cfg).item() == 1.0);
  cfg.use_rd = false;
  CHECK(combined_loss(ed, rd, cfg).same_storage(ed));

  LossConfig bad;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = LossConfig{};
  bad.z = 0.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("combined loss is monotone in each term") {
  LossConfig cfg;
  cfg.alpha = 0.5;
  const double base = combined_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), cfg).item();
  CHECK(combined_loss(Tensor::scalar(1.5), Tensor::scalar(2.0), cfg).item() >= base);
  CHECK(combined_loss(Tensor::scalar(1.0), Tensor::scalar(2.5), cfg).item() >= base);
}

TEST_CASE("MAE and MSE") {
  const EvalReport r = mae_mse({{"a", 10, 12}, {"b", 20, 17}});
  CHECK(r.mae == 2.5);
  CHECK(r.mse == doctest::Approx(std::sqrt(6.5)).epsilon(1e-15));
  const EvalReport perfect = mae_mse({{"a", 3, 3}, {"b", 9, 9}});
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.mse == 0.0);
  const EvalReport one = mae_mse({{"a", 4, 7.5}});
  CHECK(one.mae == 3.5);
  CHECK(one.mse == 3.5);
  CHECK_THROWS_AS(mae_mse({}), DataError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CountPair> pairs;
    for (int i = 0; i < 7; ++i) pairs.push_back({"x", u(rng), u(rng)});
    const EvalReport e = mae_mse(pairs);
    CHECK(e.mae <= e.mse + 1e-12);
  }
}

TEST_CASE("eval CSV round trip") {
  const EvalReport r = mae_mse({{"img_1", 10, 12.25}, {"img_2", 0, 0.5}});
  std::stringstream buf;
  write_eval_csv(buf, r);
  const std::string text = buf.str();
  CHECK(text.rfind("image_id,gt_count,pred_count\nimg_1,10,12.25\n", 0) == 0);
  CHECK(text.find("\nMAE,1.375\n") != std::string::npos);
  const EvalReport back = read_eval_csv(buf);
  CHECK(back.mae == r.mae);
  CHECK(back.mse == r.mse);
  REQUIRE(back.per_image.size() == 2);
  CHECK(back.per_image[1].pred == 0.5);

  std::stringstream zero;
  write_eval_csv(zero, mae_mse({{"a", 3, 3}}));
  CHECK(zero.str().find("MAE,0\nMSE,0\n") != std::string::npos);
}

}  // TEST_SUITE
