#include <doctest.h>

#include <cmath>
#include <random>

#include "amcnn/density.hpp"
#include "amcnn/error.hpp"

using namespace amcnn;

namespace {

HeadAnnotations annotations(std::vector<Point> points, std::size_t h = 64, std::size_t w = 64) {
  return HeadAnnotations{std::move(points), h, w};
}

// Unnormalised Gaussian mass of one head over the in-bounds cells within 4 sigma.
double brute_mass(const Point& p, double sigma, std::size_t h, std::size_t w) {
  double total = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d2 = std::pow(x - p.x, 2) + std::pow(y - p.y, 2);
      if (d2 <= 16.0 * sigma * sigma) total += std::exp(-d2 / (2 * sigma * sigma));
    }
  }
  return total;
}

}  // namespace

TEST_SUITE("density") {

TEST_CASE("knn sigmas by hand") {
  const auto s = knn_sigmas(annotations({{0, 0}, {3, 0}, {0, 4}}), 0.3);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(1.05).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(s[2] == doctest::Approx(1.35).epsilon(1e-14));

  const auto line = knn_sigmas(annotations({{10, 5}, {17, 5}, {24, 5}}), 0.3);
  CHECK(line[1] == doctest::Approx(0.3 * 7).epsilon(1e-14));

  const auto dup = knn_sigmas(annotations({{10, 10}, {10, 10}, {16, 10}}), 0.3);
  CHECK(dup[0] == doctest::Approx(0.3 * 6 / 2).epsilon(1e-14));

  CHECK_THROWS_AS(knn_sigmas(annotations({{1, 1}, {2, 2}}), 0.3), DataError);
}

TEST_CASE("knn sigmas: translation invariant, scale equivariant") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<Point> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({u(rng), u(rng)});
  const auto base = knn_sigmas(annotations(pts, 200, 200), 0.3);
  std::vector<Point> moved, scaled;
  for (const Point& p : pts) {
    moved.push_back({p.x + 31.5, p.y + 12.25});
    scaled.push_back({p.x * 3.0, p.y * 3.0});
  }
  const auto m = knn_sigmas(annotations(moved, 200, 200), 0.3);
  const auto s = knn_sigmas(annotations(scaled, 200, 200), 0.3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(m[i] == doctest::Approx(base[i]).epsilon(1e-12));
    CHECK(s[i] == doctest::Approx(3.0 * base[i]).epsilon(1e-12));
  }
}

TEST_CASE("knn falls back to the fixed sigma, with a warning") {
  SigmaPolicy policy = parse_sigma_policy("knn:0.3");
  const SigmaResult few = compute_sigmas(annotations({{5, 5}, {9, 9}}), policy);
  CHECK(few.sigmas == std::vector<double>{4.0, 4.0});
  CHECK(few.fallback_count == 2);
  CHECK_FALSE(few.warning.empty());

  // Point 0's two nearest neighbours coincide with it: sigma would be 0.
  const SigmaResult dup = compute_sigmas(annotations({{5, 5}, {5, 5}, {5, 5}, {30, 5}}), policy);
  CHECK(dup.sigmas[0] == 4.0);
  CHECK(dup.fallback_count == 3);
  CHECK_FALSE(dup.warning.empty());

  const SigmaResult ok = compute_sigmas(annotations({{0, 0}, {3, 0}, {0, 4}}), policy);
  CHECK(ok.fallback_count == 0);
  CHECK(ok.warning.empty());
}

TEST_CASE("perspective sigmas") {
  const Grid p10(8, 8, 10.0);
  const auto s = perspective_sigmas(annotations({{1, 1}, {6.4, 2.6}}, 8, 8), p10);
  CHECK(s == std::vector<double>{2.0, 2.0});
  Grid p(8, 8, 1.0);
  p.at(3, 5) = 20.0;
  CHECK(perspective_sigmas(annotations({{5.2, 2.8}}, 8, 8), p)[0] == 4.0);
  CHECK(perspective_sigmas(annotations({}, 8, 8), p).empty());
  CHECK_THROWS_AS(perspective_sigmas(annotations({{9, 1}}, 8, 8), p), DataError);
}

TEST_CASE("sigma policy parsing") {
  CHECK(parse_sigma_policy("knn:0.3").kind == SigmaKind::Knn);
  CHECK(parse_sigma_policy("knn:0.5").beta == 0.5);
  CHECK(parse_sigma_policy("persp").kind == SigmaKind::Perspective);
  CHECK(parse_sigma_policy("fixed:4").fixed_sigma == 4.0);
  CHECK(parse_sigma_policy(to_string(parse_sigma_policy("fixed:2.5"))).fixed_sigma == 2.5);
  CHECK_THROWS_AS(parse_sigma_policy("gauss"), DataError);
  CHECK_THROWS_AS(parse_sigma_policy("knn:x"), DataError);
  CHECK_THROWS_AS(parse_sigma_policy("fixed:-1"), DataError);
}

TEST_CASE("splat density conserves counts") {
  const DensityMap one = splat_density(annotations({{32, 32}}), {4.0}, 64, 64);
  CHECK(std::abs(one.count() - 1.0) <= 1e-9);
  CHECK(one.scale == 1);
  const DensityMap two = splat_density(annotations({{10, 20}, {40.5, 50.25}}), {4.0, 2.0}, 64, 64);
  CHECK(std::abs(two.count() - 2.0) <= 1e-9);
  for (double v : two.grid.values) CHECK(v >= 0.0);

  // A corner head keeps unit mass; each in-bounds cell holds its brute-force
  // Gaussian weight over the clipped mass.
  const DensityMap corner = splat_density(annotations({{0, 0}}), {4.0}, 64, 64);
  CHECK(std::abs(corner.count() - 1.0) <= 1e-12);
  const double mass = brute_mass({0, 0}, 4.0, 64, 64);
  CHECK(mass < brute_mass({32, 32}, 4.0, 64, 64) / 3.0);
  CHECK(corner.grid.at(0, 0) == doctest::Approx(1.0 / mass).epsilon(1e-12));
  CHECK(corner.grid.at(3, 2) == doctest::Approx(std::exp(-13.0 / 32.0) / mass).epsilon(1e-12));
  CHECK(corner.grid.at(16, 1) == 0.0);  // beyond 4 sigma

  CHECK_THROWS_AS(splat_density(annotations({{1, 1}}), {0.0}, 64, 64), DataError);
  CHECK_THROWS_AS(splat_density(annotations({{1, 1}}), {}, 64, 64), DataError);
}

TEST_CASE("tiny sigma puts the mass on the nearest cell") {
  const DensityMap m = splat_density(annotations({{3.25, 4.5}}, 8, 8), {1e-3}, 8, 8);
  CHECK(m.count() == 1.0);
}

TEST_CASE("flipping annotations flips the map exactly") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> q(0, 4 * 47);
  std::vector<Point> pts, mirrored;
  for (int i = 0; i < 20; ++i) {
    const Point p{q(rng) / 4.0, q(rng) / 4.0};
    pts.push_back(p);
    mirrored.push_back({47.0 - p.x, p.y});
  }
  const auto sigmas = knn_sigmas(annotations(pts, 48, 48), 0.3);
  const DensityMap a = splat_density(annotations(pts, 48, 48), sigmas, 48, 48);
  const DensityMap b = splat_density(annotations(mirrored, 48, 48), sigmas, 48, 48);
  CHECK(hflip(a.grid) == b.grid);
}

TEST_CASE("sum pool downsampling") {
  const DensityMap c = sum_pool_downsample(DensityMap{Grid(4, 4, 0.0625), 1}, 4);
  CHECK(c.grid.height == 1);
  CHECK(c.grid.values[0] == 1.0);
  CHECK(c.scale == 4);
  for (double v : sum_pool_downsample(DensityMap{Grid(8, 8), 1}, 4).grid.values) CHECK(v == 0.0);

  std::mt19937_64 rng(3);
  Grid g(8, 8);
  for (double& v : g.values) v = std::uniform_real_distribution<double>(0, 1)(rng);
  const DensityMap d = sum_pool_downsample(DensityMap{g, 1}, 4);
  double block = 0.0;
  for (std::size_t y = 4; y < 8; ++y) {
    for (std::size_t x = 0; x < 4; ++x) block += g.at(y, x);
  }
  CHECK(d.grid.at(1, 0) == doctest::Approx(block).epsilon(1e-15));
  CHECK(std::abs(d.count() - g.sum()) <= 1e-12);
  CHECK_THROWS_AS(sum_pool_downsample(DensityMap{Grid(6, 8), 1}, 4), ShapeError);
}

TEST_CASE("ROI rasterisation and masking") {
  const std::vector<Point> left_half = {{-0.5, -0.5}, {7.5, -0.5}, {7.5, 15.5}, {-0.5, 15.5}};
  const RoiMask roi = make_roi(left_half, 16, 16);
  CHECK(roi.full.count_inside() == 128);
  CHECK(roi.quarter.count_inside() == 8);
  CHECK(roi.at_scale(4) == roi.quarter);
  CHECK_THROWS_AS(roi.at_scale(2), ShapeError);

  const DensityMap uniform{Grid(16, 16, 0.5), 1};
  CHECK(apply_roi_mask(uniform, roi).count() == doctest::Approx(uniform.count() / 2));
  const RoiMask all = make_roi({{-1, -1}, {17, -1}, {17, 17}, {-1, 17}}, 16, 16);
  CHECK(apply_roi_mask(uniform, all).grid == uniform.grid);
  const RoiMask none = make_roi({{20, 20}, {30, 20}, {30, 30}}, 16, 16);
  CHECK(apply_roi_mask(uniform, none).count() == 0.0);
  CHECK_THROWS_AS(apply_roi_mask(DensityMap{Grid(8, 8), 1}, roi), ShapeError);

  // A diagonal half-plane on a uniform map halves the sum to within one row's mass.
  const RoiMask diag = make_roi({{-0.5, -0.5}, {16.5, 16.5}, {-0.5, 16.5}}, 16, 16);
  CHECK(std::abs(apply_roi_mask(uniform, diag).count() - uniform.count() / 2) <= 16 * 0.5);
}

TEST_CASE("block majority needs half of the block") {
  BinaryMask fine{4, 4, std::vector<std::uint8_t>(16, 0)};
  for (int i = 0; i < 7; ++i) fine.cells[i] = 1;
  CHECK(block_majority(fine, 4).count_inside() == 0);
  fine.cells[7] = 1;
  CHECK(block_majority(fine, 4).count_inside() == 1);
}

TEST_CASE("annotation bounds are validated") {
  CHECK_NOTHROW(annotations({{0, 0}, {63.9, 63.9}}).validate());
  CHECK_THROWS_AS(annotations({{64, 3}}).validate(), DataError);
  CHECK_THROWS_AS(annotations({{3, -0.1}}).validate(), DataError);
}

}  // TEST_SUITE
