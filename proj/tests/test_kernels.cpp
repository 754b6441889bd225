#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>
#include <vector>

#include "amcnn/model.hpp"
#include "amcnn/simd/kernels.hpp"
#include "test_util.hpp"

using namespace amcnn;
using simd::Isa;
using simd::KernelTable;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-13) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(a[i])));
  }
}

const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 101};
const std::size_t kKernels[] = {1, 3, 5, 7, 9};

// Restores the dispatcher after tests that switch it.
struct IsaGuard {
  Isa saved = simd::active_isa();
  ~IsaGuard() { simd::set_isa(saved); }
};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("isa names parse back") {
  CHECK(simd::parse_isa("scalar") == Isa::Scalar);
  CHECK(simd::parse_isa("avx2") == Isa::Avx2);
  CHECK_FALSE(simd::parse_isa("neon"));
  CHECK(simd::isa_name(Isa::Scalar) == "scalar");
  CHECK(simd::scalar_kernels().isa == Isa::Scalar);
}

TEST_CASE("set_isa switches the active table") {
  IsaGuard guard;
  CHECK(simd::set_isa(Isa::Scalar));
  CHECK(simd::active_isa() == Isa::Scalar);
  CHECK(&simd::kernels() == &simd::scalar_kernels());
  if (simd::avx2_kernels() != nullptr) {
    CHECK(simd::set_isa(Isa::Avx2));
    CHECK(simd::active_isa() == Isa::Avx2);
  } else {
    CHECK_FALSE(simd::set_isa(Isa::Avx2));
  }
}

TEST_CASE("scalar kernels match hand evaluation") {
  const KernelTable& k = simd::scalar_kernels();
  const double a[] = {1, 2, 3};
  const double b[] = {4, 5, 6};
  CHECK(k.dot(a, b, 3) == 32.0);
  CHECK(k.sum(a, 3) == 6.0);
  double y[] = {1, 1, 1};
  k.axpy(2.0, a, y, 3);
  CHECK(y[2] == 7.0);

  // out[j] += w0*in[j] + w1*in[j+1]
  const double in[] = {1, 2, 3, 4};
  const double w[] = {10, 1};
  double out[3] = {0, 0, 0};
  k.correlate_row(in, w, 2, out, 3);
  CHECK(out[0] == 12.0);
  CHECK(out[2] == 34.0);

  const double x[] = {-1, 0, 2};
  double r[3];
  k.relu(x, r, 3);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  const double bad[] = {std::nan(""), -0.0};
  k.relu(bad, r, 2);
  CHECK(std::isnan(r[0]));  // divergence must stay visible
  CHECK(r[1] == 0.0);
  const double gy[] = {5, 5, 5};
  double gx[] = {1, 1, 1};
  k.relu_backward(x, gy, gx, 3);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == 1.0);  // subgradient 0 at 0
  CHECK(gx[2] == 6.0);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* fast = simd::avx2_kernels();
  if (fast == nullptr) {
    MESSAGE("AVX2+FMA unavailable; skipping");
    return;
  }
  const KernelTable& ref = simd::scalar_kernels();
  std::mt19937_64 rng(11);

  for (std::size_t n : kLengths) {
    CAPTURE(n);
    const auto a = random_vector(n, rng);
    const auto b = random_vector(n, rng);
    CHECK(std::abs(ref.dot(a.data(), b.data(), n) - fast->dot(a.data(), b.data(), n)) <= 1e-13);
    CHECK(std::abs(ref.sum(a.data(), n) - fast->sum(a.data(), n)) <= 1e-13);

    auto y1 = b, y2 = b;
    ref.axpy(0.7, a.data(), y1.data(), n);
    fast->axpy(0.7, a.data(), y2.data(), n);
    check_close(y1, y2);

    std::vector<double> r1(n), r2(n);
    ref.relu(a.data(), r1.data(), n);
    fast->relu(a.data(), r2.data(), n);
    CHECK(r1 == r2);

    auto g1 = b, g2 = b;
    ref.relu_backward(a.data(), y1.data(), g1.data(), n);
    fast->relu_backward(a.data(), y1.data(), g2.data(), n);
    CHECK(g1 == g2);

    if (n > 0) {
      auto special = a;
      special[0] = -0.0;
      special[n - 1] = std::nan("");
      ref.relu(special.data(), r1.data(), n);
      fast->relu(special.data(), r2.data(), n);
      CHECK(std::isnan(r2[n - 1]));
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isnan(r1[i])) CHECK(std::bit_cast<std::uint64_t>(r1[i]) == std::bit_cast<std::uint64_t>(r2[i]));
      }
    }

    for (std::size_t k : kKernels) {
      CAPTURE(k);
      const auto in = random_vector(n + k - 1, rng);
      const auto w = random_vector(k, rng);
      auto o1 = random_vector(n, rng);
      auto o2 = o1;
      ref.correlate_row(in.data(), w.data(), k, o1.data(), n);
      fast->correlate_row(in.data(), w.data(), k, o2.data(), n);
      check_close(o1, o2);

      auto gi1 = random_vector(n + k - 1, rng);
      auto gi2 = gi1;
      ref.correlate_row_adjoint(o1.data(), w.data(), k, gi1.data(), n);
      fast->correlate_row_adjoint(o1.data(), w.data(), k, gi2.data(), n);
      check_close(gi1, gi2);

      auto gw1 = random_vector(k, rng);
      auto gw2 = gw1;
      ref.correlate_row_weight_grad(o1.data(), in.data(), k, gw1.data(), n);
      fast->correlate_row_weight_grad(o1.data(), in.data(), k, gw2.data(), n);
      check_close(gw1, gw2, 1e-12);
    }
  }
}

TEST_CASE("avx2 adam update agrees with the scalar reference") {
  const KernelTable* fast = simd::avx2_kernels();
  if (fast == nullptr) return;
  std::mt19937_64 rng(5);
  const simd::AdamCoeffs c{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
  for (std::size_t n : kLengths) {
    auto p1 = random_vector(n, rng), m1 = random_vector(n, rng), g1 = random_vector(n, rng);
    std::vector<double> v1(n);
    for (double& v : v1) v = std::abs(random_vector(1, rng)[0]);
    auto p2 = p1, m2 = m1, v2 = v1, g2 = g1;
    simd::scalar_kernels().adam_update(p1.data(), m1.data(), v1.data(), g1.data(), n, c);
    fast->adam_update(p2.data(), m2.data(), v2.data(), g2.data(), n, c);
    check_close(p1, p2);
    check_close(m1, m2);
    check_close(v1, v2);
    CHECK(g1 == std::vector<double>(n, 0.0));
    CHECK(g2 == std::vector<double>(n, 0.0));
  }
}

TEST_CASE("model forward agrees across instruction sets") {
  if (simd::avx2_kernels() == nullptr) return;
  IsaGuard guard;
  ModelConfig config;
  config.seed = 3;
  config.init_std = 0.1;
  const ModelParams model = build_model(config);
  std::mt19937_64 rng(2);
  const Tensor image = test::random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  simd::set_isa(Isa::Scalar);
  const ForwardResult a = forward(model, image);
  simd::set_isa(Isa::Avx2);
  const ForwardResult b = forward(model, image);
  check_close(a.density.values(), b.density.values(), 1e-11);
  check_close(a.attention[0].values(), b.attention[0].values(), 1e-11);
}

}  // TEST_SUITE
