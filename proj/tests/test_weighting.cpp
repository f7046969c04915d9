// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vaealign/adaptive_weighting.hpp"
#include "vaealign/errors.hpp"

using namespace vaealign;

namespace {

// 0.5 x^T A x + b^T x with A = M^T M
struct Quadratic {
  std::size_t n;
  std::vector<double> a, b;
  Quadratic(std::size_t n_, std::mt19937_64& rng) : n(n_), a(n_ * n_, 0.0), b(testutil::randn(n_, rng)) {
    const auto m = testutil::randn(n * n, rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) a[i * n + j] += m[k * n + i] * m[k * n + j];
  }
  double operator()(std::span<const double> x, std::span<double> g) const {
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double ax = 0;
      for (std::size_t j = 0; j < n; ++j) ax += a[i * n + j] * x[j];
      v += 0.5 * x[i] * ax + b[i] * x[i];
      if (!g.empty()) g[i] = ax + b[i];
    }
    return v;
  }
};

ScalarObjective scaled(const ScalarObjective& f, double c) {
  return [f, c](std::span<const double> x, std::span<double> g) {
    const double v = f(x, g);
    for (auto& gi : g) gi *= c;
    return c * v;
  };
}

double fd_norm(const ScalarObjective& f, const std::vector<double>& x) {
  auto val = [&](const std::vector<double>& p) { return f(p, {}); };
  const auto g = oracle::central_diff(val, x, 1e-5);
  return std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
}

}  // namespace

TEST_SUITE("adaptive_weighting") {
  TEST_CASE("grad_norm closed forms") {
    const std::vector<double> p(9, 0.3);
    const ScalarObjective zero = [](std::span<const double> x, std::span<double> g) {
      double s = 0;
      for (double v : x) s += v;
      for (auto& gi : g) gi = 0.0;
      return 0.0 * s;
    };
    const ScalarObjective sum = [](std::span<const double> x, std::span<double> g) {
      double s = 0;
      for (double v : x) s += v;
      for (auto& gi : g) gi = 1.0;
      return s;
    };
    CHECK(grad_norm(zero, p) == 0.0);
    CHECK(grad_norm(sum, p) == doctest::Approx(3.0).epsilon(1e-15));
  }

  TEST_CASE("grad_norm matches finite differences on a random quadratic") {
    std::mt19937_64 rng(41);
    const Quadratic q(7, rng);
    const ScalarObjective f = [&](std::span<const double> x, std::span<double> g) { return q(x, g); };
    const auto x = testutil::randn(7, rng);
    const double an = grad_norm(f, x), fd = fd_norm(f, x);
    CHECK(std::fabs(an - fd) <= 1e-4 * fd);
  }

  TEST_CASE("adaptive weight identities and guards") {
    std::mt19937_64 rng(42);
    const Quadratic q(5, rng), r(5, rng);
    const ScalarObjective rec = [&](std::span<const double> x, std::span<double> g) { return q(x, g); };
    const ScalarObjective other = [&](std::span<const double> x, std::span<double> g) { return r(x, g); };
    const auto x = testutil::randn(5, rng);
    WeightConfig cfg;
    cfg.mode = WeightMode::adaptive;
    CHECK(adaptive_weight(rec, rec, x, cfg) == 1.0);
    const double w1 = adaptive_weight(rec, other, x, cfg);
    const double w10 = adaptive_weight(rec, scaled(other, 10.0), x, cfg);
    CHECK(std::fabs(w10 - w1 / 10.0) <= 1e-10 * w1);
    CHECK(adaptive_weight(3.0, 0.0, cfg) == cfg.omega_cap);
    CHECK(adaptive_weight(3.0, 1e-13, cfg) == cfg.omega_cap);
    CHECK(adaptive_weight(1e12, 1e-3, cfg) == cfg.omega_cap);
    CHECK(adaptive_weight(0.0, 1.0, cfg) > 0.0);
  }

  TEST_CASE("joint weights are independent") {
    std::mt19937_64 rng(43);
    const Quadratic q(6, rng), r(6, rng);
    const ScalarObjective rec = [&](std::span<const double> x, std::span<double> g) { return q(x, g); };
    const ScalarObjective other = [&](std::span<const double> x, std::span<double> g) { return r(x, g); };
    const auto x = testutil::randn(6, rng);
    WeightConfig cfg;
    const auto same = joint_adaptive_weights(rec, rec, rec, x, cfg);
    CHECK(same.omega_mcos == 1.0);
    CHECK(same.omega_mdss == 1.0);
    const auto base = joint_adaptive_weights(rec, other, other, x, cfg);
    const auto big = joint_adaptive_weights(rec, other, scaled(other, 100.0), x, cfg);
    CHECK(big.omega_mcos == base.omega_mcos);
    CHECK(big.omega_mdss == doctest::Approx(base.omega_mdss / 100.0).epsilon(1e-12));
    // brute-force norms
    CHECK(base.omega_mcos == doctest::Approx(fd_norm(rec, x) / fd_norm(other, x)).epsilon(1e-4));
  }

  TEST_CASE("effective distillation weight") {
    WeightConfig cfg;
    CHECK(effective_distill_weight(cfg, 123.0) == 2.5);
    cfg.mode = WeightMode::adaptive;
    CHECK(effective_distill_weight(cfg, 1.0) == 2.5);
    CHECK(effective_distill_weight(cfg, 40.0) == 100.0);
  }

  TEST_CASE("config validation") {
    WeightConfig cfg;
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.omega_cap = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  TEST_CASE("weight trace csv round trip and ordering") {
    testutil::TempDir dir("trace");
    WeightTrace joint(true);
    joint.append({0, 0, 2.5, 3.5, 1.0, 0, 0.4, 0.3});
    joint.append({1, 0, 2.0, 3.0, 1.1, 0, 0.5, 0.4});
    CHECK_THROWS_AS(joint.append({1, 0, 0, 0, 0, 0, 0, 0}), ValidationError);
    joint.write_csv(dir / "j.csv");
    CHECK(testutil::read_text(dir / "j.csv").rfind("step,omega_mcos,omega_mdss,grad_norm_rec,grad_norm_mcos,grad_norm_mdss\n", 0) == 0);
    const auto back = WeightTrace::read_csv(dir / "j.csv");
    REQUIRE(back.rows().size() == 2);
    CHECK(back.joint());
    CHECK(back.rows()[1].omega_mdss == 3.0);
    CHECK(back.rows()[1].grad_norm_mdss == 0.4);

    WeightTrace single;
    single.append({5, 12.5, 0, 0, 2.0, 0.16, 0, 0});
    single.write_csv(dir / "s.csv");
    const auto s = WeightTrace::read_csv(dir / "s.csv");
    CHECK_FALSE(s.joint());
    CHECK(s.rows()[0].omega_adaptive == 12.5);
  }
}
