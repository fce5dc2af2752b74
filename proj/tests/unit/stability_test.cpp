#include <doctest.h>

#include <cmath>

#include "cbal/stability.hpp"

using namespace cbal;

TEST_CASE("characteristic root without feedback is the quadratic root") {
  const double gamma = 50, alpha = 22;
  const double expected = (-gamma + std::sqrt(gamma * gamma + 4 * alpha)) / 2;
  CHECK(expected == doctest::Approx(0.43619).epsilon(1e-4));
  CHECK(characteristic_root(gamma, alpha, 0.0, 0.1) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("characteristic root vanishes at beta = alpha") {
  CHECK(std::abs(characteristic_root(50, 22, 22, 0.1)) < 1e-10);
  CHECK(characteristic_root(50, 22, 21.9, 0.1) > 0);
  CHECK(characteristic_root(50, 22, 22.1, 0.1) < 0);
}

TEST_CASE("vanishing delay reduces to the quadratic with beta - alpha") {
  const double gamma = 50, alpha = 22, beta = 30, tau = 1e-9;
  const double expected = (-gamma + std::sqrt(gamma * gamma - 4 * (beta - alpha))) / 2;
  CHECK(characteristic_root(gamma, alpha, beta, tau) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("characteristic roots solve the equation") {
  const auto roots = characteristic_roots(50, 22, 20.306, 0.1);
  REQUIRE(!roots.empty());
  for (std::size_t i = 1; i < roots.size(); ++i) CHECK(roots[i - 1].real() >= roots[i].real());
  for (const auto& z : roots) {
    const auto f = z * z + 50.0 * z - 22.0 + 20.306 * std::exp(-z * 0.1);
    CHECK(std::abs(f) < 1e-8);
  }
}

TEST_CASE("deterministic estimate tracks the characteristic root") {
  ModelParams p;
  p.nu = 0;
  LyapunovOptions o;
  o.horizon = 2000;
  for (double beta : {18.0, 20.0, 24.0}) {
    p.beta = beta;
    const double root = characteristic_root(p.gamma, p.alpha, beta, p.tau);
    for (auto kind : {ModelKind::single, ModelKind::coupled}) {
      const auto e = largest_lyapunov(kind, p, o);
      CHECK(e.lambda1 == doctest::Approx(root).epsilon(0.02));
    }
  }
  p.beta = p.alpha;
  CHECK(largest_lyapunov(ModelKind::single, p, o).lambda1 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("estimate metadata and input checks") {
  ModelParams p;
  LyapunovOptions o;
  o.horizon = 100;
  o.renorm_every = 50;
  const auto e = largest_lyapunov(ModelKind::single, p, o);
  CHECK(e.horizon == doctest::Approx(100));
  CHECK(e.renorm_interval == doctest::Approx(0.05));
  CHECK(e.std_error >= 0);

  o.horizon = 5;  // < 100 tau
  CHECK_THROWS_AS(largest_lyapunov(ModelKind::single, p, o), ValidationError);
  o.horizon = 100;
  CHECK_THROWS(largest_lyapunov(ModelKind::nonlinear, p, o));
}

TEST_CASE("renormalization interval does not move the estimate") {
  ModelParams p;
  p.beta = 20.306;
  LyapunovOptions a, b;
  a.horizon = b.horizon = 2000;
  a.renorm_every = 100;
  b.renorm_every = 50;
  const auto ea = largest_lyapunov(ModelKind::single, p, a);
  const auto eb = largest_lyapunov(ModelKind::single, p, b);
  CHECK(std::abs(ea.lambda1 - eb.lambda1) < std::max(ea.std_error, eb.std_error));
}

TEST_CASE("history-inclusive norm agrees with the headline norm") {
  ModelParams p;
  p.beta = 21.032;
  LyapunovOptions a, b;
  a.horizon = b.horizon = 1000;  // 10^4 tau
  b.norm = LyapunovNorm::with_history;
  const auto ea = largest_lyapunov(ModelKind::coupled, p, a);
  const auto eb = largest_lyapunov(ModelKind::coupled, p, b);
  CHECK(std::abs(ea.lambda1 - eb.lambda1) < ea.std_error);
}

TEST_CASE("seed-averaged estimates are reproducible") {
  ModelParams p;
  LyapunovOptions o;
  o.horizon = 200;
  const auto a = mean_lyapunov(ModelKind::single, p, 3, o, 1);
  const auto b = mean_lyapunov(ModelKind::single, p, 3, o, 2);
  CHECK(a.lambda1 == b.lambda1);
  CHECK(a.std_error == b.std_error);
}

TEST_CASE("deterministic calibration lands on the oracle root") {
  ModelParams p;
  p.nu = 0;
  CalibrationOptions o;
  o.target = 0.01;
  o.n_seeds = 2;
  o.lyapunov.horizon = 1000;
  o.min_width = 1e-4;
  const auto c = calibrate_beta(ModelKind::single, p, o);
  const double root = characteristic_root(p.gamma, p.alpha, c.beta_star, p.tau);
  CHECK(root == doctest::Approx(o.target).epsilon(0.02));
  CHECK(c.bracket_lo <= c.beta_star);
  CHECK(c.beta_star <= c.bracket_hi);
  CHECK(!c.trace.empty());

  p.seed = 99;
  CHECK(calibrate_beta(ModelKind::single, p, o).beta_star == c.beta_star);
}

TEST_CASE("calibration needs a straddling bracket") {
  ModelParams p;
  p.nu = 0;
  CalibrationOptions o;
  o.beta_lo = 23;
  o.beta_hi = 24;
  o.n_seeds = 1;
  o.lyapunov.horizon = 200;
  CHECK_THROWS_AS(calibrate_beta(ModelKind::single, p, o), ValidationError);
}

TEST_CASE("sweep: sign change at beta = alpha, reproducible table") {
  ModelParams p;
  p.nu = 0;
  LyapunovOptions o;
  o.horizon = 500;
  const auto a = lyapunov_sweep(ModelKind::single, p, 20, 24, 5, 1, o, 1);
  REQUIRE(a.size() == 5);
  CHECK(a[2].beta == doctest::Approx(22));
  CHECK(a[1].lambda1 > 0);
  CHECK(std::abs(a[2].lambda1) < 1e-12);
  CHECK(a[3].lambda1 < 0);
  const auto b = lyapunov_sweep(ModelKind::single, p, 20, 24, 5, 1, o, 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].lambda1 == b[i].lambda1);
  CHECK_THROWS_AS(lyapunov_sweep(ModelKind::single, p, 20, 24, 1, 1, o), ValidationError);
}
