#include <doctest.h>

#include <cmath>
#include <utility>

#include "cnls/common.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/quadrature.hpp"

using namespace cnls;

TEST_CASE("one-dimensional cubic profile is sqrt(2) sech") {
  RadialProfile prof = solve_ground_state(1, 2.0);
  double worst = 0;
  for (double r = 0; r <= 25.0; r += 0.01) worst = std::max(worst, std::abs(prof.value(r) - std::sqrt(2.0) / std::cosh(r)));
  CHECK(worst < 1e-6);
  CHECK(prof.odeResidual < 1e-8);
  CHECK(prof.normH1sq == doctest::Approx(16.0 / 3.0).epsilon(1e-6));
  CHECK(prof.norm2p == doctest::Approx(16.0 / 3.0).epsilon(1e-6));
  CHECK(prof.w0 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  // sech(r) ~ 2 e^{-r}
  CHECK(prof.asymptoticConstant == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-5));
}

TEST_CASE("four-dimensional profile satisfies Nehari and Pohozaev identities") {
  const int N = 4;
  const double p = 1.5;
  RadialProfile prof = solve_ground_state(N, p);
  CHECK(prof.odeResidual < 1e-8);
  CHECK(std::abs(prof.normH1sq - prof.norm2p) / prof.normH1sq < 1e-7);
  // Pohozaev: (N-2)/2 |grad|^2 + N/2 |w|^2 = N/(2p) |w|^{2p}
  const std::size_t K = prof.nodes() - 1;
  double grad = 0, mass = 0;
  for (std::size_t k = 0; k <= K; ++k) {
    double r = prof.radius(k);
    double wt = (k == 0 || k == K ? 0.5 : 1.0) * prof.step * std::pow(r, N - 1) * sphere_area(N);
    grad += wt * prof.dw[k] * prof.dw[k];
    mass += wt * prof.w[k] * prof.w[k];
  }
  double lhs = 0.5 * (N - 2) * grad + 0.5 * N * mass;
  CHECK(lhs == doctest::Approx(N / (2 * p) * prof.norm2p).epsilon(1e-5));
  CHECK(prof.cBase == doctest::Approx((p - 1) / (2 * p) * prof.normH1sq));
}

TEST_CASE("profile is positive and radially decreasing") {
  for (auto [N, p] : {std::pair{1, 2.0}, std::pair{2, 2.0}, std::pair{3, 1.8}, std::pair{4, 1.5}}) {
    RadialProfile prof = solve_ground_state(N, p);
    for (std::size_t k = 1; k < prof.nodes(); ++k) {
      REQUIRE(prof.w[k] > 0.0);
      REQUIRE(prof.w[k] < prof.w[k - 1]);
    }
    CHECK(prof.odeResidual < 1e-8);
  }
}

TEST_CASE("supercritical exponents are rejected") {
  CHECK_THROWS_AS(solve_ground_state(4, 2.0), ConfigError);
  CHECK_THROWS_AS(solve_ground_state(3, 1.0), ConfigError);
  CHECK_NOTHROW(check_exponent(2, 7.0));
}

TEST_CASE("step halving changes the norm by less than 1e-6") {
  for (auto [N, p] : {std::pair{2, 2.0}, std::pair{4, 1.5}}) {
    GroundStateOptions fine;
    fine.step = 5e-4;
    const double a = solve_ground_state(N, p).normH1sq, b = solve_ground_state(N, p, fine).normH1sq;
    CHECK(std::abs(a - b) / b < 1e-6);
  }
}

TEST_CASE("perturbed initial heights leave the ground state on opposite sides") {
  for (auto [N, p] : {std::pair{1, 2.0}, std::pair{3, 1.8}, std::pair{4, 1.5}}) {
    const RadialProfile prof = solve_ground_state(N, p);
    CHECK(shooting_verdict(N, p, 1.01 * prof.w0) == +1);
    CHECK(shooting_verdict(N, p, 0.99 * prof.w0) == -1);
  }
}

TEST_CASE("cBase is stored consistently with the norm") {
  const RadialProfile prof = solve_ground_state(1, 2.0);
  CHECK(prof.cBase == doctest::Approx(4.0 / 3.0).epsilon(1e-6));
  CHECK(prof.cBase == doctest::Approx(0.25 * prof.normH1sq).epsilon(1e-15));
}

TEST_CASE("Psi at zero separation is the L^{2p} mass") {
  for (auto [N, p] : {std::pair{1, 2.0}, std::pair{2, 2.0}, std::pair{4, 1.5}}) {
    const RadialProfile prof = solve_ground_state(N, p);
    CHECK(interaction_psi(prof, 0.0) == doctest::Approx(prof.norm2p).epsilon(1e-6));
  }
}

TEST_CASE("Psi in one dimension matches direct quadrature of the sech product") {
  // Independent oracle: trapezoid in x of 2 sqrt2^3 sech^3(x) sech(x - d) on a fine grid.
  const RadialProfile prof = solve_ground_state(1, 2.0);
  for (double d : {0.5, 3.0, 7.0}) {
    double acc = 0, h = 1e-3;
    for (double x = -40; x <= 40 + d; x += h) acc += h * std::pow(std::sqrt(2.0) / std::cosh(x), 3) * std::sqrt(2.0) / std::cosh(x - d);
    CHECK(interaction_psi(prof, d) == doctest::Approx(acc).epsilon(1e-6));
  }
}

TEST_CASE("Psi decays monotonically at N = 4 with unit exponential rate") {
  const RadialProfile prof = solve_ground_state(4, 1.5);
  InteractionKernel ker = build_interaction_kernel(prof);
  for (std::size_t k = 1; k < ker.delta.size(); ++k) {
    CHECK(ker.psi[k] > 0);
    if (ker.delta[k] >= 2.0) CHECK(ker.psi[k] < ker.psi[k - 1]);
  }
  CHECK(std::abs(ker.fittedRate - 1.0) < 0.02);
  CHECK(ker.fittedB > 0);
  CHECK(ker(ker.delta[10]) == doctest::Approx(ker.psi[10]).epsilon(1e-14));
}

TEST_CASE("H1 cross term agrees with a two-dimensional grid quadrature") {
  // Oracle: Gauss product rule over a box, integrating grad.grad + product of the shifted profiles.
  const RadialProfile prof = solve_ground_state(2, 2.0);
  const std::vector<double> a{-1.5, 0.0}, b{1.5, 0.0};
  CompositeRule gx = composite_gauss(-26.5, 26.5, 0.25, 6), gy = composite_gauss(-25, 25, 0.25, 6);
  double acc = 0;
  for (std::size_t i = 0; i < gx.x.size(); ++i)
    for (std::size_t j = 0; j < gy.x.size(); ++j) {
      const double x = gx.x[i], y = gy.x[j];
      const double ra = std::hypot(x - a[0], y), rb = std::hypot(x - b[0], y);
      const double da = prof.derivative(ra), db = prof.derivative(rb);
      double dot = 0;
      if (ra > 0 && rb > 0) dot = da * db * ((x - a[0]) * (x - b[0]) + y * y) / (ra * rb);
      acc += gx.w[i] * gy.w[j] * (dot + prof.value(ra) * prof.value(rb));
    }
  CHECK(h1_cross_term(prof, a, b) == doctest::Approx(acc).epsilon(1e-4));
}

TEST_CASE("H1 cross term is symmetric, rotation invariant and decays") {
  const RadialProfile prof = solve_ground_state(3, 1.8);
  const std::vector<double> a{0.3, -0.2, 1.0}, b{2.3, 1.0, -0.5};
  CHECK(h1_cross_term(prof, a, b) == h1_cross_term(prof, b, a));
  // rotate both points by 90 degrees in the (x1, x3) plane
  const std::vector<double> ra{-1.0, -0.2, 0.3}, rb{0.5, 1.0, 2.3};
  CHECK(h1_cross_term(prof, ra, rb) == doctest::Approx(h1_cross_term(prof, a, b)).epsilon(1e-12));
  CHECK(h1_cross_term(prof, a, a) == doctest::Approx(prof.normH1sq));
  double prev = h1_cross_term(prof, {0, 0, 0}, {1, 0, 0});
  for (double d = 2; d <= 12; d += 2) {
    double v = h1_cross_term(prof, {0, 0, 0}, {d, 0, 0});
    CHECK(v < prev);
    prev = v;
  }
}
