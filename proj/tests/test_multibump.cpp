#include <doctest.h>

#include <cmath>
#include <random>

#include "cnls/discretization.hpp"
#include "cnls/multibump.hpp"

using namespace cnls;

namespace {

const RadialProfile& profile(int N, double p) {
  static RadialProfile p2 = solve_ground_state(2, 2.0);
  static RadialProfile p4 = solve_ground_state(4, 1.5);
  REQUIRE(((N == 2 && p == 2.0) || (N == 4 && p == 1.5)));
  return N == 2 ? p2 : p4;
}

std::vector<double> random_point(std::mt19937_64& rng, int N, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(N);
  for (double& v : x) v = g(rng);
  return x;
}

CouplingMatrix pair_matrix(int N, double p, double b12) {
  CouplingMatrix m;
  m.beta.resize(2, 2);
  m.beta << 1.0, b12, b12, 1.0;
  m.p = p;
  m.dimN = N;
  m.blockEnds = {1, 2};
  m.signs = {BlockSign::Positive, BlockSign::Positive};
  return m;
}

}  // namespace

TEST_CASE("a single-bump orbit evaluates to one translated ground state") {
  const auto& prof = profile(4, 1.5);
  auto cfg = make_multibump(SymmetryGroup::Gm(4, 1), SignHomomorphism::trivial(), 7.0);
  REQUIRE(cfg.size() == 1);
  auto sigma = build_sigma(prof, cfg);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    auto x = random_point(rng, 4, 5.0);
    double d2 = 0;
    for (int i = 0; i < 4; ++i) d2 += (x[i] - cfg.centers[0][i]) * (x[i] - cfg.centers[0][i]);
    CHECK(sigma(x) == doctest::Approx(prof.value(std::sqrt(d2))).epsilon(1e-15));
  }
}

TEST_CASE("sign-changing bump sums vanish on the swap hyperplane and are odd under the swap") {
  const auto& prof = profile(4, 1.5);
  auto g = SymmetryGroup::GmPrime(4, 5);
  auto cfg = make_multibump(g, SignHomomorphism::theta(), 6.0);
  CHECK(cfg.size() == 10);
  auto sigma = build_sigma(prof, cfg);
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> pts;
  for (int t = 0; t < 40; ++t) {
    auto x = random_point(rng, 4, 6.0);
    pts.push_back(x);
    const std::vector<double> swapped{x[2], x[3], x[0], x[1]};
    CHECK(std::abs(sigma(swapped) + sigma(x)) < 1e-14);
    const std::vector<double> diag{x[0], x[1], x[0], x[1]};
    CHECK(std::abs(sigma(diag)) < 1e-14);
  }
  CHECK(check_equivariance_function(sigma, g, SignHomomorphism::theta(), pts) < 1e-12);
}

TEST_CASE("theta vanishing on the anchor stabilizer is rejected") {
  CHECK_THROWS_AS(make_multibump(SymmetryGroup::dihedral(4), SignHomomorphism::theta(), 5.0), ConfigError);
  CHECK_THROWS_AS(make_multibump(SymmetryGroup::Gm(4, 5), SignHomomorphism::theta(), 5.0,
                                 {1 / std::sqrt(2.0), 0, 1 / std::sqrt(2.0), 0}),
                  ConfigError);
}

TEST_CASE("pairwise H1 expansion limits") {
  const auto& prof = profile(4, 1.5);
  auto one = make_multibump(SymmetryGroup::Gm(4, 1), SignHomomorphism::trivial(), 3.0);
  CHECK(std::abs(h1_norm_multibump(prof, one) / prof.normH1sq - 1) < 1e-6);
  auto far = make_multibump(SymmetryGroup::GmPrime(4, 5), SignHomomorphism::theta(), 60.0);
  CHECK(std::abs(h1_norm_multibump(prof, far) / (10 * prof.normH1sq) - 1) < 1e-6);
}

TEST_CASE("nearest-neighbour pairs dominate the H1 correction of the sign-changing orbit") {
  const auto& prof = profile(4, 1.5);
  auto g = SymmetryGroup::GmPrime(4, 5);
  auto at12 = h1_expansion(prof, make_multibump(g, SignHomomorphism::theta(), 12.0));
  CHECK(at12.offDiagonal > 0);
  CHECK(at12.nearestPairs == 20);
  // Opposite-sign pairs across the two planes sit at R sqrt(2), only 0.24 R farther than the chord, so the
  // truncation error is still about 12% at R = 12 and falls below 5% only further out.
  const double rel12 = std::abs(at12.offDiagonal - at12.nearestNeighbor) / at12.offDiagonal;
  CHECK(rel12 > 0.05);
  auto at20 = h1_expansion(prof, make_multibump(g, SignHomomorphism::theta(), 20.0));
  CHECK(std::abs(at20.offDiagonal - at20.nearestNeighbor) / at20.offDiagonal < 0.05);
}

TEST_CASE("pairwise H1 norm matches grid quadrature in the plane") {
  const auto& prof = profile(2, 2.0);
  auto cfg = make_multibump(SymmetryGroup::dihedral(3), SignHomomorphism::trivial(), 2.5);
  auto dom = Domain::full_grid(2, 16.0, 0.04);
  auto sigma = build_sigma(prof, cfg);
  auto u = dom->sample([&](const double* x) { return sigma({x[0], x[1]}); });
  const double grid = dom->h1_norm_sq(u);
  CHECK(std::abs(grid / h1_norm_multibump(prof, cfg) - 1) < 1e-3);
}

TEST_CASE("L2p mass of a single bump and of well separated bumps") {
  for (auto [N, p] : {std::pair{2, 2.0}, std::pair{4, 1.5}}) {
    CAPTURE(N);
    const auto& prof = profile(N, p);
    auto one = make_bumps(N, {std::vector<double>(N, 0.0)}, {1});
    CHECK(std::abs(lp_norm_direct_grid(prof, one) / prof.norm2p - 1) < 1e-4);
    CHECK(lp_norm_multibump(prof, one).value == prof.norm2p);
  }
  const auto& prof = profile(2, 2.0);
  auto far = make_multibump(SymmetryGroup::dihedral(3), SignHomomorphism::trivial(), 40.0);
  CHECK(std::abs(lp_norm_direct_grid(prof, far) / (3 * prof.norm2p) - 1) < 1e-3);
  CHECK(std::abs(lp_norm_multibump(prof, far).value / (3 * prof.norm2p) - 1) < 1e-3);
}

TEST_CASE("excess splitting agrees with direct quadrature when bumps overlap") {
  const auto& prof = profile(2, 2.0);
  auto cfg = make_bumps(2, {{-1.5, 0.0}, {1.5, 0.0}, {0.0, 2.0}}, {1, -1, 1});
  const double direct = lp_norm_direct_grid(prof, cfg);
  const double split = lp_norm_multibump(prof, cfg).value;
  // The split form takes the diagonal from the profile's own L^{2p} mass, a different quadrature.
  CHECK(std::abs(split / direct - 1) < 1e-8);
}

TEST_CASE("grid and Monte Carlo estimates agree on a planar three-bump configuration") {
  const auto& prof = profile(2, 2.0);
  auto cfg = make_bumps(2, {{-2.0, 0.0}, {2.0, 0.0}, {0.0, 3.0}}, {1, -1, 1});
  LpOptions grid;
  grid.method = LpMethod::Grid;
  LpOptions mc;
  mc.method = LpMethod::MonteCarlo;
  mc.samples = 600000;
  auto a = lp_norm_multibump(prof, cfg, grid);
  auto b = lp_norm_multibump(prof, cfg, mc);
  CAPTURE(a.excess);
  CAPTURE(b.excess);
  CAPTURE(b.excessStderr);
  CHECK(b.excessStderr > 0);
  CHECK(std::abs(a.excess - b.excess) < 4 * b.excessStderr);
  CHECK_FALSE(b.flagged);
}

TEST_CASE("Monte Carlo runs are reproducible for a fixed seed") {
  const auto& prof = profile(4, 1.5);
  auto cfg = make_multibump(SymmetryGroup::GmPrime(4, 5), SignHomomorphism::theta(), 8.0);
  LpOptions mc;
  mc.method = LpMethod::MonteCarlo;
  mc.samples = 20000;
  auto a = lp_norm_multibump(prof, cfg, mc);
  auto b = lp_norm_multibump(prof, cfg, mc);
  CHECK(a.excess == b.excess);
  CHECK(a.excessStderr == b.excessStderr);
  mc.seed += 1;
  CHECK(lp_norm_multibump(prof, cfg, mc).excess != a.excess);
}

TEST_CASE("hexagon chord equals the radius") {
  CHECK(std::abs(chord_length(6, 1.0) - 1.0) < 1e-15);
  CHECK(std::abs(chord_length(5, 1.0) - 2 * std::sin(M_PI / 5)) < 1e-15);
}

TEST_CASE("planar ring energies stay below the limit with the chord decay rate") {
  const auto& prof = profile(2, 2.0);
  auto c = sigma_energy_curve(prof, SymmetryGroup::dihedral(5), SignHomomorphism::trivial(), {8, 10, 12, 14, 16});
  CHECK(c.bumps == 5);
  for (double e : c.energies) CHECK(e < c.limit);
  CHECK(c.fit.positive);
  CHECK(c.fit.decreasing);
  CHECK(c.fit.logConvex);
  CAPTURE(c.fit.rate);
  CHECK(std::abs(c.fit.rate / c.chord - 1) < 0.1);
}

TEST_CASE("sign-changing orbit in four dimensions by Monte Carlo") {
  const auto& prof = profile(4, 1.5);
  LpOptions mc;
  mc.samples = 1000000;
  auto c = sigma_energy_curve(prof, SymmetryGroup::GmPrime(4, 5), SignHomomorphism::theta(), {8, 10, 12, 14, 16}, mc);
  CHECK(c.bumps == 10);
  CHECK(std::abs(c.limit - 10 * prof.cBase) < 1e-9 * c.limit);
  for (std::size_t i = 0; i < c.energies.size(); ++i) {
    CHECK(c.energies[i] < c.limit);
    CHECK(c.lp[i].method == LpMethod::MonteCarlo);
    CHECK(c.gapStderr[i] > 0);
  }
  CAPTURE(c.fit.rate);
  CHECK(std::abs(c.fit.rate / (2 * std::sin(M_PI / 5)) - 1) < 0.1);
}

TEST_CASE("the gap law requires m >= 5 for sign-changing bumps") {
  const auto& prof = profile(4, 1.5);
  CHECK_THROWS_AS(sigma_energy_curve(prof, SymmetryGroup::GmPrime(4, 4), SignHomomorphism::theta(), {8, 10}),
                  ConfigError);
}

TEST_CASE("planar two-block estimate sits between the lower bound and the cap") {
  const auto& prof = profile(2, 2.0);
  TwoBlockOptions opt;
  opt.R = 12;
  auto r = two_block_upper_bound(prof, pair_matrix(2, 2.0, -0.1), {BlockSign::Positive, BlockSign::Positive}, opt);
  CHECK(r.planar);
  CHECK(std::abs(r.cap - 7 * prof.cBase) < 1e-9 * r.cap);
  CHECK(r.belowCap);
  CHECK(r.margin > 0);
  CHECK(r.aboveLower);
  CHECK(std::abs(r.lowerBound - 2 * prof.cBase) < 1e-9 * r.cap);
}

TEST_CASE("two-block estimate retries then fails under overwhelming competition") {
  const auto& prof = profile(2, 2.0);
  TwoBlockOptions opt;
  opt.R = 2.0;
  opt.maxRetries = 1;
  CHECK_THROWS_AS(
      two_block_upper_bound(prof, pair_matrix(2, 2.0, -1e9), {BlockSign::Positive, BlockSign::Positive}, opt),
      NumericalError);
}

TEST_CASE("cross term decays at rate p in the separation") {
  const auto& prof = profile(2, 2.0);
  auto d = cross_term_decay(prof, 20.0);
  CHECK(d.method == "grid");
  CHECK(std::abs(d.ratio / d.target - 1) < 0.2);
}
