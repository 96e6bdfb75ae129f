// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cnls/cli.hpp"
#include "cnls/coupling.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/multibump.hpp"
#include "cnls/nehari.hpp"
#include "cnls/solver.hpp"

using namespace cnls;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double budgetSeconds;
  std::function<void(Verdict&)> body;
};

CouplingMatrix matrix(const Eigen::MatrixXd& beta, double p, int N, std::vector<int> ends, std::vector<BlockSign> signs) {
  CouplingMatrix m;
  m.beta = beta;
  m.p = p;
  m.dimN = N;
  m.blockEnds = std::move(ends);
  m.signs = std::move(signs);
  return m;
}

std::shared_ptr<const RadialProfile> profile(int N, double p) {
  static std::map<std::pair<int, double>, std::shared_ptr<const RadialProfile>> cache;
  auto& slot = cache[{N, p}];
  if (!slot) slot = std::make_shared<const RadialProfile>(solve_ground_state(N, p));
  return slot;
}

Eigen::MatrixXd random_block(std::mt19937_64& rng, int n, double offLo, double offHi) {
  std::uniform_real_distribution<double> diag(0.5, 2.0), off(offLo, offHi);
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i) {
    b(i, i) = diag(rng);
    for (int j = 0; j < i; ++j) b(i, j) = b(j, i) = off(rng);
  }
  return b;
}

void soliton(Verdict& v) {
  const auto prof = solve_ground_state(1, 2.0);
  double sup = 0;
  for (double r = 0; r <= 25.0; r += 0.001) sup = std::max(sup, std::abs(prof.value(r) - std::sqrt(2.0) / std::cosh(r)));
  const double rel = std::abs(prof.normH1sq / (16.0 / 3.0) - 1);
  v.detail << "sup|w - sqrt2 sech| = " << sup << ", ||w||^2 rel err = " << rel;
  v.require(sup < 1e-6, "sup error");
  v.require(rel < 1e-6, "norm");
}

void mu_constants(Verdict& v) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worstSingle = 0, worstOracle = 0, worstScale = 0;
  for (int t = 0; t < 10; ++t) {
    const double b = 0.2 + 3 * U(rng), p = 1.1 + 2 * U(rng);
    Eigen::MatrixXd B(1, 1);
    B << b;
    const double mu = compute_mu_block(B, p).mu;
    worstSingle = std::max(worstSingle, std::abs(mu - std::pow(b, -1 / (p - 1))) / mu);
  }
  for (int t = 0; t < 8; ++t) {
    const int n = t < 4 ? 2 : 3;
    const double p = 1.2 + 1.6 * U(rng);
    MuOptions o;
    o.seed = 100 + t;
    auto r = compute_mu_block(random_block(rng, n, 0.0, 1.0), p, o);
    v.require(r.oracleRun, "oracle ran");
    worstOracle = std::max(worstOracle, std::abs(r.oracleMu - r.mu) - r.oracleErrorBound);
  }
  for (int t = 0; t < 10; ++t) {
    const int n = 1 + t % 3;
    const double p = 1.2 + 1.5 * U(rng), c = 0.1 + 5 * U(rng);
    MuOptions o;
    o.runOracle = false;
    auto b = random_block(rng, n, 0.0, 1.0);
    const double m1 = compute_mu_block(b, p, o).mu, m2 = compute_mu_block(c * b, p, o).mu;
    worstScale = std::max(worstScale, std::abs(m2 / (m1 * std::pow(c, -1 / (p - 1))) - 1));
  }
  v.detail << "single rel " << worstSingle << ", oracle excess " << worstOracle << ", scale " << worstScale;
  v.require(worstSingle < 1e-10, "single-index closed form");
  v.require(worstOracle < 1e-6, "oracle agreement");
  v.require(worstScale < 1e-8, "scale covariance");
}

void nehari_machinery(Verdict& v) {
  Eigen::MatrixXd b(3, 3);
  b << 1.0, 0.4, -0.1, 0.4, 1.2, -0.05, -0.1, -0.05, 0.9;
  EnergyContext ctx;
  ctx.matrix = matrix(b, 1.5, 2, {2, 3}, {BlockSign::Positive, BlockSign::Positive});
  ctx.domain = Domain::full_grid(2, 6.0, 0.25);
  std::mt19937_64 rng(31);
  auto bumps = [&](bool sign) {
    std::uniform_real_distribution<double> c(-2.5, 2.5), w(0.6, 1.6), a(0.2, 1.5);
    std::bernoulli_distribution flip(0.3);
    double cx[3], cy[3], wd[3], am[3];
    for (int k = 0; k < 3; ++k) {
      cx[k] = c(rng);
      cy[k] = c(rng);
      wd[k] = w(rng);
      am[k] = a(rng) * (sign && flip(rng) ? -1.0 : 1.0);
    }
    return ctx.domain->sample([&](const double* x) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += am[k] * std::exp(-((x[0] - cx[k]) * (x[0] - cx[k]) + (x[1] - cy[k]) * (x[1] - cy[k])) / (wd[k] * wd[k]));
      return s;
    });
  };
  double worstRes = 0, worstId = 0;
  int projected = 0;
  for (int t = 0; t < 100; ++t) {
    FieldVector u(ctx.domain, 3);
    for (auto& c : u.comps) c = bumps(true);
    try {
      auto r = nehari_project(ctx, u);
      for (double res : r.report.relativeResiduals) worstRes = std::max(worstRes, std::abs(res));
      worstId = std::max(worstId, r.report.identityGap / r.report.energy);
      ++projected;
    } catch (const ProjectionInfeasible&) {
    }
  }
  double worstOrder = 1e9;
  for (int t = 0; t < 3; ++t) {
    FieldVector u(ctx.domain, 3), d(ctx.domain, 3);
    for (auto& c : u.comps) {
      c = bumps(false);
      for (double& x : c) x += 0.3;  // keeps |u|^{p-2}u differentiable for p < 2
    }
    for (auto& c : d.comps) c = bumps(true);
    const auto g = gradient(ctx, u);
    double exact = 0;
    for (int i = 0; i < 3; ++i) exact += ctx.domain->inner(g.comps[i], d.comps[i]);
    std::vector<double> err;
    for (double e : {1e-2, 1e-3}) {
      FieldVector up = u, um = u;
      for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < ctx.domain->size(); ++k) {
          up.comps[i][k] += e * d.comps[i][k];
          um.comps[i][k] -= e * d.comps[i][k];
        }
      err.push_back(std::abs((energy(ctx, up) - energy(ctx, um)) / (2 * e) - exact));
    }
    worstOrder = std::min(worstOrder, std::log10(err[0] / err[1]));
  }
  v.detail << projected << "/100 projected, residual " << worstRes << ", identity " << worstId << ", FD order "
           << worstOrder;
  v.require(projected == 100, "every random field projects");
  v.require(worstRes < 1e-10, "projection residual");
  v.require(worstId < 1e-8, "energy identity");
  v.require(worstOrder >= 1.9, "finite-difference order");
}

void psi_asymptotics(Verdict& v) {
  const auto K = build_interaction_kernel(*profile(4, 1.5), 20.0, 0.25, 8.0, 16.0);
  v.detail << "fitted rate " << K.fittedRate;
  v.require(std::abs(K.fittedRate - 1) <= 0.02, "rate within 0.02 of 1");
}

const BumpEnergyCurve& theta_curve_n4() {
  static const BumpEnergyCurve curve = [] {
    LpOptions mc;
    mc.method = LpMethod::MonteCarlo;
    mc.samples = 10000000;
    return sigma_energy_curve(*profile(4, 1.5), SymmetryGroup::GmPrime(4, 5), SignHomomorphism::theta(),
                              {8, 10, 12, 14, 16}, mc);
  }();
  return curve;
}

void gap_law(Verdict& v) {
  const auto& p4 = *profile(4, 1.5);
  const auto& c = theta_curve_n4();
  bool below = true;
  for (std::size_t i = 0; i < c.energies.size(); ++i) {
    below = below && c.energies[i] < 10 * p4.cBase;
    v.require(c.gapStderr[i] > 0 && c.lp[i].method == LpMethod::MonteCarlo, "Monte Carlo error bars");
  }
  const double d5 = 2 * std::sin(M_PI / 5);
  v.detail << "theta m=5 N=4 (MC 1e7): rate " << c.fit.rate << " vs d " << d5 << ", last gap " << c.gaps.back() / p4.cBase
           << " +- " << c.gapStderr.back() / p4.cBase << " c";
  v.require(below, "energies below 10c");
  v.require(std::abs(c.fit.rate / d5 - 1) < 0.1, "rate within 10% of d");
  v.require(std::abs(c.chord - d5) < 1e-12, "pentagon chord");
  v.require(std::abs(chord_length(6, 1.0) - 1.0) < 1e-15, "hexagon chord d = 1");

  const auto& p2 = *profile(2, 2.0);
  auto g = sigma_energy_curve(p2, SymmetryGroup::dihedral(5), SignHomomorphism::trivial(), {8, 10, 12, 14, 16});
  bool gridBelow = true;
  for (std::size_t i = 0; i < g.energies.size(); ++i) {
    gridBelow = gridBelow && g.energies[i] < g.limit;
    v.require(g.lp[i].method == LpMethod::Grid, "grid mode in the plane");
  }
  v.detail << "; planar grid m=5: rate " << g.fit.rate;
  v.require(gridBelow, "planar energies below the limit");
  v.require(std::abs(g.fit.rate / g.chord - 1) < 0.1, "planar rate within 10% of d");
}


SolveSpec theta_surrogate(double h) {
  SolveSpec s;
  s.ctx.matrix = matrix(Eigen::MatrixXd::Ones(1, 1), 2.0, 2, {1}, {BlockSign::SignChanging});
  s.ctx.domain = Domain::full_grid(2, 8.0, h);
  s.ctx.groupData = {{SymmetryGroup::dihedral(2), SignHomomorphism::theta()}};
  s.signPattern = {BlockSign::SignChanging};
  s.seeds = {BlockSeed{{}, 4.0}};
  s.profile = profile(2, 2.0);
  return s;
}

void sign_changing_surrogate(Verdict& v) {
  std::vector<double> levels;
  for (double h : {0.2, 0.1}) {
    auto r = minimize(theta_surrogate(h));
    const double e = r.energy / r.cBase;
    levels.push_back(e);
    v.detail << "h=" << h << ": " << e << " c (" << to_string(r.signReport[0].cls) << ", nonradiality "
             << r.signReport[0].nonradiality << "); ";
    v.require(r.converged, "solver converged");
    v.require(e > 2 && e < 10, "level in (2c, 10c)");
    v.require(r.signReport[0].cls == SignClass::SignChanging, "sign-changing");
    v.require(r.signReport[0].nonradiality > 0.1, "nonradial");
  }
  const double drift = std::abs(levels[1] / levels[0] - 1);
  v.detail << "halving drift " << drift;
  v.require(drift < 0.01, "stable to 1% under grid halving");
  const auto& c = theta_curve_n4();
  const double cBase = profile(4, 1.5)->cBase;
  double best = 1e300;
  for (double e : c.energies) best = std::min(best, e);
  v.detail << "; N=4 m=5 test-function bound " << best / cBase << " c";
  v.require(best < 10 * cBase && best > 2 * cBase, "N = 4 upper bound in (2c, 10c)");
}

void q1_equality(Verdict& v) {
  std::mt19937_64 rng(7);
  double worst = 0;
  for (int t = 0; t < 3; ++t) {
    const int n = 1 + t;
    SolveSpec s;
    auto beta = random_block(rng, n, 0.05, 0.8);
    s.ctx.matrix = matrix(beta, 1.5, 4, {n}, {BlockSign::Positive});
    s.ctx.domain = Domain::radial(4, 24.0, 0.01);
    s.signPattern = {BlockSign::Positive};
    s.profile = profile(4, 1.5);
    auto r = minimize(s);
    const double rel = std::abs(r.energy / (r.mu[0].mu * r.cBase) - 1);
    worst = std::max(worst, rel);
    v.require(r.converged, "solver converged");
    v.require(r.bounds.pass(), "bound check");
  }
  v.detail << "sizes 1..3, worst |J/(mu c) - 1| = " << worst;
  v.require(worst < 1e-3, "within 1e-3");
}

void two_block_caps(Verdict& v) {
  auto pair = [](int N, double p, double b12, std::vector<BlockSign> signs) {
    Eigen::MatrixXd b(2, 2);
    b << 1.0, b12, b12, 1.2;
    return matrix(b, p, N, {1, 2}, std::move(signs));
  };
  auto report = [&](const std::string& tag, const TwoBlockResult& r) {
    v.detail << tag << " " << r.energy / r.cBase << " < " << r.capName << " " << r.cap / r.cBase << " (margin "
             << r.margin / r.cBase << ", lower " << r.lowerBound / r.cBase << "); ";
    v.require(r.belowCap && r.margin > 0, tag + " below cap");
    v.require(r.aboveLower && r.lowerBound < r.energy, tag + " above lower bound");
  };
  const auto P = BlockSign::Positive, M = BlockSign::SignChanging;
  TwoBlockOptions planar;
  planar.R = 12;
  report("n=2 (+,+)", two_block_upper_bound(*profile(2, 2.0), pair(2, 2.0, -0.1, {P, P}), {P, P}, planar));
  for (const auto& signs : std::vector<std::vector<BlockSign>>{{P, P}, {P, M}, {M, M}}) {
    std::string tag = "N=4 (";
    for (auto s : signs) tag += s == P ? "+" : "-";
    tag.insert(tag.size() - 1, ",");
    tag += ")";
    report(tag, two_block_upper_bound(*profile(4, 1.5), pair(4, 1.5, -0.1, signs), signs));
  }
  SolveSpec s;
  Eigen::MatrixXd b(2, 2);
  b << 1.0, -0.1, -0.1, 1.2;
  s.ctx.matrix = matrix(b, 2.0, 2, {1, 2}, {P, P});
  s.ctx.domain = Domain::full_grid(2, 8.0, 0.2);
  s.ctx.groupData.assign(2, {SymmetryGroup::dihedral(4), SignHomomorphism::trivial()});
  s.signPattern = {P, P};
  s.profile = profile(2, 2.0);
  auto r = minimize(s);
  const double lower = (r.mu[0].mu + r.mu[1].mu) * r.cBase;
  v.detail << "n=2 minimizer " << r.energy / r.cBase << " c vs lower " << lower / r.cBase << " c";
  v.require(r.converged, "minimizer converged");
  v.require(r.bounds.pass(), "minimizer bound checks");
  v.require(lower < r.energy, "lower bound below the minimizer");
}

void cross_decay(Verdict& v) {
  for (auto [N, p] : {std::pair{4, 1.5}, std::pair{2, 2.0}}) {
    auto d = cross_term_decay(*profile(N, p), 20.0, 2.0);
    v.detail << "N=" << N << ": ratio " << d.ratio << " vs e^{-2p} " << d.target << " (" << d.method << "); ";
    v.require(std::abs(d.ratio / d.target - 1) < 0.2, "within 20% at N = " + std::to_string(N));
  }
}

void eps_sweeps(Verdict& v) {
  const std::vector<double> eps = {0.25, 0.2, 0.15, 0.1, 0.075};
  Eigen::MatrixXd b(2, 2);
  b << 1.0, -0.1, -0.1, 1.0;
  const auto P = BlockSign::Positive;

  SweepSpec persist;
  persist.matrix = matrix(b, 2.0, 2, {1, 2}, {P, P});
  persist.signPattern = {P, P};
  persist.epsilons = eps;
  persist.mode = SweepMode::Persisting;
  auto rp = epsilon_sweep(persist);
  v.detail << "persisting: " << rp.classification << " deltas";
  for (const auto& pt : rp.points) v.detail << " " << pt.profileDelta;
  v.require(rp.cauchyDecreasing, "persisting differences decrease over the last three");

  SweepSpec dec = persist;
  dec.mode = SweepMode::Decoupling;
  dec.solver.maxIters = 500;
  auto rd = epsilon_sweep(dec);
  v.detail << "; decoupling: " << rd.classification << " sep/eps growth " << rd.separationGrowth;
  for (const auto& pt : rd.points) v.require(pt.ok, "decoupling solve at eps " + std::to_string(pt.eps));
  v.require(rd.separationGrowth >= 2, "separation/eps grows 2x");

  SweepSpec single;
  single.matrix = matrix(Eigen::MatrixXd::Ones(1, 1), 2.0, 2, {1}, {P});
  single.signPattern = {P};
  single.epsilons = eps;
  single.mode = SweepMode::SingleBlock;
  single.solver.tolGrad = 1e-9;
  auto rs = epsilon_sweep(single);
  v.detail << "; single block: oracle L2 distance " << rs.oracleDistance;
  v.require(rs.oracleDistance < 5e-2, "single block within 5e-2 of the whole-space profile");
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

void determinism(Verdict& v) {
  const std::vector<std::pair<std::string, std::string>> configs = {
      {"groundstate", "task = \"groundstate\"\nN = 4\np = 1.5\n"},
      {"mu", "task = \"mu\"\nN = 4\np = 1.5\nbeta = [[1.0, 0.3, 0.2], [0.3, 2.0, 0.1], [0.2, 0.1, 0.7]]\n"},
      {"multibump",
       "task = \"multibump\"\nN = 4\np = 1.5\ngroup = \"GmPrime\"\nm = 5\nphi = \"theta\"\n"
       "[numerics]\nsamples = 100000\nlpMethod = \"monteCarlo\"\n"},
      {"minimize",
       "task = \"minimize\"\nN = 4\np = 1.5\nbeta = [[1.0, 0.5], [0.5, 1.5]]\n"
       "[numerics]\nspacing = 0.05\n[output]\nformats = [\"json\", \"csv\", \"binary\", \"txt\"]\n"},
      {"report", "task = \"report\"\nN = 4\np = 1.5\nbeta = [[1.0, -0.1], [-0.1, 1.0]]\nblocks = [1, 1]\n"}};
  const auto root = fs::temp_directory_path() / "cnls_acceptance_determinism";
  fs::remove_all(root);
  std::size_t files = 0;
  for (const auto& [name, text] : configs) {
    const auto dir = root / name;
    auto cfg = parse_config(text, name);
    RunOptions o;
    o.outDir = dir.string();
    o.seed = 11;
    std::ostringstream log;
    const int first = run(cfg, o, log);
    const auto a = artifacts(dir);
    fs::remove_all(dir);
    const int second = run(cfg, o, log);
    const auto b = artifacts(dir);
    v.require(first == kExitOk && second == kExitOk, name + " ran");
    v.require(a == b && !a.empty(), name + " artifacts identical");
    files += a.size();
  }
  fs::remove_all(root);
  v.detail << files << " artifacts over " << configs.size() << " tasks compared byte for byte";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "one-dimensional soliton", 1, soliton},
      {2, "mu constants", 10, mu_constants},
      {3, "Nehari machinery", 30, nehari_machinery},
      {4, "Psi asymptotic rate", 10, psi_asymptotics},
      {5, "multibump gap law", 600, gap_law},
      {6, "nonradial sign-changing level", 300, sign_changing_surrogate},
      {7, "single-block level mu c", 120, q1_equality},
      {8, "two-block caps and lower bound", 600, two_block_caps},
      {9, "cross-term decay rate", 60, cross_decay},
      {10, "epsilon sweeps", 900, eps_sweeps},
      {11, "determinism", 120, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream time;
    time.precision(3);
    time << secs << " s of " << c.budgetSeconds << " s";
    v.require(secs <= c.budgetSeconds, "runtime budget");
    std::printf("%s %2d %s: %s (%s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), v.detail.str().c_str(),
                time.str().c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
