#include "cnls/multibump.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "cnls/common.hpp"
#include "cnls/nehari.hpp"
#include "cnls/quadrature.hpp"

namespace cnls {

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Psi values keyed by separation; orbits only produce a handful of distinct distances.
class PsiTable {
 public:
  explicit PsiTable(const RadialProfile& prof) : prof_(prof) {}
  double operator()(double d) {
    if (d < 1e-12) return prof_.norm2p;
    const long long key = std::llround(d * 1e9);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double v = interaction_psi(prof_, d);
    cache_.emplace(key, v);
    return v;
  }

 private:
  const RadialProfile& prof_;
  std::map<long long, double> cache_;
};

// Coordinates of the centers in an orthonormal basis of their linear span, plus the codimension left
// for a perpendicular radius. Distances from a point (t, rho) are |t - c|^2 + rho^2.
struct SpanFrame {
  int N = 0;
  int k = 0;
  std::vector<std::vector<double>> proj;
};

SpanFrame span_frame(int N, const std::vector<std::vector<double>>& centers) {
  SpanFrame f;
  f.N = N;
  Eigen::MatrixXd C(static_cast<int>(centers.size()), N);
  double scale = 0;
  for (std::size_t a = 0; a < centers.size(); ++a)
    for (int i = 0; i < N; ++i) {
      C(a, i) = centers[a][i];
      scale = std::max(scale, std::abs(centers[a][i]));
    }
  if (scale == 0) {
    f.proj.assign(centers.size(), {});
    return f;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-9 * scale) ++f.k;
  Eigen::MatrixXd Q = svd.matrixV().leftCols(f.k);
  for (std::size_t a = 0; a < centers.size(); ++a) {
    Eigen::VectorXd c = Q.transpose() * C.row(a).transpose();
    f.proj.emplace_back(c.data(), c.data() + f.k);
  }
  return f;
}

int frame_dimension(const SpanFrame& f) { return f.k + (f.N > f.k ? 1 : 0); }

// Tensor Gauss quadrature over the span coordinates and the perpendicular radius. g receives the squared
// distances from the quadrature point to every center.
template <class G>
double span_quadrature(const SpanFrame& f, const LpOptions& opt, G&& g) {
  std::vector<CompositeRule> axes;
  for (int j = 0; j < f.k; ++j) {
    double lo = 0, hi = 0;
    for (const auto& c : f.proj) {
      lo = std::min(lo, c[j]);
      hi = std::max(hi, c[j]);
    }
    axes.push_back(composite_gauss(lo - opt.margin, hi + opt.margin, opt.panel, opt.order));
  }
  const int codim = f.N - f.k;
  std::vector<double> rhoX{0.0}, rhoW{1.0};
  if (codim > 0) {
    CompositeRule r = composite_gauss(0.0, opt.margin, opt.panel, opt.order);
    rhoX = r.x;
    rhoW.clear();
    for (std::size_t i = 0; i < r.x.size(); ++i)
      rhoW.push_back(r.w[i] * sphere_area(codim) * std::pow(r.x[i], codim - 1));
  }
  const std::size_t nc = f.proj.size();
  std::vector<double> d2(nc), base(nc);
  std::vector<std::size_t> idx(f.k, 0);
  double acc = 0;
  while (true) {
    double w = 1;
    for (std::size_t a = 0; a < nc; ++a) base[a] = 0;
    for (int j = 0; j < f.k; ++j) {
      const double t = axes[j].x[idx[j]];
      w *= axes[j].w[idx[j]];
      for (std::size_t a = 0; a < nc; ++a) base[a] += (t - f.proj[a][j]) * (t - f.proj[a][j]);
    }
    double line = 0;
    for (std::size_t r = 0; r < rhoX.size(); ++r) {
      const double rho2 = rhoX[r] * rhoX[r];
      for (std::size_t a = 0; a < nc; ++a) d2[a] = base[a] + rho2;
      line += rhoW[r] * g(d2.data());
    }
    acc += w * line;
    int j = f.k - 1;
    while (j >= 0 && ++idx[j] == axes[j].x.size()) idx[j--] = 0;
    if (j < 0) break;
  }
  return acc;
}

// w^e with half-integer exponents expanded into products and one square root.
struct PowerFn {
  double e;
  int twice;
  explicit PowerFn(double exponent)
      : e(exponent),
        twice(std::abs(2 * exponent - std::round(2 * exponent)) < 1e-14 ? static_cast<int>(std::round(2 * exponent)) : -1) {}
  double operator()(double w) const {
    if (twice < 0) return std::pow(w, e);
    double r = twice % 2 ? std::sqrt(w) : 1.0;
    for (int i = 0; i < twice / 2; ++i) r *= w;
    return r;
  }
};

// |sum s_a w_a|^{2p} - sum w_a^{2p}, expanded around the dominant bump to keep small overlaps exact.
double excess_integrand(const double* w, const int* s, int n, double p, const PowerFn& pw) {
  int a = 0;
  for (int b = 1; b < n; ++b)
    if (w[b] > w[a]) a = b;
  if (w[a] <= 0) return 0.0;
  double rest = 0, others = 0;
  for (int b = 0; b < n; ++b) {
    if (b == a) continue;
    rest += s[b] * w[b];
    others += pw(w[b]);
  }
  const double rel = rest / (s[a] * w[a]);
  const double lead = pw(w[a]);
  const double q = 2 * p;
  if (std::abs(rel) < 1e-6) return lead * rel * (q + 0.5 * q * (q - 1) * rel + q * (q - 1) * (q - 2) / 6 * rel * rel) - others;
  if (rel > -0.5) return lead * std::expm1(q * std::log1p(rel)) - others;
  return pw(std::abs(s[a] * w[a] + rest)) - lead - others;
}

LpEstimate lp_grid(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt) {
  SpanFrame f = span_frame(cfg.dimN(), cfg.centers);
  const int n = cfg.size();
  const double p = prof.p;
  std::vector<double> w(n);
  const PowerFn pw(2 * p);
  LpEstimate e;
  e.method = LpMethod::Grid;
  e.effectiveDim = frame_dimension(f);
  e.excess = span_quadrature(f, opt, [&](const double* d2) {
    for (int a = 0; a < n; ++a) w[a] = prof.value(std::sqrt(d2[a]));
    return excess_integrand(w.data(), cfg.signs.data(), n, p, pw);
  });
  e.value = n * prof.norm2p + e.excess;
  return e;
}

LpEstimate lp_monte_carlo(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt) {
  const int n = cfg.size();
  const int N = cfg.dimN();
  const double p = prof.p;
  // Radial-exponential proposals around each bump; rate 2p - 2 makes the pair overlap integrand flat
  // along the segment between neighbors.
  const double lambda = std::clamp(2 * p - 2, 0.25, 1.0);
  const double qNorm = std::pow(lambda, N) / (std::tgamma(N) * sphere_area(N));
  const long long perStratum = std::max<long long>(2, opt.samples / n);
  LpEstimate e;
  e.method = LpMethod::MonteCarlo;
  e.effectiveDim = effective_dimension(cfg);
  e.samples = perStratum * n;
  std::vector<double> x(N), w(n);
  const PowerFn pw(2 * p);
  double total = 0, var = 0;
  for (int t = 0; t < n; ++t) {
    std::seed_seq seq{static_cast<unsigned long long>(opt.seed), static_cast<unsigned long long>(t),
                      0x5eed5eedULL};
    std::mt19937_64 rng(seq);
    std::gamma_distribution<double> radius(N, 1.0 / lambda);
    std::normal_distribution<double> normal;
    double mean = 0, m2 = 0;
    for (long long i = 0; i < perStratum; ++i) {
      double nn = 0;
      for (int k = 0; k < N; ++k) {
        x[k] = normal(rng);
        nn += x[k] * x[k];
      }
      const double r = radius(rng) / std::sqrt(nn);
      for (int k = 0; k < N; ++k) x[k] = cfg.centers[t][k] + r * x[k];
      double q = 0;
      for (int a = 0; a < n; ++a) {
        double d = 0;
        for (int k = 0; k < N; ++k) d += (x[k] - cfg.centers[a][k]) * (x[k] - cfg.centers[a][k]);
        d = std::sqrt(d);
        w[a] = prof.value(d);
        q += qNorm * std::exp(-lambda * d);
      }
      const double y = excess_integrand(w.data(), cfg.signs.data(), n, p, pw) / q;
      const double delta = y - mean;
      mean += delta / (i + 1);
      m2 += delta * (y - mean);
    }
    // Balance heuristic with equal allocation: F = sum_t E_t[f / sum_s q_s].
    total += mean;
    var += m2 / (perStratum - 1) / perStratum;
  }
  e.excess = total;
  e.excessStderr = std::sqrt(var);
  e.value = n * prof.norm2p + e.excess;
  e.stderror = e.excessStderr;
  e.flagged = !(e.excessStderr <= opt.relTolerance * std::abs(e.excess));
  return e;
}

}  // namespace

double MultiBumpConfig::minSeparation() const {
  double best = HUGE_VAL;
  for (std::size_t a = 0; a < centers.size(); ++a)
    for (std::size_t b = a + 1; b < centers.size(); ++b) best = std::min(best, std::sqrt(dist2(centers[a], centers[b])));
  return best;
}

std::vector<double> default_anchor(int N, const SignHomomorphism& phi) {
  std::vector<double> z(N, 0.0);
  if (phi.isTheta || N < 4) {
    z[0] = 1.0;
  } else {
    z[0] = z[2] = 1.0 / std::sqrt(2.0);
  }
  return z;
}

MultiBumpConfig make_multibump(const SymmetryGroup& g, const SignHomomorphism& phi, double R,
                               std::vector<double> anchor) {
  if (!(R > 1.0)) throw ConfigError("separation scale R must exceed 1");
  if (anchor.empty()) anchor = default_anchor(g.dimN(), phi);
  if (static_cast<int>(anchor.size()) != g.dimN()) throw ConfigError("anchor dimension does not match the group");
  double nz = 0;
  for (double v : anchor) nz += v * v;
  if (std::abs(nz - 1) > 1e-12) throw ConfigError("anchor must have unit norm");
  OrbitData o = orbit(g, anchor);
  if (o.infinite) throw ConfigError("anchor has an infinite orbit; use a finite group");
  for (int s : o.stabilizer)
    if (phi(g.elements()[s]) == -1) throw ConfigError("phi is -1 on the stabilizer of the anchor; the bump sum vanishes");
  MultiBumpConfig c;
  c.group = g;
  c.phi = phi;
  c.anchor = anchor;
  c.R = R;
  for (std::size_t a = 0; a < o.orbitSize(); ++a) {
    std::vector<double> x = o.orbitPoints[a];
    for (double& v : x) v *= R;
    c.centers.push_back(std::move(x));
    c.signs.push_back(phi.isTheta ? o.orbitSigns[a] : 1);
  }
  return c;
}

MultiBumpConfig make_bumps(int N, std::vector<std::vector<double>> centers, std::vector<int> signs) {
  if (centers.size() != signs.size()) throw ConfigError("centers and signs differ in length");
  for (const auto& c : centers)
    if (static_cast<int>(c.size()) != N) throw ConfigError("bump center has the wrong dimension");
  MultiBumpConfig c;
  c.group = SymmetryGroup::trivial(N);
  c.anchor.assign(N, 0.0);
  c.centers = std::move(centers);
  c.signs = std::move(signs);
  return c;
}

PointFunction build_sigma(const RadialProfile& prof, const MultiBumpConfig& cfg) {
  return [&prof, centers = cfg.centers, signs = cfg.signs](const std::vector<double>& x) {
    double v = 0;
    for (std::size_t a = 0; a < centers.size(); ++a) v += signs[a] * prof.value(std::sqrt(dist2(x, centers[a])));
    return v;
  };
}

H1Expansion h1_expansion(const RadialProfile& prof, const MultiBumpConfig& cfg) {
  PsiTable psi(prof);
  H1Expansion e;
  const int n = cfg.size();
  const double dmin = n > 1 ? cfg.minSeparation() : 0.0;
  e.diagonal = n * prof.norm2p;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const double d = std::sqrt(dist2(cfg.centers[a], cfg.centers[b]));
      const double v = cfg.signs[a] * cfg.signs[b] * psi(d);
      e.offDiagonal += v;
      if (d < dmin * (1 + 1e-9)) {
        e.nearestNeighbor += v;
        ++e.nearestPairs;
      }
    }
  e.total = e.diagonal + e.offDiagonal;
  return e;
}

double h1_norm_multibump(const RadialProfile& prof, const MultiBumpConfig& cfg) { return h1_expansion(prof, cfg).total; }

const char* to_string(LpMethod m) {
  switch (m) {
    case LpMethod::Auto:
      return "auto";
    case LpMethod::Grid:
      return "grid";
    case LpMethod::MonteCarlo:
      return "montecarlo";
  }
  return "?";
}

int effective_dimension(const MultiBumpConfig& cfg) { return frame_dimension(span_frame(cfg.dimN(), cfg.centers)); }

LpEstimate lp_norm_multibump(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt) {
  if (cfg.size() == 0) throw ConfigError("bump configuration is empty");
  if (prof.N != cfg.dimN()) throw ConfigError("profile dimension differs from the bump configuration");
  LpMethod m = opt.method;
  if (m == LpMethod::Auto) m = effective_dimension(cfg) <= 3 ? LpMethod::Grid : LpMethod::MonteCarlo;
  if (m == LpMethod::Grid && effective_dimension(cfg) > 3)
    throw ConfigError("grid quadrature needs effective dimension <= 3, got " + std::to_string(effective_dimension(cfg)));
  if (cfg.size() == 1) {
    LpEstimate e;
    e.method = m;
    e.effectiveDim = effective_dimension(cfg);
    e.value = prof.norm2p;
    return e;
  }
  return m == LpMethod::Grid ? lp_grid(prof, cfg, opt) : lp_monte_carlo(prof, cfg, opt);
}

double lp_norm_direct_grid(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt) {
  SpanFrame f = span_frame(cfg.dimN(), cfg.centers);
  if (frame_dimension(f) > 3) throw ConfigError("direct grid quadrature needs effective dimension <= 3");
  const int n = cfg.size();
  return span_quadrature(f, opt, [&](const double* d2) {
    double v = 0;
    for (int a = 0; a < n; ++a) v += cfg.signs[a] * prof.value(std::sqrt(d2[a]));
    return std::pow(std::abs(v), 2 * prof.p);
  });
}

CrossIntegral cross_integral(const RadialProfile& prof, const MultiBumpConfig& A, const MultiBumpConfig& B,
                             const LpOptions& opt) {
  const double p = prof.p;
  std::vector<std::vector<double>> all = A.centers;
  all.insert(all.end(), B.centers.begin(), B.centers.end());
  SpanFrame f = span_frame(A.dimN(), all);
  CrossIntegral out;
  if (frame_dimension(f) <= 3) {
    const int na = A.size(), nb = B.size();
    const PowerFn pw(p);
    out.method = "grid";
    out.value = span_quadrature(f, opt, [&](const double* d2) {
      double va = 0, vb = 0;
      for (int a = 0; a < na; ++a) va += A.signs[a] * prof.value(std::sqrt(d2[a]));
      for (int b = 0; b < nb; ++b) vb += B.signs[b] * prof.value(std::sqrt(d2[na + b]));
      return pw(std::abs(va) * std::abs(vb));
    });
    return out;
  }
  out.method = "pairwise";
  std::map<long long, double> cache;
  for (const auto& a : A.centers)
    for (const auto& b : B.centers) {
      const double d = std::sqrt(dist2(a, b));
      const long long key = std::llround(d * 1e9);
      auto it = cache.find(key);
      if (it == cache.end()) it = cache.emplace(key, pair_power_integral(prof, p, p, d)).first;
      out.value += it->second;
    }
  return out;
}

namespace {

// Relative deficit 1 - J / (n c') with ||sigma||^2 = n Psi0 (1 + e), |sigma|_{2p}^{2p} = n Psi0 (1 + f).
double gap_ratio(double e, double f, double p) {
  return -std::expm1(p / (p - 1) * std::log1p(e) - 1 / (p - 1) * std::log1p(f));
}

GapFit fit_gap(const BumpEnergyCurve& c, int N) {
  GapFit g;
  std::vector<double> x, yc, yr, gaps;
  g.positive = true;
  for (std::size_t i = 0; i < c.Rvalues.size(); ++i) {
    const double R = c.Rvalues[i];
    if (R < c.fitLo - 1e-12 || R > c.fitHi + 1e-12) continue;
    if (!(c.gaps[i] > 0)) {
      g.positive = false;
      continue;
    }
    x.push_back(R);
    gaps.push_back(c.gaps[i]);
    yr.push_back(std::log(c.gaps[i]));
    yc.push_back(std::log(c.gaps[i]) + 0.5 * (N - 1) * std::log(R));
  }
  g.points = static_cast<int>(x.size());
  if (x.size() < 3) return g;
  LinearFit lc = least_squares_line(x, yc), lr = least_squares_line(x, yr);
  g.rate = -lc.slope;
  g.C0 = std::exp(lc.intercept);
  g.rawRate = -lr.slope;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = yc[i] - (lc.intercept + lc.slope * x[i]);
    ss += r * r;
  }
  g.residual = std::sqrt(ss / x.size());
  g.decreasing = true;
  for (std::size_t i = 1; i < gaps.size(); ++i)
    if (!(gaps[i] < gaps[i - 1])) g.decreasing = false;
  // Convexity of log(gap) in R via second divided differences.
  g.logConvex = true;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const double s1 = (yr[i] - yr[i - 1]) / (x[i] - x[i - 1]);
    const double s2 = (yr[i + 1] - yr[i]) / (x[i + 1] - x[i]);
    if (s2 < s1 - 1e-9) g.logConvex = false;
  }
  return g;
}

}  // namespace

BumpEnergyCurve sigma_energy_curve(const RadialProfile& prof, const SymmetryGroup& g, const SignHomomorphism& phi,
                                   const std::vector<double>& Rlist, const LpOptions& opt, double fitLo,
                                   double fitHi) {
  if ((g.kind() == GroupKind::Gm || g.kind() == GroupKind::GmPrime) && (g.m() < 2 || (phi.isTheta && g.m() < 5)))
    throw ConfigError("the energy estimate needs m >= 2, and m >= 5 for sign-changing bumps");
  if (g.kind() == GroupKind::Dihedral && g.m() < 2) throw ConfigError("the energy estimate needs at least two bumps");
  const double p = prof.p;
  BumpEnergyCurve c;
  c.fitLo = fitLo;
  c.fitHi = fitHi;
  for (double R : Rlist) {
    MultiBumpConfig cfg = make_multibump(g, phi, R);
    const int n = cfg.size();
    const double psi0 = prof.norm2p;
    H1Expansion h = h1_expansion(prof, cfg);
    LpEstimate lp = lp_norm_multibump(prof, cfg, opt);
    const double e = h.offDiagonal / (n * psi0), f = lp.excess / (n * psi0);
    c.bumps = n;
    c.limit = n * prof.cBase;
    const double ratio = gap_ratio(e, f, p);
    c.Rvalues.push_back(R);
    c.gaps.push_back(c.limit * ratio);
    c.energies.push_back(c.limit * (1 - ratio));
    // d gap / d f = limit (1 - ratio) / ((p - 1)(1 + f)).
    c.gapStderr.push_back(c.limit * (1 - ratio) / ((p - 1) * (1 + f)) * lp.excessStderr / (n * psi0));
    c.tScales.push_back(std::pow(h.total / lp.value, 1.0 / (2 * p - 2)));
    c.lp.push_back(lp);
  }
  if (g.kind() == GroupKind::Dihedral)
    c.chord = 2 * std::sin(M_PI / g.m());
  else
    c.chord = chord_length(g.m(), 1.0);
  c.fit = fit_gap(c, prof.N);
  return c;
}

namespace {

struct BlockShape {
  MultiBumpConfig cfg;
  double e = 0.0, f = 0.0;  // relative H^1 and L^{2p} excesses
  LpEstimate lp;
};

BlockShape shape_of(const RadialProfile& prof, MultiBumpConfig cfg, const LpOptions& opt) {
  BlockShape s;
  const int n = cfg.size();
  H1Expansion h = h1_expansion(prof, cfg);
  s.lp = lp_norm_multibump(prof, cfg, opt);
  s.e = h.offDiagonal / (n * prof.norm2p);
  s.f = s.lp.excess / (n * prof.norm2p);
  s.cfg = std::move(cfg);
  return s;
}

}  // namespace

TwoBlockResult two_block_upper_bound(const RadialProfile& prof, const CouplingMatrix& matrix,
                                     const std::vector<BlockSign>& signPattern, const TwoBlockOptions& opt) {
  matrix.checkStructure();
  if (matrix.blockCount() != 2) throw ConfigError("two_block_upper_bound needs exactly two blocks");
  if (signPattern.size() != 2) throw ConfigError("sign pattern must list two blocks");
  if (prof.N != matrix.dimN || std::abs(prof.p - matrix.p) > 1e-15)
    throw ConfigError("profile (N, p) differs from the coupling matrix");
  const int N = prof.N;
  const double p = prof.p;
  const double psi0 = prof.norm2p;
  const double cUnit = (p - 1) / (2 * p);  // c in units of Psi(0)
  TwoBlockResult res;
  res.planar = N < 4;
  res.cBase = prof.cBase;
  std::vector<MuResult> mus;
  for (int h = 0; h < 2; ++h) {
    mus.push_back(compute_mu(matrix, h, opt.mu));
    res.mu.push_back(mus.back().mu);
  }
  const bool pos0 = signPattern[0] == BlockSign::Positive, pos1 = signPattern[1] == BlockSign::Positive;
  if (res.planar && !(pos0 && pos1))
    throw ConfigError("planar two-block estimates cover the both-positive pattern only");
  res.lowerBound = prof.cBase * ((pos0 ? 1 : 2) * res.mu[0] + (pos1 ? 1 : 2) * res.mu[1]);
  const int m = opt.ringOrder;

  // Candidate (central, ring) assignments allowed by the sign pattern.
  std::vector<std::pair<int, int>> orders;
  if (pos0 == pos1) {
    orders = {{0, 1}, {1, 0}};
  } else {
    orders = {{pos0 ? 0 : 1, pos0 ? 1 : 0}};
  }
  if (pos0 && pos1) res.capName = "min_{h!=k} (mu_k + " + std::to_string(m) + " mu_h) c";
  else if (pos0 != pos1) res.capName = "(mu_k + " + std::to_string(2 * m) + " mu_h) c, k in Q+, h in Q-";
  else res.capName = std::to_string(2 * m) + " (mu_1 + mu_2) c";

  double R = opt.R;
  for (int attempt = 0;; ++attempt) {
    res.layouts.clear();
    bool infeasible = false;
    // Shapes depend only on the role and sign of a block, so symmetric layouts share them.
    std::map<int, BlockShape> centralShapes, ringShapes;
    std::map<std::pair<int, int>, CrossIntegral> crosses;
    for (auto [c, r] : orders) {
      const bool cPos = signPattern[c] == BlockSign::Positive, rPos = signPattern[r] == BlockSign::Positive;
      if (!centralShapes.count(cPos)) {
        MultiBumpConfig central =
            cPos ? make_bumps(N, {std::vector<double>(N, 0.0)}, {1})
                 : make_multibump(SymmetryGroup::GmPrime(N, m), SignHomomorphism::theta(), opt.centralR);
        centralShapes.emplace(cPos, shape_of(prof, central, opt.lp));
      }
      if (!ringShapes.count(rPos)) {
        MultiBumpConfig ring =
            res.planar ? make_multibump(SymmetryGroup::dihedral(m), SignHomomorphism::trivial(), R)
                       : make_multibump(SymmetryGroup::GmPrime(N, m),
                                        rPos ? SignHomomorphism::trivial() : SignHomomorphism::theta(), R);
        ringShapes.emplace(rPos, shape_of(prof, ring, opt.lp));
      }
      const BlockShape& sc = centralShapes.at(cPos);
      const BlockShape& sr = ringShapes.at(rPos);
      if (!crosses.count({cPos, rPos})) crosses.emplace(std::make_pair(cPos, rPos), cross_integral(prof, sc.cfg, sr.cfg, opt.lp));
      const CrossIntegral& X = crosses.at({cPos, rPos});
      // Amplitudes t_i from the mu-minimizers; quantities in units of Psi(0).
      const int blocks[2] = {c, r};
      const BlockShape* shapes[2] = {&sc, &sr};
      std::vector<double> a(2);
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
      auto amp = [&](int h, int i) { return mus[h].minimizer[i - matrix.blockBegin(h)]; };
      for (int u = 0; u < 2; ++u) {
        const int h = blocks[u];
        const int n = shapes[u]->cfg.size();
        double t2 = 0;
        for (int i = matrix.blockBegin(h); i < matrix.blockEnd(h); ++i) t2 += amp(h, i) * amp(h, i);
        a[u] = t2 * n * (1 + shapes[u]->e);
        for (int v = 0; v < 2; ++v) {
          const int k = blocks[v];
          double coef = 0;
          for (int i = matrix.blockBegin(h); i < matrix.blockEnd(h); ++i)
            for (int j = matrix.blockBegin(k); j < matrix.blockEnd(k); ++j)
              coef += matrix.beta(i, j) * std::pow(amp(h, i) * amp(k, j), p);
          A(u, v) = coef * (u == v ? n * (1 + shapes[u]->f) : X.value / psi0);
        }
      }
      TwoBlockLayout L;
      L.centralBlock = c;
      L.ringBlock = r;
      L.centralBumps = sc.cfg.size();
      L.ringBumps = sr.cfg.size();
      L.crossIntegral = X.value;
      L.crossMethod = X.method;
      try {
        L.s = nehari_scalings(a, A, p);
      } catch (const ProjectionInfeasible&) {
        infeasible = true;
        break;
      }
      const double J = scaled_energy(a, A, p, L.s);  // units of Psi(0)
      const double capUnits = cUnit * ((cPos ? 1 : 2 * m) * res.mu[c] + (rPos ? m : 2 * m) * res.mu[r]);
      // Report in units of c so the cap and the expansion share one normalization.
      L.energy = J / cUnit * prof.cBase;
      L.cap = capUnits / cUnit * prof.cBase;
      L.margin = (capUnits - J) / cUnit * prof.cBase;
      res.layouts.push_back(L);
    }
    if (!infeasible) break;
    if (attempt >= opt.maxRetries)
      throw NumericalError("two-block estimate: positivity condition fails up to R = " + std::to_string(R));
    R *= opt.growth;
  }
  res.R = R;
  const TwoBlockLayout* best = &res.layouts[0];
  for (const auto& L : res.layouts)
    if (L.margin > best->margin) best = &L;
  res.energy = best->energy;
  res.cap = best->cap;
  res.margin = best->margin;
  res.belowCap = res.margin > 0;
  res.aboveLower = res.energy > res.lowerBound;
  if (res.planar) res.notes = "planar surrogate: dihedral ring in n = " + std::to_string(N);
  return res;
}

CrossDecay cross_term_decay(const RadialProfile& prof, double R, double dR, int ringOrder, const LpOptions& opt) {
  const int N = prof.N;
  auto ring = [&](double r) {
    if (N < 4) return make_multibump(SymmetryGroup::dihedral(ringOrder), SignHomomorphism::trivial(), r);
    return make_multibump(SymmetryGroup::GmPrime(N, ringOrder), SignHomomorphism::trivial(), r);
  };
  MultiBumpConfig center = make_bumps(N, {std::vector<double>(N, 0.0)}, {1});
  CrossDecay d;
  d.R = R;
  d.dR = dR;
  CrossIntegral a = cross_integral(prof, center, ring(R), opt), b = cross_integral(prof, center, ring(R + dR), opt);
  d.X0 = a.value;
  d.X1 = b.value;
  d.ratio = b.value / a.value;
  d.target = std::exp(-prof.p * dR);
  d.method = a.method;
  return d;
}

}  // namespace cnls
