#include "cnls/nehari.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "cnls/quadrature.hpp"

namespace cnls {

double compute_Cphi(double dphi, double Sphi, double p) {
  return std::pow(p * dphi / ((p - 1.0) * std::pow(Sphi, p / (p - 1.0))), p);
}

void EnergyContext::setConstants(double Sphi, double dphi, const std::string& provenance) {
  constants.Sphi = Sphi;
  constants.dphi = dphi;
  constants.haveS = constants.haveD = true;
  constants.Cphi = compute_Cphi(dphi, Sphi, matrix.p);
  constants.provenance = provenance;
}

BlockQuantities block_quantities(const EnergyContext& ctx, const FieldVector& u) {
  const CouplingMatrix& m = ctx.matrix;
  const Domain& d = *ctx.domain;
  const int q = m.blockCount(), l = m.ell();
  if (u.ell() != l) throw ConfigError("field has " + std::to_string(u.ell()) + " components, matrix has " + std::to_string(l));
  BlockQuantities b;
  b.a.assign(q, 0.0);
  b.A = Eigen::MatrixXd::Zero(q, q);
  b.normSq.resize(l);
  for (int i = 0; i < l; ++i) {
    b.normSq[i] = d.h1_norm_sq(u.comps[i]);
    b.a[m.blockOf(i)] += b.normSq[i];
  }
  for (int i = 0; i < l; ++i) {
    for (int j = i; j < l; ++j) {
      if (m.beta(i, j) == 0) continue;
      const double I = d.lp_coupling_integral(u.comps[i], u.comps[j], m.p);
      const int hi = m.blockOf(i), hj = m.blockOf(j);
      b.A(hi, hj) += m.beta(i, j) * I;
      if (i != j) b.A(hj, hi) += m.beta(j, i) * I;
    }
  }
  return b;
}

double scaled_energy(const std::vector<double>& a, const Eigen::MatrixXd& A, double p, const std::vector<double>& s) {
  const int q = static_cast<int>(a.size());
  double e = 0;
  for (int h = 0; h < q; ++h) {
    e += 0.5 * s[h] * s[h] * a[h];
    for (int k = 0; k < q; ++k) e -= A(h, k) * std::pow(s[h] * s[k], p) / (2 * p);
  }
  return e;
}

double energy(const EnergyContext& ctx, const FieldVector& u) {
  BlockQuantities b = block_quantities(ctx, u);
  return scaled_energy(b.a, b.A, ctx.matrix.p, std::vector<double>(b.a.size(), 1.0));
}

FieldVector gradient(const EnergyContext& ctx, const FieldVector& u) {
  const CouplingMatrix& m = ctx.matrix;
  const Domain& d = *ctx.domain;
  const double p = m.p;
  FieldVector g(ctx.domain, u.ell());
  g.signPattern = u.signPattern;
  std::vector<std::vector<double>> pw(u.ell());
  for (int j = 0; j < u.ell(); ++j) {
    pw[j].resize(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) pw[j][k] = std::pow(std::abs(u.comps[j][k]), p);
  }
  for (int i = 0; i < u.ell(); ++i) {
    std::vector<double> lap = d.laplacian(u.comps[i]);
    auto& gi = g.comps[i];
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!d.active(k)) continue;
      const double ui = u.comps[i][k];
      double coupling = 0;
      for (int j = 0; j < u.ell(); ++j) coupling += m.beta(i, j) * pw[j][k];
      // |u|^{p-2} u, continuous extension 0 at u = 0 (clamped below 1e-300).
      const double odd = std::abs(ui) < 1e-300 ? 0.0 : signed_pow(ui, p - 1);
      gi[k] = -lap[k] + ui - coupling * odd;
    }
  }
  return g;
}

NehariReport nehari_report(const EnergyContext& ctx, const FieldVector& u, double tol) {
  BlockQuantities b = block_quantities(ctx, u);
  const double p = ctx.matrix.p;
  NehariReport r;
  r.blockNormSq = b.a;
  r.member = true;
  double worst = 0;
  for (std::size_t h = 0; h < b.a.size(); ++h) {
    const double rowSum = b.A.row(h).sum();
    const double res = b.a[h] > 0 ? (b.a[h] - rowSum) / b.a[h] : 1.0;
    r.residuals.push_back(b.a[h] - rowSum);
    r.relativeResiduals.push_back(res);
    worst = std::max(worst, std::abs(res));
    r.normSqTotal += b.a[h];
    if (!(b.a[h] > 0)) r.member = false;
  }
  if (!(worst < tol)) r.member = false;
  r.energy = scaled_energy(b.a, b.A, p, std::vector<double>(b.a.size(), 1.0));
  r.identityGap = std::abs(r.energy - (p - 1) / (2 * p) * r.normSqTotal);
  return r;
}

std::vector<double> nehari_scalings(const std::vector<double>& a, const Eigen::MatrixXd& A, double p,
                                    const NehariOptions& opt, int* iterations) {
  const int q = static_cast<int>(a.size());
  for (int h = 0; h < q; ++h) {
    if (!(a[h] > 0)) throw ProjectionInfeasible(h, "Nehari projection: block " + std::to_string(h + 1) + " vanishes");
    if (!(A.row(h).sum() > 0))
      throw ProjectionInfeasible(h, "Nehari projection infeasible: positivity condition fails for block " +
                                        std::to_string(h + 1));
  }
  // Residual in log variables: F_h = sum_k A_hk s_h^{p-2} s_k^p / a_h - 1.
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& F, Eigen::MatrixXd* J) {
    F.resize(q);
    if (J) J->setZero(q, q);
    for (int h = 0; h < q; ++h) {
      double acc = 0;
      for (int k = 0; k < q; ++k) {
        const double t = A(h, k) * std::exp((p - 2) * x(h) + p * x(k)) / a[h];
        acc += t;
        if (J) {
          (*J)(h, h) += (p - 2) * t;
          (*J)(h, k) += p * t;
        }
      }
      F(h) = acc - 1.0;
    }
  };
  Eigen::VectorXd x(q);
  for (int h = 0; h < q; ++h) x(h) = std::log(a[h] / std::max(A(h, h), 1e-300)) / (2 * p - 2);
  if (q == 1) {
    x(0) = std::log(a[0] / A(0, 0)) / (2 * p - 2);
    if (iterations) *iterations = 0;
    return {std::exp(x(0))};
  }
  Eigen::VectorXd F;
  Eigen::MatrixXd J;
  residual(x, F, &J);
  int it = 0;
  for (; it < opt.maxIterations && F.cwiseAbs().maxCoeff() > 0.1 * opt.tol; ++it) {
    Eigen::VectorXd dx = J.fullPivLu().solve(-F);
    double step = 1.0;
    Eigen::VectorXd Fn;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::VectorXd xn = x + step * dx;
      residual(xn, Fn, nullptr);
      if (Fn.allFinite() && Fn.norm() < F.norm()) {
        x = xn;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
    residual(x, F, &J);
  }
  if (iterations) *iterations = it;
  if (!(F.cwiseAbs().maxCoeff() < opt.tol)) {
    std::ostringstream os;
    os << "Nehari projection: Newton stalled after " << it << " iterations, residual " << F.cwiseAbs().maxCoeff()
       << ", last s =";
    for (int h = 0; h < q; ++h) os << " " << std::exp(x(h));
    throw NumericalError(os.str());
  }
  std::vector<double> s(q);
  for (int h = 0; h < q; ++h) s[h] = std::exp(x(h));
  return s;
}

ProjectionResult nehari_project(const EnergyContext& ctx, const FieldVector& u, const NehariOptions& opt) {
  const CouplingMatrix& m = ctx.matrix;
  BlockQuantities b = block_quantities(ctx, u);
  ProjectionResult r;
  r.s = nehari_scalings(b.a, b.A, m.p, opt, &r.iterations);
  r.field = u;
  for (int i = 0; i < u.ell(); ++i) {
    const double s = r.s[m.blockOf(i)];
    for (double& v : r.field.comps[i]) v *= s;
  }
  r.report = nehari_report(ctx, r.field, opt.tol);
  if (opt.verifyMax) {
    const double top = scaled_energy(b.a, b.A, m.p, r.s);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    r.maxVerified = true;
    for (int t = 0; t < opt.maxSamples; ++t) {
      std::vector<double> s = r.s;
      for (double& v : s) v *= 1.0 + opt.maxPerturbation * U(rng);
      if (!(scaled_energy(b.a, b.A, m.p, s) < top)) r.maxVerified = false;
    }
  }
  return r;
}

double Sphi_trivial(const RadialProfile& prof) { return std::pow(prof.normH1sq, (prof.p - 1) / prof.p); }

double Sphi_from_level(double c, double p) { return std::pow(2 * p * c / (p - 1), (p - 1) / p); }

double block_norm_lower_bound(const CouplingMatrix& m, int h, double Sphi) {
  double B = 0;
  for (int i = m.blockBegin(h); i < m.blockEnd(h); ++i)
    for (int j = m.blockBegin(h); j < m.blockEnd(h); ++j) B += std::max(0.0, m.beta(i, j));
  return std::pow(std::pow(Sphi, m.p) / B, 1.0 / (m.p - 1));
}

DphiBound compute_dphi_upper(const RadialProfile& prof, const std::vector<int>& bumpsPerBlock, double rc) {
  if (!(rc > 2.0)) throw ConfigError("truncation radius must exceed 2");
  const int N = prof.N;
  const double p = prof.p;
  auto chi = [&](double r) {
    if (r <= rc - 1) return 1.0;
    if (r >= rc) return 0.0;
    const double c = std::cos(0.5 * M_PI * (r - (rc - 1)));
    return c * c;
  };
  auto dchi = [&](double r) {
    if (r <= rc - 1 || r >= rc) return 0.0;
    const double t = 0.5 * M_PI * (r - (rc - 1));
    return -M_PI * std::sin(t) * std::cos(t);
  };
  CompositeRule rule = composite_gauss(0.0, rc, 0.25, 8);
  double a = 0, b = 0;
  for (std::size_t k = 0; k < rule.x.size(); ++k) {
    const double r = rule.x[k];
    const double jac = N == 1 ? 1.0 : std::pow(r, N - 1);
    const double v = prof.value(r) * chi(r);
    const double dv = prof.derivative(r) * chi(r) + prof.value(r) * dchi(r);
    a += rule.w[k] * jac * (dv * dv + v * v);
    b += rule.w[k] * jac * std::pow(std::abs(v), 2 * p);
  }
  a *= sphere_area(N);
  b *= sphere_area(N);
  DphiBound out;
  out.truncationRadius = rc;
  out.bumpsPerBlock = bumpsPerBlock;
  out.bumpNormSq = a;
  out.bumpNorm2p = b;
  // n disjoint copies scaled onto the Nehari set have norm^2 n a^{p/(p-1)} / b^{1/(p-1)}.
  const double one = std::pow(a, p / (p - 1)) / std::pow(b, 1 / (p - 1));
  double total = 0;
  for (int n : bumpsPerBlock) {
    if (n < 1) throw ConfigError("each block needs at least one bump");
    total += n * one;
  }
  out.value = (p - 1) / (2 * p) * total;
  return out;
}

}  // namespace cnls
