#include "cnls/groundstate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cnls/common.hpp"
#include "cnls/quadrature.hpp"

namespace cnls {

namespace {

using real = long double;

struct Trajectory {
  int verdict = 0;  // +1 crossed zero (w0 too large), -1 turned upward (too small), 0 undecided
  std::vector<real> w, dw;
};

struct RadialOde {
  int N;
  real q;  // 2p - 1

  void rhs(real r, real w, real dw, real& fw, real& fdw) const {
    real nl = w == 0 ? real(0) : (w > 0 ? std::pow(w, q) : -std::pow(-w, q));
    fw = dw;
    if (r == 0)
      fdw = (w - nl) / N;
    else
      fdw = w - nl - (N - 1) * dw / r;
  }
};

// Even Taylor expansion sum b_k r^{2k} about the origin; avoids stepping RK4 through the
// 1/r singularity. Powers of the series use the J.C.P. Miller recurrence.
struct SeriesStart {
  static constexpr int kTerms = 16;
  real b[kTerms];
  SeriesStart(const RadialOde& ode, real w0) {
    real c[kTerms];
    b[0] = w0;
    c[0] = std::pow(w0, ode.q);
    for (int k = 1; k < kTerms; ++k) {
      b[k] = (b[k - 1] - c[k - 1]) / (2 * k * (2 * k + ode.N - 2));
      real acc = 0;
      for (int j = 1; j <= k; ++j) acc += (ode.q * j - (k - j)) * b[j] * c[k - j];
      c[k] = acc / (k * b[0]);
    }
  }
  real w(real r) const {
    const real s = r * r;
    real v = 0;
    for (int k = kTerms - 1; k >= 0; --k) v = v * s + b[k];
    return v;
  }
  real dw(real r) const {
    const real s = r * r;
    real v = 0;
    for (int k = kTerms - 1; k >= 1; --k) v = v * s + 2 * k * b[k];
    return v * r;
  }
};

Trajectory shoot(const RadialOde& ode, real w0, real h, std::size_t maxSteps, bool keep) {
  Trajectory t;
  SeriesStart series(ode, w0);
  const std::size_t start = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.1L / h)));
  if (keep) {
    for (std::size_t k = 0; k <= start; ++k) {
      t.w.push_back(series.w(k * h));
      t.dw.push_back(series.dw(k * h));
    }
  }
  real w = series.w(start * h), dw = series.dw(start * h);
  for (std::size_t k = start; k < maxSteps; ++k) {
    const real r = k * h;
    real k1w, k1d, k2w, k2d, k3w, k3d, k4w, k4d;
    ode.rhs(r, w, dw, k1w, k1d);
    ode.rhs(r + h / 2, w + h / 2 * k1w, dw + h / 2 * k1d, k2w, k2d);
    ode.rhs(r + h / 2, w + h / 2 * k2w, dw + h / 2 * k2d, k3w, k3d);
    ode.rhs(r + h, w + h * k3w, dw + h * k3d, k4w, k4d);
    w += h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w);
    dw += h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d);
    if (keep) {
      t.w.push_back(w);
      t.dw.push_back(dw);
    }
    if (w < 0) {
      t.verdict = +1;
      return t;
    }
    if (dw > 0) {
      t.verdict = -1;
      return t;
    }
  }
  return t;
}

double tail_shape(int N, double r) {
  const double nu = 0.5 * (N - 2);
  return std::pow(r, -nu) * std::cyl_bessel_k(std::abs(nu), r);
}

// d/dr [r^{-nu} K_nu(r)] = -r^{-nu} K_{nu+1}(r), valid for every real nu.
double tail_shape_derivative(int N, double r) {
  const double nu = 0.5 * (N - 2);
  return -std::pow(r, -nu) * std::cyl_bessel_k(std::abs(nu + 1.0), r);
}

}  // namespace

void check_exponent(int N, double p) {
  if (N < 1) throw ConfigError("dimension N must be >= 1, got " + std::to_string(N));
  if (!(p > 1.0)) throw ConfigError("exponent p must exceed 1, got " + std::to_string(p));
  if (N >= 3 && !(p < static_cast<double>(N) / (N - 2)))
    throw ConfigError("exponent p = " + std::to_string(p) + " is not subcritical for N = " + std::to_string(N) +
                      " (need p < N/(N-2))");
}

RadialProfile solve_ground_state(int N, double p, const GroundStateOptions& opt) {
  check_exponent(N, p);
  if (!(opt.step > 0) || !(opt.rMax > opt.step) || !(opt.rStitch > 1.0))
    throw ConfigError("ground state grid options are inconsistent");

  RadialOde ode{N, static_cast<real>(2.0 * p - 1.0)};
  std::size_t K = static_cast<std::size_t>(std::llround(opt.rMax / opt.step));
  if (K % 2) ++K;
  const real h = static_cast<real>(opt.rMax) / K;

  // Bracket: w0 <= 1 never overshoots since w - w^{2p-1} >= 0 there.
  real lo = 1, hi = 2;
  for (int i = 0; i < 60 && shoot(ode, hi, h, K, false).verdict != +1; ++i) hi *= 2;
  if (shoot(ode, hi, h, K, false).verdict != +1) throw NumericalError("ground state: no overshooting amplitude found");

  for (int it = 0; it < 200; ++it) {
    real mid = (lo + hi) / 2;
    if (mid <= lo || mid >= hi) break;
    int v = shoot(ode, mid, h, K, false).verdict;
    if (v == +1)
      hi = mid;
    else if (v == -1)
      lo = mid;
    else {
      lo = hi = mid;
      break;
    }
  }

  Trajectory tl = shoot(ode, lo, h, K, true);
  Trajectory th = shoot(ode, hi, h, K, true);
  const std::size_t common = std::min(tl.w.size(), th.w.size());
  std::size_t ks = std::min<std::size_t>(common - 1, static_cast<std::size_t>(opt.rStitch / static_cast<double>(h)));
  for (std::size_t k = 1; k < common; ++k) {
    real split = std::abs(tl.w[k] - th.w[k]);
    if (split > static_cast<real>(opt.reliability) * std::abs(tl.w[k])) {
      ks = std::min(ks, k > 10 ? k - 10 : k);
      break;
    }
  }
  if (ks * static_cast<double>(h) < 5.0)
    throw NumericalError("ground state: shooting lost reliability before r = 5");

  RadialProfile prof;
  prof.N = N;
  prof.p = p;
  prof.w0 = static_cast<double>((lo + hi) / 2);
  prof.step = static_cast<double>(h);
  prof.rMax = static_cast<double>(h * K);
  prof.rStitch = ks * prof.step;
  prof.tailAmplitude = static_cast<double>(tl.w[ks]) / tail_shape(N, prof.rStitch);
  prof.asymptoticConstant = prof.tailAmplitude * std::sqrt(M_PI / 2.0);

  prof.w.resize(K + 1);
  prof.dw.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    if (k <= ks) {
      prof.w[k] = static_cast<double>(tl.w[k]);
      prof.dw[k] = static_cast<double>(tl.dw[k]);
    } else {
      const double r = k * prof.step;
      prof.w[k] = prof.tailAmplitude * tail_shape(N, r);
      prof.dw[k] = prof.tailAmplitude * tail_shape_derivative(N, r);
    }
  }

  const double S = sphere_area(N);
  std::vector<double> sw = simpson_weights(static_cast<int>(K), prof.step);
  double h1 = 0, lp = 0;
  for (std::size_t k = 0; k <= K; ++k) {
    const double r = k * prof.step;
    const double jac = N == 1 ? 1.0 : std::pow(r, N - 1);
    h1 += sw[k] * jac * (prof.w[k] * prof.w[k] + prof.dw[k] * prof.dw[k]);
    lp += sw[k] * jac * std::pow(prof.w[k], 2.0 * p);
  }
  // Beyond rMax the profile is a r^{-(N-1)/2} e^{-r}; both integrands decay like e^{-2r} or faster.
  const double a = prof.asymptoticConstant;
  h1 += a * a * std::exp(-2.0 * prof.rMax);
  prof.normH1sq = S * h1;
  prof.norm2p = S * lp;
  prof.cBase = (p - 1.0) / (2.0 * p) * prof.normH1sq;

  std::vector<double> res = radial_residual(prof);
  double worst = 0;
  for (double v : res) worst = std::max(worst, std::abs(v));
  prof.odeResidual = worst;
  return prof;
}

double RadialProfile::value(double r) const {
  r = std::abs(r);
  if (r >= rMax) return tailAmplitude * tail_shape(N, r);
  const double s = r / step;
  std::size_t k = static_cast<std::size_t>(s);
  if (k >= w.size() - 1) k = w.size() - 2;
  const double t = s - k;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * w[k] + h10 * step * dw[k] + h01 * w[k + 1] + h11 * step * dw[k + 1];
}

double RadialProfile::derivative(double r) const {
  const double sgn = r < 0 ? -1.0 : 1.0;
  r = std::abs(r);
  if (r >= rMax) return sgn * tailAmplitude * tail_shape_derivative(N, r);
  const double s = r / step;
  std::size_t k = static_cast<std::size_t>(s);
  if (k >= w.size() - 1) k = w.size() - 2;
  const double t = s - k;
  const double t2 = t * t;
  const double d00 = (6 * t2 - 6 * t) / step, d10 = 3 * t2 - 4 * t + 1;
  const double d01 = (-6 * t2 + 6 * t) / step, d11 = 3 * t2 - 2 * t;
  return sgn * (d00 * w[k] + d10 * dw[k] + d01 * w[k + 1] + d11 * dw[k + 1]);
}

std::vector<double> radial_residual(const RadialProfile& prof) {
  const std::size_t K = prof.w.size() - 1;
  const double h = prof.step;
  const double q = 2.0 * prof.p - 1.0;
  // w' is odd in r, which supplies the ghost values at the origin.
  auto dwAt = [&](long k) { return k < 0 ? -prof.dw[-k] : prof.dw[k]; };
  std::vector<double> res(K + 1, 0.0);
  for (std::size_t k = 0; k + 2 <= K; ++k) {
    const long i = static_cast<long>(k);
    const double d2 = (8.0 * (dwAt(i + 1) - dwAt(i - 1)) - (dwAt(i + 2) - dwAt(i - 2))) / (12.0 * h);
    const double wk = prof.w[k];
    const double nl = signed_pow(wk, q);
    if (k == 0)
      res[k] = prof.N * d2 - wk + nl;
    else
      res[k] = d2 + (prof.N - 1) * prof.dw[k] / (k * h) - wk + nl;
  }
  return res;
}

int shooting_verdict(int N, double p, double w0, const GroundStateOptions& opt) {
  check_exponent(N, p);
  RadialOde ode{N, static_cast<real>(2.0 * p - 1.0)};
  const std::size_t K = static_cast<std::size_t>(std::llround(opt.rMax / opt.step));
  return shoot(ode, static_cast<real>(w0), static_cast<real>(opt.rMax) / K, K, false).verdict;
}

double pair_power_integral(const RadialProfile& prof, double a, double b, double delta) {
  delta = std::abs(delta);
  const int N = prof.N;
  // The integrand is negligible more than T past either bump; T also covers the delta = 0 limit.
  const double T = std::min(prof.rMax, 28.0);
  CompositeRule axial = composite_gauss(-T, delta + T, 0.5, 8);
  // Points where the product sits e^{-60} below the e^{-min(a,b) delta} scale of the integral are skipped;
  // most of them lie in the Bessel tail, which dominates the cost.
  const double cutoff = std::min(a, b) * delta + 60.0;
  auto power = [](double v, double e) { return e == 1.0 ? v : e == 2.0 ? v * v : std::pow(v, e); };
  auto integrand = [&](double t, double rho) {
    const double r1 = std::hypot(t, rho), r2 = std::hypot(t - delta, rho);
    if (a * r1 + b * r2 > cutoff) return 0.0;
    return power(prof.value(r1), a) * power(prof.value(r2), b);
  };
  double acc = 0;
  if (N == 1) {
    for (std::size_t i = 0; i < axial.x.size(); ++i) acc += axial.w[i] * integrand(axial.x[i], 0.0);
    return acc;
  }
  CompositeRule radial = composite_gauss(0.0, T, 0.5, 8);
  for (std::size_t j = 0; j < radial.x.size(); ++j) {
    const double rho = radial.x[j];
    const double wr = radial.w[j] * std::pow(rho, N - 2);
    double line = 0;
    for (std::size_t i = 0; i < axial.x.size(); ++i) line += axial.w[i] * integrand(axial.x[i], rho);
    acc += wr * line;
  }
  return sphere_area(N - 1) * acc;
}

double interaction_psi(const RadialProfile& prof, double delta) {
  return pair_power_integral(prof, 2.0 * prof.p - 1.0, 1.0, delta);
}

double h1_cross_term(const RadialProfile& prof, const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("h1_cross_term: points differ in dimension");
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  if (d2 == 0) return prof.normH1sq;
  return interaction_psi(prof, std::sqrt(d2));
}

double InteractionKernel::operator()(double d) const {
  d = std::abs(d);
  if (d >= delta.back()) {
    // Continue with the pinned asymptotic form beyond the table.
    const double n = delta.back();
    return psi.back() * std::exp(-(d - n)) * std::pow(n / d, 0.5 * (N - 1));
  }
  const double spacing = delta[1] - delta[0];
  std::size_t k = static_cast<std::size_t>(d / spacing);
  if (k + 1 >= delta.size()) k = delta.size() - 2;
  const double t = (d - delta[k]) / spacing;
  return std::exp((1 - t) * std::log(psi[k]) + t * std::log(psi[k + 1]));
}

InteractionKernel build_interaction_kernel(const RadialProfile& prof, double deltaMax, double spacing, double fitLo,
                                           double fitHi) {
  InteractionKernel ker;
  ker.N = prof.N;
  ker.fitLo = fitLo;
  ker.fitHi = fitHi;
  const int n = static_cast<int>(std::ceil(deltaMax / spacing));
  std::vector<double> fx, fy;
  for (int k = 0; k <= n; ++k) {
    const double d = k * spacing;
    ker.delta.push_back(d);
    ker.psi.push_back(interaction_psi(prof, d));
    if (d >= fitLo - 1e-12 && d <= fitHi + 1e-12) {
      fx.push_back(d);
      fy.push_back(std::log(ker.psi.back() * std::pow(d, 0.5 * (prof.N - 1))));
    }
  }
  if (fx.size() < 3) throw ConfigError("interaction kernel: fit window holds fewer than three table points");
  ker.fittedRate = -least_squares_line(fx, fy).slope;
  double mean = 0;
  for (std::size_t i = 0; i < fx.size(); ++i) mean += fy[i] + fx[i];
  mean /= fx.size();
  ker.fittedB = std::exp(mean);
  double rss = 0;
  for (std::size_t i = 0; i < fx.size(); ++i) rss += std::pow(fy[i] + fx[i] - mean, 2);
  ker.fitResidual = std::sqrt(rss / fx.size());
  return ker;
}

}  // namespace cnls
