#include "cnls/solver.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>

#include "cnls/multibump.hpp"

namespace cnls {

const char* to_string(InitKind k) {
  switch (k) {
    case InitKind::MuScaledGroundState:
      return "muScaledGroundState";
    case InitKind::MultibumpSeed:
      return "multibumpSeed";
    case InitKind::Random:
      return "random";
  }
  return "?";
}

InitKind init_from_string(const std::string& s) {
  if (s == "muScaledGroundState") return InitKind::MuScaledGroundState;
  if (s == "multibumpSeed") return InitKind::MultibumpSeed;
  if (s == "random") return InitKind::Random;
  throw ConfigError("unknown init kind '" + s + "'");
}

const char* to_string(SignClass c) {
  switch (c) {
    case SignClass::Positive:
      return "positive";
    case SignClass::SignChanging:
      return "signChanging";
    case SignClass::Indeterminate:
      return "indeterminate";
  }
  return "?";
}

const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::Decoupling:
      return "decoupling";
    case SweepMode::Persisting:
      return "persisting";
    case SweepMode::SingleBlock:
      return "singleBlock";
  }
  return "?";
}

SweepMode sweep_mode_from_string(const std::string& s) {
  if (s == "decoupling") return SweepMode::Decoupling;
  if (s == "persisting") return SweepMode::Persisting;
  if (s == "singleBlock") return SweepMode::SingleBlock;
  throw ConfigError("unknown sweep mode '" + s + "'");
}

bool BoundReport::pass() const {
  if (!nontrivial) return false;
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

namespace {

constexpr double kPosFraction = 1e-3;
constexpr double kFloorFraction = 1e-6;

std::vector<BlockSymmetry> effective_groups(const SolveSpec& spec) {
  const auto& ctx = spec.ctx;
  const int q = ctx.matrix.blockCount();
  if (!ctx.groupData.empty()) return ctx.groupData;
  const int n = ctx.domain->kind() == DomainKind::Radial ? ctx.domain->measureDim() : ctx.domain->gridDim();
  return std::vector<BlockSymmetry>(q, BlockSymmetry{SymmetryGroup::trivial(n), SignHomomorphism::trivial()});
}

void validate(const SolveSpec& spec) {
  const auto& ctx = spec.ctx;
  if (!ctx.domain) throw ConfigError("solver: no domain");
  ctx.matrix.checkStructure();
  const int q = ctx.matrix.blockCount();
  if (static_cast<int>(spec.signPattern.size()) != q)
    throw ConfigError("solver: sign pattern must list one entry per block");
  if (!ctx.groupData.empty() && static_cast<int>(ctx.groupData.size()) != q)
    throw ConfigError("solver: group data must list one entry per block");
  if (!spec.seeds.empty() && static_cast<int>(spec.seeds.size()) != q)
    throw ConfigError("solver: seeds must list one entry per block");
  if (!(spec.tolGrad > 0) || spec.maxIters < 1) throw ConfigError("solver: tolGrad > 0 and maxIters >= 1 required");
  if (!(spec.alphaMin > 0) || !(spec.alphaMax >= spec.alphaMin)) throw ConfigError("solver: bad step clamp");
  const auto groups = effective_groups(spec);
  for (int h = 0; h < q; ++h) {
    const auto& bs = groups[h];
    if (!group_acts_on(*ctx.domain, bs.group))
      throw ConfigError("solver: group of block " + std::to_string(h + 1) + " does not act on the grid");
    if (spec.signPattern[h] == BlockSign::Positive && bs.phi.isTheta)
      throw ConfigError("solver: Q+ block " + std::to_string(h + 1) + " needs the trivial homomorphism");
    if (spec.signPattern[h] == BlockSign::SignChanging) {
      if (!bs.phi.isTheta || !bs.group.thetaDefined())
        throw ConfigError("solver: Q- block " + std::to_string(h + 1) + " needs theta on a group carrying it");
      if (ctx.domain->kind() == DomainKind::Radial)
        throw ConfigError("solver: sign-changing blocks cannot live on a radial domain");
    }
  }
}

std::shared_ptr<const RadialProfile> profile_for(const SolveSpec& spec) {
  const int N = spec.ctx.domain->measureDim();
  const double p = spec.ctx.matrix.p;
  if (spec.profile) {
    if (spec.profile->N != N || spec.profile->p != p)
      throw ConfigError("solver: profile does not match the domain dimension and exponent");
    return spec.profile;
  }
  return std::make_shared<const RadialProfile>(solve_ground_state(N, p));
}

// Anchor off every reflection axis for the planar surrogate, the orbit default otherwise.
std::vector<double> seed_anchor(const SymmetryGroup& g, const SignHomomorphism& phi) {
  if (g.kind() == GroupKind::Dihedral) {
    const double a = M_PI / (2.0 * g.m());
    return {std::cos(a), std::sin(a)};
  }
  return default_anchor(g.dimN(), phi);
}

double distance_to(const double* x, const std::vector<double>& c, int n) {
  double d2 = 0;
  for (int i = 0; i < n; ++i) {
    const double ci = i < static_cast<int>(c.size()) ? c[i] : 0.0;
    d2 += (x[i] - ci) * (x[i] - ci);
  }
  return std::sqrt(d2);
}

std::vector<double> sigma_seed(const RadialProfile& prof, const Domain& d, const BlockSymmetry& bs, double R) {
  if (d.kind() == DomainKind::Radial) return d.sample([&](const double* x) { return prof.value(x[0]); });
  auto cfg = make_multibump(bs.group, bs.phi, R, seed_anchor(bs.group, bs.phi));
  auto sigma = build_sigma(prof, cfg);
  const int n = d.gridDim();
  return d.sample([&](const double* x) { return sigma(std::vector<double>(x, x + n)); });
}

std::vector<double> bump_seed(const RadialProfile& prof, const Domain& d, const BlockSeed& seed) {
  const int n = d.gridDim();
  if (d.kind() == DomainKind::Radial || seed.centers.empty())
    return d.sample([&](const double* x) {
      return prof.value(d.kind() == DomainKind::Radial ? x[0] : distance_to(x, {}, n));
    });
  return d.sample([&](const double* x) {
    double v = 0;
    for (const auto& c : seed.centers) v += prof.value(distance_to(x, c, n));
    return v;
  });
}

FieldVector symmetrized(const SolveSpec& spec, const std::vector<BlockSymmetry>& groups, FieldVector u) {
  const auto& m = spec.ctx.matrix;
  const auto& d = *spec.ctx.domain;
  for (int h = 0; h < m.blockCount(); ++h)
    for (int i = m.blockBegin(h); i < m.blockEnd(h); ++i) {
      u.comps[i] = symmetrize(d, u.comps[i], groups[h].group, groups[h].phi);
      if (spec.signPattern[h] == BlockSign::Positive)
        for (double& v : u.comps[i]) v = std::abs(v);
    }
  return u;
}

double equivariance_residual(const SolveSpec& spec, const std::vector<BlockSymmetry>& groups, const FieldVector& u) {
  const auto& m = spec.ctx.matrix;
  double worst = 0;
  for (int h = 0; h < m.blockCount(); ++h)
    for (int i = m.blockBegin(h); i < m.blockEnd(h); ++i)
      worst = std::max(worst, check_equivariance(*spec.ctx.domain, u.comps[i], groups[h].group, groups[h].phi));
  return worst;
}

FieldVector seed_field(const SolveSpec& spec, const std::vector<BlockSymmetry>& groups, const RadialProfile& prof,
                       const std::vector<MuResult>& mu, InitKind kind) {
  const auto& m = spec.ctx.matrix;
  const auto& d = *spec.ctx.domain;
  FieldVector u(spec.ctx.domain, m.ell());
  u.signPattern = spec.signPattern;
  std::mt19937_64 rng(spec.seed);
  for (int h = 0; h < m.blockCount(); ++h) {
    const BlockSeed seed = spec.seeds.empty() ? BlockSeed{} : spec.seeds[h];
    std::vector<double> shape;
    if (kind == InitKind::Random) {
      const int n = d.gridDim();
      std::uniform_real_distribution<double> pos(-d.extent() / 3, d.extent() / 3), amp(0.5, 1.5);
      std::vector<std::vector<double>> centers(3, std::vector<double>(n));
      std::vector<double> amps(3);
      for (int b = 0; b < 3; ++b) {
        for (double& c : centers[b]) c = d.kind() == DomainKind::Radial ? 0.0 : pos(rng);
        amps[b] = amp(rng) * (spec.signPattern[h] == BlockSign::SignChanging && b % 2 ? -1.0 : 1.0);
      }
      shape = d.sample([&](const double* x) {
        double v = 0;
        for (int b = 0; b < 3; ++b) {
          const double r = distance_to(x, centers[b], n);
          v += amps[b] * std::exp(-0.5 * r * r);
        }
        return v;
      });
    } else if (kind == InitKind::MultibumpSeed || spec.signPattern[h] == BlockSign::SignChanging) {
      shape = sigma_seed(prof, d, groups[h], seed.R);
    } else {
      shape = bump_seed(prof, d, seed);
    }
    const auto& t = mu[h].minimizer;
    for (int i = m.blockBegin(h); i < m.blockEnd(h); ++i) {
      const double amp = t.empty() ? 1.0 : std::abs(t[i - m.blockBegin(h)]);
      u.comps[i] = shape;
      for (double& v : u.comps[i]) v *= (amp > 0 ? amp : 1.0);
    }
  }
  return symmetrized(spec, groups, std::move(u));
}

std::vector<std::string> banners_for(const SolveSpec& spec, const std::vector<BlockSymmetry>& groups) {
  std::vector<std::string> out;
  const int N = spec.ctx.domain->measureDim();
  bool surrogate = N < 4;
  for (const auto& g : groups)
    if (g.group.finiteSurrogate() || g.group.kind() == GroupKind::Dihedral) surrogate = true;
  if (surrogate) out.push_back("algorithmic validation outside the theorem's hypotheses");
  if (N == 5 && spec.ctx.matrix.blockCount() >= 2)
    out.push_back("N = 5 with q >= 2 is excluded by the existence theorem; results carry no theoretical backing");
  return out;
}

CouplingMatrix restrict_to_block(const CouplingMatrix& m, int h) {
  CouplingMatrix r;
  r.beta = m.blockMatrix(h);
  r.p = m.p;
  r.dimN = m.dimN;
  r.blockEnds = {m.blockSize(h)};
  r.signs = {m.signs.empty() ? BlockSign::Positive : m.signs[h]};
  return r;
}

double total_h1(const Domain& d, const FieldVector& u) {
  double s = 0;
  for (const auto& c : u.comps) s += d.h1_norm_sq(c);
  return s;
}

std::string trace_tail(const std::vector<TracePoint>& trace) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t from = trace.size() > 12 ? trace.size() - 12 : 0;
  for (std::size_t i = from; i < trace.size(); ++i)
    os << "\n  iter " << trace[i].iter << " energy " << trace[i].energy << " grad " << trace[i].gradNorm << " alpha "
       << trace[i].alpha;
  return os.str();
}

}  // namespace

std::vector<ComponentSign> sign_report(const FieldVector& f) {
  std::vector<ComponentSign> out;
  const auto& d = *f.domain;
  for (const auto& u : f.comps) {
    ComponentSign cs;
    double mx = 0;
    bool first = true;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!d.active(k)) continue;
      if (first) {
        cs.min = cs.max = u[k];
        first = false;
      }
      cs.min = std::min(cs.min, u[k]);
      cs.max = std::max(cs.max, u[k]);
      mx = std::max(mx, std::abs(u[k]));
    }
    const double pos = kPosFraction * mx, floor = kFloorFraction * mx;
    if (mx > 0 && cs.min > -floor && cs.max > pos)
      cs.cls = SignClass::Positive;
    else if (mx > 0 && cs.min < -pos && cs.max > pos)
      cs.cls = SignClass::SignChanging;
    else
      cs.cls = SignClass::Indeterminate;

    if (d.kind() != DomainKind::Radial && mx > 0) {
      // Shell means on bins of width h, interpolated linearly in r between bin centroids, then the
      // weighted spread of u about that radial profile.
      const double h = d.spacing();
      std::vector<double> mass, sumU, sumR;
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!d.active(k)) continue;
        const auto b = static_cast<std::size_t>(d.nodeRadius(k) / h);
        if (b >= mass.size()) {
          mass.resize(b + 1, 0.0);
          sumU.resize(b + 1, 0.0);
          sumR.resize(b + 1, 0.0);
        }
        mass[b] += d.weights()[k];
        sumU[b] += d.weights()[k] * u[k];
        sumR[b] += d.weights()[k] * d.nodeRadius(k);
      }
      std::vector<double> rc, uc;
      for (std::size_t b = 0; b < mass.size(); ++b)
        if (mass[b] > 0) {
          rc.push_back(sumR[b] / mass[b]);
          uc.push_back(sumU[b] / mass[b]);
        }
      auto radialMean = [&](double r) {
        if (rc.size() == 1 || r <= rc.front()) return uc.front();
        if (r >= rc.back()) return uc.back();
        const auto it = std::upper_bound(rc.begin(), rc.end(), r);
        const std::size_t b = it - rc.begin();
        const double t = (r - rc[b - 1]) / (rc[b] - rc[b - 1]);
        return (1 - t) * uc[b - 1] + t * uc[b];
      };
      double spread = 0, total = 0;
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!d.active(k)) continue;
        const double dev = u[k] - radialMean(d.nodeRadius(k));
        spread += d.weights()[k] * dev * dev;
        total += d.weights()[k] * u[k] * u[k];
      }
      cs.nonradiality = total > 0 ? std::sqrt(spread / total) : 0.0;
    }
    out.push_back(cs);
  }
  return out;
}

BoundReport verify_bounds(const SolveResult& result, const std::vector<MuResult>& mu, double normOmegaSq,
                          const std::vector<BlockSign>& signPattern, double lowerBoundSlack) {
  BoundReport rep;
  const int q = static_cast<int>(signPattern.size());
  if (static_cast<int>(mu.size()) != q || static_cast<int>(result.blockNormSq.size()) != q)
    throw ConfigError("verify_bounds: mu, block norms and sign pattern must have one entry per block");
  const double w2 = result.normSqTotal;
  for (int h = 0; h < q; ++h) {
    if (!(result.blockNormSq[h] > 1e-8 * std::max(w2, 1e-300))) {
      rep.nontrivial = false;
      rep.message = "block-wise nontriviality violated: block " + std::to_string(h + 1) + " vanished";
      return rep;
    }
  }
  auto add = [&](std::string name, double target, double margin, bool pass) {
    rep.checks.push_back({std::move(name), target, w2, margin, pass});
  };
  if (q == 1) {
    const double ref = mu[0].mu * normOmegaSq;
    if (signPattern[0] == BlockSign::Positive) {
      const double rel = std::abs(w2 - ref) / ref;
      add("||w||^2 = mu_1 ||omega||^2", ref, 1e-3 - rel, rel < 1e-3);
    } else {
      add("||w||^2 > 2 mu_1 ||omega||^2", 2 * ref, w2 - 2 * ref, w2 > 2 * ref);
      add("||w||^2 < 10 mu_1 ||omega||^2", 10 * ref, 10 * ref - w2, w2 < 10 * ref);
    }
    return rep;
  }
  double lower = 0;
  for (int h = 0; h < q; ++h) lower += (signPattern[h] == BlockSign::Positive ? 1.0 : 2.0) * mu[h].mu * normOmegaSq;
  add("||w||^2 > sum_{Q+} mu_h ||omega||^2 + 2 sum_{Q-} mu_k ||omega||^2", lower, w2 - lower,
      w2 > lower - lowerBoundSlack * lower);
  if (q == 2) {
    const double m1 = mu[0].mu, m2 = mu[1].mu;
    double cap;
    std::string name;
    if (signPattern[0] == BlockSign::Positive && signPattern[1] == BlockSign::Positive) {
      cap = std::min(m2 + 6 * m1, m1 + 6 * m2) * normOmegaSq;
      name = "||w||^2 < min_{h != k} (mu_k + 6 mu_h) ||omega||^2";
    } else if (signPattern[0] == BlockSign::SignChanging && signPattern[1] == BlockSign::SignChanging) {
      cap = 12 * (m1 + m2) * normOmegaSq;
      name = "||w||^2 < 12 (mu_1 + mu_2) ||omega||^2";
    } else {
      const bool firstPos = signPattern[0] == BlockSign::Positive;
      const double mk = firstPos ? m1 : m2, mh = firstPos ? m2 : m1;
      cap = (mk + 12 * mh) * normOmegaSq;
      name = "||w||^2 < (mu_k + 12 mu_h) ||omega||^2, k in Q+, h in Q-";
    }
    add(name, cap, cap - w2, w2 < cap);
  }
  return rep;
}

SolveResult minimize(const SolveSpec& spec) {
  validate(spec);
  const auto groups = effective_groups(spec);
  const auto& ctx = spec.ctx;
  const auto& d = *ctx.domain;
  const int q = ctx.matrix.blockCount();
  const int ell = ctx.matrix.ell();
  auto prof = profile_for(spec);

  SolveResult res;
  res.cBase = prof->cBase;
  res.normOmegaSq = prof->normH1sq;
  res.banners = banners_for(spec, groups);
  MuOptions muOpt;
  muOpt.runOracle = false;
  for (int h = 0; h < q; ++h) res.mu.push_back(compute_mu(ctx.matrix, h, muOpt));

  NehariOptions nopt;
  InitKind kind = spec.init;
  auto start = [&](InitKind k) { return nehari_project(ctx, seed_field(spec, groups, *prof, res.mu, k), nopt); };
  ProjectionResult cur;
  try {
    cur = start(kind);
  } catch (const ProjectionInfeasible& e) {
    if (kind == InitKind::MultibumpSeed) throw;
    kind = InitKind::MultibumpSeed;
    res.reseeds = 1;
    cur = start(kind);
  }

  auto riesz_all = [&](const FieldVector& g) {
    FieldVector G = g;
    for (int i = 0; i < ell; ++i) G.comps[i] = d.riesz(g.comps[i]);
    return G;
  };
  auto pairing = [&](const FieldVector& a, const FieldVector& b) {
    double s = 0;
    for (int i = 0; i < ell; ++i) s += d.inner(a.comps[i], b.comps[i]);
    return s;
  };

  FieldVector g = gradient(ctx, cur.field);
  FieldVector G = riesz_all(g);
  double gg = pairing(g, G);
  double J = cur.report.energy;
  double alpha = 1.0;
  int nonMonotone = 0, stalled = 0;
  res.equivarianceResidual = equivariance_residual(spec, groups, cur.field);

  int it = 0;
  for (;; ++it) {
    const double unorm = std::sqrt(std::max(total_h1(d, cur.field), 1e-300));
    res.gradNorm = std::sqrt(std::max(gg, 0.0)) / unorm;
    res.trace.push_back({it, J, res.gradNorm, alpha});
    if (res.gradNorm < spec.tolGrad) {
      res.converged = true;
      res.stopReason = "gradient tolerance";
      break;
    }
    if (it >= spec.maxIters) {
      res.stopReason = "iteration limit";
      break;
    }
    if (stalled >= spec.maxStalled) {
      res.stopReason = "stalled at roundoff";
      break;
    }

    double a = alpha;
    bool accepted = false, any = false;
    ProjectionResult trial, fallback;
    for (int ls = 0; ls < 40; ++ls, a *= 0.5) {
      FieldVector v = cur.field;
      for (int i = 0; i < ell; ++i)
        for (std::size_t k = 0; k < d.size(); ++k) v.comps[i][k] -= a * G.comps[i][k];
      try {
        trial = nehari_project(ctx, symmetrized(spec, groups, std::move(v)), nopt);
      } catch (const ProjectionInfeasible&) {
        continue;
      }
      any = true;
      fallback = trial;
      if (trial.report.energy <= J - spec.armijo * a * gg) {
        accepted = true;
        break;
      }
    }
    if (!any) {
      if (res.reseeds > 0)
        throw NumericalError("solver: positivity condition lost along every trial step after reseeding" +
                             trace_tail(res.trace));
      res.reseeds = 1;
      kind = InitKind::MultibumpSeed;
      cur = start(kind);
      g = gradient(ctx, cur.field);
      G = riesz_all(g);
      gg = pairing(g, G);
      J = cur.report.energy;
      alpha = 1.0;
      continue;
    }
    if (!accepted) {
      trial = fallback;
      const double dJ = trial.report.energy - J;
      if (dJ > 1e-14 * std::abs(J)) {
        if (++nonMonotone > spec.maxNonMonotone)
          throw NumericalError("solver: energy failed to decrease on " + std::to_string(nonMonotone) +
                               " consecutive steps" + trace_tail(res.trace));
      } else {
        nonMonotone = 0;
      }
    } else {
      nonMonotone = 0;
    }
    // Decreases at the level of rounding in J carry no information.
    if (J - trial.report.energy <= 4 * std::numeric_limits<double>::epsilon() * std::abs(J))
      ++stalled;
    else
      stalled = 0;

    FieldVector gNew = gradient(ctx, trial.field);
    FieldVector GNew = riesz_all(gNew);
    double sy = 0, ss = 0;
    for (int i = 0; i < ell; ++i) {
      std::vector<double> s(d.size()), y(d.size());
      for (std::size_t k = 0; k < d.size(); ++k) {
        s[k] = trial.field.comps[i][k] - cur.field.comps[i][k];
        y[k] = gNew.comps[i][k] - g.comps[i][k];
      }
      sy += d.inner(s, y);
      ss += d.h1_norm_sq(s);
    }
    alpha = sy > 0 ? std::clamp(ss / sy, spec.alphaMin, spec.alphaMax) : 1.0;

    cur = std::move(trial);
    g = std::move(gNew);
    G = std::move(GNew);
    gg = pairing(g, G);
    J = cur.report.energy;
    res.equivarianceResidual = std::max(res.equivarianceResidual, equivariance_residual(spec, groups, cur.field));
  }

  res.iterations = it;
  res.field = cur.field;
  res.field.signPattern = spec.signPattern;
  const auto rep = nehari_report(ctx, cur.field);
  res.energy = rep.energy;
  res.normSqTotal = rep.normSqTotal;
  res.nehariResiduals = rep.relativeResiduals;
  res.blockNormSq = rep.blockNormSq;
  res.identityGap = rep.identityGap;
  res.signReport = sign_report(res.field);

  if (spec.verifyBounds) {
    res.bounds = verify_bounds(res, res.mu, res.normOmegaSq, spec.signPattern);
    if (q >= 2 && spec.blockLevels && res.bounds.nontrivial) {
      double sum = 0;
      for (int h = 0; h < q; ++h) {
        SolveSpec sub = spec;
        sub.ctx.matrix = restrict_to_block(ctx.matrix, h);
        sub.ctx.groupData = {groups[h]};
        sub.signPattern = {spec.signPattern[h]};
        sub.seeds = spec.seeds.empty() ? std::vector<BlockSeed>{} : std::vector<BlockSeed>{spec.seeds[h]};
        sub.profile = prof;
        sub.blockLevels = false;
        sub.verifyBounds = false;
        const double level = minimize(sub).energy;
        res.blockLevels.push_back(level);
        sum += level;
      }
      const double target = sum * (1 - 1e-3);
      res.bounds.checks.push_back(
          {"J >= sum of independent block levels (1e-3 relative slack)", target, res.energy, res.energy - target,
           res.energy >= target});
    }
  }
  return res;
}

SphiResult compute_Sphi(const RadialProfile& prof, const std::vector<BlockSymmetry>& groups, DomainPtr domain,
                        const SolveSpec& base) {
  SphiResult out;
  out.value = std::numeric_limits<double>::infinity();
  for (const auto& bs : groups) {
    double S;
    if (!bs.phi.isTheta) {
      S = Sphi_trivial(prof);
      out.provenance.push_back("closed form ||omega||^{2(p-1)/p}");
    } else {
      SolveSpec spec = base;
      spec.ctx = EnergyContext{};
      spec.ctx.matrix.beta = Eigen::MatrixXd::Ones(1, 1);
      spec.ctx.matrix.p = prof.p;
      spec.ctx.matrix.dimN = prof.N;
      spec.ctx.matrix.blockEnds = {1};
      spec.ctx.matrix.signs = {BlockSign::SignChanging};
      spec.ctx.domain = domain;
      spec.ctx.groupData = {bs};
      spec.signPattern = {BlockSign::SignChanging};
      if (spec.seeds.size() != 1) spec.seeds.clear();
      spec.profile = nullptr;
      spec.blockLevels = false;
      spec.verifyBounds = false;
      const auto r = minimize(spec);
      S = Sphi_from_level(r.energy, prof.p);
      std::ostringstream os;
      os << "equivariant minimization on the grid (level " << r.energy / prof.cBase << " c, "
         << (r.converged ? "converged" : r.stopReason) << ")";
      out.provenance.push_back(os.str());
    }
    out.perBlock.push_back(S);
    out.value = std::min(out.value, S);
  }
  return out;
}

std::vector<double> block_peak(const FieldVector& f, int begin, int end) {
  const auto& d = *f.domain;
  const int n = d.gridDim();
  std::vector<double> norm(d.size(), 0.0);
  double mx = 0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!d.active(k)) continue;
    double s = 0;
    for (int i = begin; i < end; ++i) s += f.comps[i][k] * f.comps[i][k];
    norm[k] = std::sqrt(s);
    mx = std::max(mx, norm[k]);
  }
  std::vector<double> best;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!d.active(k) || norm[k] < mx * (1 - 1e-9)) continue;
    auto x = d.node(k);
    std::vector<double> pt(x.begin(), x.begin() + n);
    if (best.empty() || std::lexicographical_compare(best.begin(), best.end(), pt.begin(), pt.end())) best = pt;
  }
  return best;
}

namespace {

// L^2 distance between fields on two grids, extending each by zero and interpolating the other.
double cross_grid_distance(const Domain& a, const std::vector<double>& ua, const Domain& b,
                           const std::vector<double>& ub) {
  const int n = a.gridDim();
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a.active(k)) continue;
    auto x = a.node(k);
    const double diff = ua[k] - b.interpolate(ub, x.data(), n);
    s += a.weights()[k] * diff * diff;
  }
  // Mass of b outside the support of a.
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!b.active(k)) continue;
    auto x = b.node(k);
    bool inside = true;
    for (int i = 0; i < n; ++i) inside = inside && std::abs(x[i]) <= a.extent();
    if (a.kind() == DomainKind::BallGrid) inside = b.nodeRadius(k) < a.extent();
    if (!inside) s += b.weights()[k] * ub[k] * ub[k];
  }
  return std::sqrt(s);
}

double field_distance(const FieldVector& a, const FieldVector& b) {
  double s = 0;
  for (int i = 0; i < a.ell(); ++i) {
    const double di = cross_grid_distance(*a.domain, a.comps[i], *b.domain, b.comps[i]);
    s += di * di;
  }
  return std::sqrt(s);
}

double norm_of(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

PerturbationRun epsilon_sweep(const SweepSpec& spec) {
  spec.matrix.checkStructure();
  const int q = spec.matrix.blockCount();
  if (static_cast<int>(spec.signPattern.size()) != q) throw ConfigError("sweep: sign pattern size mismatch");
  if (spec.epsilons.size() < 2) throw ConfigError("sweep: at least two epsilons required");
  for (std::size_t i = 0; i < spec.epsilons.size(); ++i) {
    if (!(spec.epsilons[i] > 0)) throw ConfigError("sweep: epsilons must be positive");
    if (i > 0 && !(spec.epsilons[i] < spec.epsilons[i - 1])) throw ConfigError("sweep: epsilons must decrease");
  }
  if (spec.mode == SweepMode::SingleBlock && q != 1) throw ConfigError("sweep: singleBlock mode needs q = 1");
  if (spec.mode == SweepMode::Decoupling && q < 2) throw ConfigError("sweep: decoupling mode needs q >= 2");

  // The reflection alone leaves the first axis fixed, so blocks may separate along it; the quarter-turn
  // group fixes only the origin.
  const int order = spec.mode == SweepMode::Decoupling ? 1 : 4;
  std::vector<BlockSymmetry> groups;
  for (int h = 0; h < q; ++h)
    groups.push_back({SymmetryGroup::dihedral(spec.signPattern[h] == BlockSign::SignChanging ? std::max(order, 2)
                                                                                           : order),
                      spec.signPattern[h] == BlockSign::SignChanging ? SignHomomorphism::theta()
                                                                     : SignHomomorphism::trivial()});
  auto prof = std::make_shared<const RadialProfile>(solve_ground_state(2, spec.matrix.p));

  auto solve_on = [&](DomainPtr dom, double radius) {
    SolveSpec s = spec.solver;
    s.ctx = EnergyContext{};
    s.ctx.matrix = spec.matrix;
    s.ctx.domain = dom;
    s.ctx.groupData = groups;
    s.signPattern = spec.signPattern;
    s.profile = prof;
    s.seeds.assign(q, BlockSeed{});
    for (int h = 0; h < q; ++h) {
      s.seeds[h].R = std::min(s.seeds[h].R, 0.5 * radius);
      if (spec.mode == SweepMode::Decoupling)
        s.seeds[h].centers = {{(h % 2 == 0 ? 1.0 : -1.0) * spec.seedFraction * radius, 0.0}};
    }
    return minimize(s);
  };

  PerturbationRun run;
  run.mode = spec.mode;
  run.points.resize(spec.epsilons.size());
  auto solve_point = [&](std::size_t i) {
    auto& pt = run.points[i];
    pt.eps = spec.epsilons[i];
    const double radius = 1.0 / pt.eps;
    try {
      pt.result = solve_on(Domain::ball_grid(2, radius, spec.spacing), radius);
      pt.ok = true;
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
  };
  const std::size_t batch = spec.threads > 0 ? static_cast<std::size_t>(spec.threads) : spec.epsilons.size();
  SolveResult oracle;
  bool haveOracle = false;
  for (std::size_t start = 0; start < spec.epsilons.size(); start += batch) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = start; i < std::min(start + batch, spec.epsilons.size()); ++i)
      jobs.push_back(std::async(std::launch::async, solve_point, i));
    if (start == 0 && spec.mode == SweepMode::SingleBlock) {
      oracle = solve_on(Domain::full_grid(2, spec.oracleHalfExtent, spec.spacing), spec.oracleHalfExtent);
      haveOracle = true;
    }
    for (auto& j : jobs) j.get();
  }

  const SweepPoint* prev = nullptr;
  for (auto& pt : run.points) {
    if (!pt.ok) continue;
    const auto& f = pt.result.field;
    const double radius = 1.0 / pt.eps;
    double bdry = std::numeric_limits<double>::infinity();
    for (int h = 0; h < q; ++h) {
      pt.peaks.push_back(block_peak(f, spec.matrix.blockBegin(h), spec.matrix.blockEnd(h)));
      bdry = std::min(bdry, radius - norm_of(pt.peaks.back()));
    }
    pt.bdryDistOverEps = bdry;
    if (q >= 2) {
      double sep = std::numeric_limits<double>::infinity();
      for (int h = 0; h < q; ++h)
        for (int k = h + 1; k < q; ++k) {
          std::vector<double> diff(pt.peaks[h].size());
          for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = pt.peaks[h][i] - pt.peaks[k][i];
          sep = std::min(sep, norm_of(diff));
        }
      pt.peakSepOverEps = sep;
      pt.peakSep = sep * pt.eps;
    }
    if (prev) pt.profileDelta = field_distance(f, prev->result.field);
    if (haveOracle) pt.oracleDistance = field_distance(f, oracle.field);
    prev = &pt;
  }

  std::vector<const SweepPoint*> ok;
  for (const auto& pt : run.points)
    if (pt.ok) ok.push_back(&pt);
  if (ok.size() >= 4) {
    const std::size_t n = ok.size();
    run.cauchyDecreasing = ok[n - 3]->profileDelta > ok[n - 2]->profileDelta &&
                           ok[n - 2]->profileDelta > ok[n - 1]->profileDelta;
  }
  if (ok.size() >= 2) {
    run.boundaryGrowth = true;
    for (std::size_t i = 1; i < ok.size(); ++i)
      run.boundaryGrowth = run.boundaryGrowth && ok[i]->bdryDistOverEps > ok[i - 1]->bdryDistOverEps;
    if (q >= 2 && ok.front()->peakSepOverEps > 0)
      run.separationGrowth = ok.back()->peakSepOverEps / ok.front()->peakSepOverEps;
    run.oracleDistance = ok.back()->oracleDistance;
  }
  bool centered = !ok.empty();
  for (const auto* pt : ok)
    for (const auto& z : pt->peaks) centered = centered && norm_of(z) <= 2.0;
  if (q >= 2 && run.separationGrowth >= 2.0 && run.boundaryGrowth)
    run.classification = "decoupling";
  else if (centered && run.cauchyDecreasing)
    run.classification = "persisting";
  else
    run.classification = "inconclusive";
  return run;
}

}  // namespace cnls
