#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cnls/common.hpp"
#include "cnls/coupling.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/symmetry.hpp"

namespace cnls {

// Signed sum of translated ground states, x -> sum_a s_a omega(|x - c_a|).
struct MultiBumpConfig {
  SymmetryGroup group = SymmetryGroup::trivial(1);
  SignHomomorphism phi;
  std::vector<double> anchor;  // zeta, unit norm
  double R = 1.0;
  std::vector<std::vector<double>> centers;  // R g zeta over the orbit
  std::vector<int> signs;                    // phi(g)
  double tScale = 0.0;                       // Nehari scalar, filled by energy evaluations

  int dimN() const { return group.dimN(); }
  int size() const { return static_cast<int>(centers.size()); }
  double minSeparation() const;
};

// (1,0,...) for theta; (1/sqrt2, 0, 1/sqrt2, 0, ...) for trivial phi when N >= 4, (1, 0, ...) below.
std::vector<double> default_anchor(int N, const SignHomomorphism& phi);
// Orbit of zeta scaled by R. Throws ConfigError when phi is -1 on the stabilizer of zeta (the sum vanishes).
MultiBumpConfig make_multibump(const SymmetryGroup& g, const SignHomomorphism& phi, double R,
                               std::vector<double> anchor = {});
// Explicit centers and signs without group structure.
MultiBumpConfig make_bumps(int N, std::vector<std::vector<double>> centers, std::vector<int> signs);

PointFunction build_sigma(const RadialProfile& prof, const MultiBumpConfig& cfg);

// Pairwise H^1 expansion ||sigma||^2 = sum_{a,b} s_a s_b Psi(|c_a - c_b|). The diagonal uses Psi(0).
struct H1Expansion {
  double total = 0.0;
  double diagonal = 0.0;
  double offDiagonal = 0.0;
  double nearestNeighbor = 0.0;  // ordered pairs at the minimal separation only
  int nearestPairs = 0;
};
H1Expansion h1_expansion(const RadialProfile& prof, const MultiBumpConfig& cfg);
double h1_norm_multibump(const RadialProfile& prof, const MultiBumpConfig& cfg);

enum class LpMethod { Auto, Grid, MonteCarlo };
const char* to_string(LpMethod m);

struct LpOptions {
  LpMethod method = LpMethod::Auto;
  long long samples = 10000000;  // Monte Carlo total over all strata
  unsigned long long seed = 20240601ULL;
  double relTolerance = 0.05;  // flag when stderr(excess) / |excess| exceeds this
  double panel = 1.0;
  int order = 8;
  double margin = 8.0;
};

// int |sigma|^{2p} = n Psi(0) + excess, with the excess int (|sigma|^{2p} - sum omega_a^{2p}) integrated
// directly so that exponentially small overlaps are resolved.
struct LpEstimate {
  double value = 0.0;
  double stderror = 0.0;
  double excess = 0.0;
  double excessStderr = 0.0;
  LpMethod method = LpMethod::Grid;
  int effectiveDim = 0;
  long long samples = 0;
  bool flagged = false;
};

// Dimension of span(centers) plus one when a perpendicular radius remains.
int effective_dimension(const MultiBumpConfig& cfg);
LpEstimate lp_norm_multibump(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt = {});
// Plain tensor quadrature of |sigma|^{2p} itself (no excess splitting); grid-capable configs only.
double lp_norm_direct_grid(const RadialProfile& prof, const MultiBumpConfig& cfg, const LpOptions& opt = {});
// int |sigma_A|^p |sigma_B|^p. Grid quadrature when the joint centers allow it, otherwise the pairwise
// sum of int omega^p(x) omega^p(x - c_a + c_b) over bump pairs.
struct CrossIntegral {
  double value = 0.0;
  std::string method;
};
CrossIntegral cross_integral(const RadialProfile& prof, const MultiBumpConfig& A, const MultiBumpConfig& B,
                             const LpOptions& opt = {});

struct GapFit {
  double rate = 0.0;      // fit of log(gap R^{(N-1)/2}) against R
  double C0 = 0.0;
  double rawRate = 0.0;   // fit of log(gap) against R
  double residual = 0.0;  // rms of the compensated fit
  int points = 0;
  bool positive = false;
  bool decreasing = false;
  bool logConvex = false;
};

struct BumpEnergyCurve {
  std::vector<double> Rvalues;
  std::vector<double> energies;
  std::vector<double> gaps;
  std::vector<double> gapStderr;
  std::vector<double> tScales;
  std::vector<LpEstimate> lp;
  double limit = 0.0;  // |orbit| c
  double chord = 0.0;  // d = |zeta - e^{2 pi i/m} zeta|
  int bumps = 0;
  double fitLo = 8.0, fitHi = 16.0;
  GapFit fit;
};

// J(sigma_R) = (p-1)/(2p) (||sigma||^2 / |sigma|_{2p}^2)^{p/(p-1)} along Rlist, and the gap law fit.
BumpEnergyCurve sigma_energy_curve(const RadialProfile& prof, const SymmetryGroup& g, const SignHomomorphism& phi,
                                   const std::vector<double>& Rlist, const LpOptions& opt = {}, double fitLo = 8.0,
                                   double fitHi = 16.0);

struct TwoBlockOptions {
  double R = 20.0;         // ring scale
  double centralR = 8.0;   // scale of the sign-changing central bump family
  int ringOrder = 6;
  int maxRetries = 3;
  double growth = 1.25;
  LpOptions lp;
  MuOptions mu;
};

struct TwoBlockLayout {
  int centralBlock = 0;
  int ringBlock = 1;
  double energy = 0.0;  // upper estimate of the two-block level
  double cap = 0.0;
  double margin = 0.0;  // cap - energy
  std::vector<double> s;
  double crossIntegral = 0.0;
  std::string crossMethod;
  int centralBumps = 0, ringBumps = 0;
};

struct TwoBlockResult {
  double energy = 0.0;  // best layout
  double cap = 0.0;
  double margin = 0.0;
  std::string capName;
  double lowerBound = 0.0;  // sum_{Q+} mu c + 2 sum_{Q-} mu c
  bool belowCap = false;
  bool aboveLower = false;
  double R = 0.0;
  std::vector<double> mu;
  double cBase = 0.0;
  bool planar = false;
  std::vector<TwoBlockLayout> layouts;
  std::string notes;
};

// Block 1 sits at the origin (omega, or the sign-changing family at centralR), block 2 on a ring of
// ringOrder (trivial phi) or 2 ringOrder (theta) bumps at scale R, amplitudes from the mu-minimizers.
// N < 4 uses the planar ring of ringOrder bumps and supports the both-positive pattern only.
TwoBlockResult two_block_upper_bound(const RadialProfile& prof, const CouplingMatrix& matrix,
                                     const std::vector<BlockSign>& signPattern, const TwoBlockOptions& opt = {});

// Ratio of int |omega|^p |ring_{R + dR}|^p to the same at R, for the positive ring of order m.
struct CrossDecay {
  double R = 0.0, dR = 2.0;
  double X0 = 0.0, X1 = 0.0;
  double ratio = 0.0;
  double target = 0.0;  // e^{-p dR}
  std::string method;
};
CrossDecay cross_term_decay(const RadialProfile& prof, double R, double dR = 2.0, int ringOrder = 6,
                            const LpOptions& opt = {});

}  // namespace cnls
