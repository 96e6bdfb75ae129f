#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cnls/coupling.hpp"
#include "cnls/discretization.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/nehari.hpp"

namespace cnls {

enum class InitKind { MuScaledGroundState, MultibumpSeed, Random };
const char* to_string(InitKind k);
InitKind init_from_string(const std::string& s);

// Where a block's seed bumps sit. Empty centers mean the origin (a fixed point of every group).
struct BlockSeed {
  std::vector<std::vector<double>> centers;
  double R = 10.0;  // scale of sigma-type seeds
};

struct SolveSpec {
  EnergyContext ctx;
  std::vector<BlockSign> signPattern;  // Q+ blocks carry trivial phi, Q- blocks theta
  InitKind init = InitKind::MuScaledGroundState;
  std::vector<BlockSeed> seeds;  // per block, optional
  int maxIters = 3000;
  double tolGrad = 1e-7;  // on ||G||_{H^1} / ||u||_{H^1}
  double armijo = 1e-4;
  double alphaMin = 1e-3;
  double alphaMax = 1000.0;
  int maxNonMonotone = 10;
  int maxStalled = 15;
  unsigned long long seed = 1;
  std::shared_ptr<const RadialProfile> profile;  // solved on demand when absent
  bool blockLevels = true;  // independent block solves for the lower-bound check when q >= 2
  bool verifyBounds = true;
};

enum class SignClass { Positive, SignChanging, Indeterminate };
const char* to_string(SignClass c);

struct ComponentSign {
  SignClass cls = SignClass::Indeterminate;
  double min = 0.0;
  double max = 0.0;
  double nonradiality = 0.0;  // relative L^2 spread about radial shell means
};
std::vector<ComponentSign> sign_report(const FieldVector& f);

struct BoundCheck {
  std::string name;
  double target = 0.0;
  double achieved = 0.0;
  double margin = 0.0;  // positive when the bound holds
  bool pass = false;
};

struct BoundReport {
  bool nontrivial = true;
  std::string message;
  std::vector<BoundCheck> checks;
  bool pass() const;
};

struct TracePoint {
  int iter = 0;
  double energy = 0.0;
  double gradNorm = 0.0;
  double alpha = 0.0;
};

struct SolveResult {
  FieldVector field;
  double energy = 0.0;
  double normSqTotal = 0.0;
  std::vector<double> nehariResiduals;
  std::vector<double> blockNormSq;
  double identityGap = 0.0;
  std::vector<ComponentSign> signReport;
  BoundReport bounds;
  std::vector<TracePoint> trace;
  int iterations = 0;
  bool converged = false;
  std::string stopReason;
  double gradNorm = 0.0;
  double equivarianceResidual = 0.0;  // maximum over all iterates
  int reseeds = 0;
  std::vector<double> blockLevels;  // independent block minima (q >= 2)
  std::vector<MuResult> mu;
  double cBase = 0.0;
  double normOmegaSq = 0.0;
  std::vector<std::string> banners;
};

SolveResult minimize(const SolveSpec& spec);

// Theorem-style bounds on ||w||^2 relative to ||omega||^2, by sign pattern and block count.
BoundReport verify_bounds(const SolveResult& result, const std::vector<MuResult>& mu, double normOmegaSq,
                          const std::vector<BlockSign>& signPattern, double lowerBoundSlack = 0.0);

// S^phi as the minimum over blocks: closed form for trivial phi, equivariant minimization for theta.
// A single entry in base.seeds positions the sign-changing seed.
struct SphiResult {
  double value = 0.0;
  std::vector<double> perBlock;
  std::vector<std::string> provenance;
};
SphiResult compute_Sphi(const RadialProfile& prof, const std::vector<BlockSymmetry>& groups, DomainPtr domain,
                        const SolveSpec& base = {});

// Representative of the maximizers of |u_h| (block Euclidean norm): largest first coordinate,
// ties broken lexicographically.
std::vector<double> block_peak(const FieldVector& f, int begin, int end);

enum class SweepMode { Decoupling, Persisting, SingleBlock };
const char* to_string(SweepMode m);
SweepMode sweep_mode_from_string(const std::string& s);

struct SweepSpec {
  CouplingMatrix matrix;
  std::vector<BlockSign> signPattern;
  std::vector<double> epsilons;  // decreasing
  SweepMode mode = SweepMode::Persisting;
  double spacing = 0.15;          // node spacing on the dilated ball of radius 1/eps
  double seedFraction = 0.5;      // decoupling seeds at +-seedFraction/eps on the first axis
  SolveSpec solver;               // descent parameters; ctx and seeds are filled per epsilon
  double oracleHalfExtent = 12.0; // whole-space oracle box for the single-block mode
  int threads = 0;                // concurrent solves; 0 runs every epsilon at once
};

struct SweepPoint {
  double eps = 0.0;
  bool ok = false;
  std::string error;
  SolveResult result;
  std::vector<std::vector<double>> peaks;  // per block, dilated coordinates
  double peakSep = 0.0;                    // min_{h != k} |zeta_h - zeta_k| in original units
  double peakSepOverEps = 0.0;
  double bdryDistOverEps = 0.0;            // min_h dist(zeta_h, boundary) / eps
  double profileDelta = 0.0;               // L^2 distance to the previous rescaled profile
  double oracleDistance = 0.0;             // single-block mode: L^2 distance to the whole-space solve
};

struct PerturbationRun {
  SweepMode mode = SweepMode::Persisting;
  std::vector<SweepPoint> points;
  std::string classification;  // decoupling | persisting | inconclusive
  bool cauchyDecreasing = false;
  double separationGrowth = 0.0;  // last / first peakSepOverEps
  bool boundaryGrowth = false;
  double oracleDistance = 0.0;  // at the smallest eps
};

PerturbationRun epsilon_sweep(const SweepSpec& spec);

}  // namespace cnls
