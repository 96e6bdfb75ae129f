#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cnls/common.hpp"
#include "cnls/coupling.hpp"
#include "cnls/discretization.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/symmetry.hpp"

namespace cnls {

struct BlockSymmetry {
  SymmetryGroup group = SymmetryGroup::trivial(1);
  SignHomomorphism phi;
};

struct EnergyConstants {
  double Sphi = 0.0;
  double dphi = 0.0;
  double Cphi = 0.0;
  bool haveS = false;
  bool haveD = false;
  std::string provenance;  // how S and d were obtained
};

// C_phi = (p d / ((p-1) S^{p/(p-1)}))^p.
double compute_Cphi(double dphi, double Sphi, double p);

struct EnergyContext {
  CouplingMatrix matrix;
  DomainPtr domain;
  std::vector<BlockSymmetry> groupData;  // one per block; empty means no constraint
  EnergyConstants constants;

  void setConstants(double Sphi, double dphi, const std::string& provenance);
};

struct BlockQuantities {
  std::vector<double> a;  // a_h = sum_{i in I_h} ||u_i||^2
  Eigen::MatrixXd A;      // A_hk = sum_{I_h x I_k} beta_ij int |u_i|^p |u_j|^p
  std::vector<double> normSq;  // per component
};

BlockQuantities block_quantities(const EnergyContext& ctx, const FieldVector& u);

struct NehariReport {
  std::vector<double> residuals;          // a_h - sum_k A_hk, the derivative of J along block h's ray
  std::vector<double> relativeResiduals;  // residuals[h] / a_h; membership is decided on these
  std::vector<double> blockNormSq;
  double energy = 0.0;
  double normSqTotal = 0.0;
  double identityGap = 0.0;  // |J - (p-1)/(2p) ||u||^2|
  bool member = false;
};

double energy(const EnergyContext& ctx, const FieldVector& u);
// L^2(V) gradient: -Delta_h u_i + u_i - sum_j beta_ij |u_j|^p |u_i|^{p-2} u_i.
FieldVector gradient(const EnergyContext& ctx, const FieldVector& u);
NehariReport nehari_report(const EnergyContext& ctx, const FieldVector& u, double tol = 1e-8);

// Raised when the positivity condition fails for a block, so no scaling reaches the Nehari set.
class ProjectionInfeasible : public NumericalError {
 public:
  ProjectionInfeasible(int block, const std::string& what) : NumericalError(what), block_(block) {}
  int block() const { return block_; }

 private:
  int block_;
};

struct NehariOptions {
  double tol = 1e-10;
  int maxIterations = 200;
  bool verifyMax = false;
  int maxSamples = 100;
  double maxPerturbation = 0.05;
  unsigned long long seed = 2024;
};

struct ProjectionResult {
  FieldVector field;
  std::vector<double> s;
  NehariReport report;
  int iterations = 0;
  bool maxVerified = false;
};

// Unique s in (0, inf)^q with s_h^2 a_h = sum_k s_h^p s_k^p A_hk; damped Newton in log s.
std::vector<double> nehari_scalings(const std::vector<double>& a, const Eigen::MatrixXd& A, double p,
                                    const NehariOptions& opt = {}, int* iterations = nullptr);
// J(s u) from the block quantities of u.
double scaled_energy(const std::vector<double>& a, const Eigen::MatrixXd& A, double p, const std::vector<double>& s);

ProjectionResult nehari_project(const EnergyContext& ctx, const FieldVector& u, const NehariOptions& opt = {});

// Sobolev-type constant of the trivial class, ||omega||^{2(p-1)/p}.
double Sphi_trivial(const RadialProfile& prof);
// Inverse of c = (p-1)/(2p) S^{p/(p-1)}.
double Sphi_from_level(double c, double p);
// Lower bound d0 for block norms on the Nehari set: (S^p / sum_{I_h x I_h} beta_ij^+)^{1/(p-1)}.
double block_norm_lower_bound(const CouplingMatrix& m, int h, double Sphi);

struct DphiBound {
  double value = 0.0;
  double truncationRadius = 0.0;
  std::vector<int> bumpsPerBlock;
  double bumpNormSq = 0.0;  // ||omega chi||^2 of one truncated bump
  double bumpNorm2p = 0.0;  // int |omega chi|^{2p}
  std::string provenance = "upper bound from disjoint truncated ground-state bumps";
};

// Upper bound for d_phi: block h uses bumpsPerBlock[h] disjoint copies of the truncated ground state,
// each family rescaled onto its own Nehari set. The cutoff ramps as cos^2 over [rc - 1, rc].
DphiBound compute_dphi_upper(const RadialProfile& prof, const std::vector<int>& bumpsPerBlock,
                             double truncationRadius = 15.0);

}  // namespace cnls
