#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cnls/discretization.hpp"

namespace cnls {

// Gm / GmPrime / Ginfty act on C x C x R^{N-4}; Dihedral(k) is the planar surrogate
// generated by the rotation through 2 pi / k and the reflection x2 -> -x2.
enum class GroupKind { Gm, GmPrime, Ginfty, Trivial, Dihedral };
const char* to_string(GroupKind k);

struct GroupElement {
  Eigen::MatrixXd mat;
  int theta = 1;  // image under the sign homomorphism that kills rotations and flips tau
};

class SymmetryGroup {
 public:
  static SymmetryGroup Gm(int N, int m);
  static SymmetryGroup GmPrime(int N, int m);
  // The circle is replaced by K_surrogate (default 64); reports call this a finite surrogate.
  static SymmetryGroup Ginfty(int N, int surrogate = 64);
  static SymmetryGroup trivial(int N);
  static SymmetryGroup dihedral(int k);

  GroupKind kind() const { return kind_; }
  int dimN() const { return N_; }
  int m() const { return m_; }
  const std::vector<GroupElement>& generators() const { return generators_; }
  // Finite part of the group, closed from the generators; identity first.
  const std::vector<GroupElement>& elements() const { return elements_; }
  // True when a continuous factor acts beyond the enumerated elements: O(N-4) with N >= 6,
  // or the circle of G_infty.
  bool hasContinuousFactor() const { return continuousY_ || kind_ == GroupKind::Ginfty; }
  bool continuousOnY() const { return continuousY_; }
  bool finiteSurrogate() const { return kind_ == GroupKind::Ginfty; }
  bool thetaDefined() const { return kind_ != GroupKind::Trivial; }
  std::string describe() const;

 private:
  void close();
  GroupKind kind_ = GroupKind::Trivial;
  int N_ = 1;
  int m_ = 1;
  bool continuousY_ = false;
  std::vector<GroupElement> generators_;
  std::vector<GroupElement> elements_;
};

// Either the trivial homomorphism or theta (rotations and O(N-4) to +1, tau or the reflection to -1).
struct SignHomomorphism {
  bool isTheta = false;
  int operator()(const GroupElement& g) const { return isTheta ? g.theta : 1; }
  static SignHomomorphism trivial() { return {false}; }
  static SignHomomorphism theta() { return {true}; }
};

struct OrbitData {
  std::vector<double> point;
  bool infinite = false;
  std::vector<std::vector<double>> orbitPoints;
  std::vector<int> orbitSigns;                // theta of the element that produced each point
  std::vector<int> stabilizer;                // indices into SymmetryGroup::elements()
  std::size_t orbitSize() const { return orbitPoints.size(); }
};

OrbitData orbit(const SymmetryGroup& g, const std::vector<double>& xi);
// Orthonormal basis of Fix(G) as columns.
Eigen::MatrixXd fixed_point_space(const SymmetryGroup& g);

// A point whose ker(phi)-orbit is strictly smaller than its G-orbit; empty if phi is trivial.
std::vector<double> a_phi_witness(const SymmetryGroup& g, const SignHomomorphism& phi);

// Chord |zeta - e^{2 pi i/m} zeta| = 2 sin(pi/m) |zeta| for zeta in the C x C part.
double chord_length(int m, double zetaNorm);

// (1/|G|) sum_g phi(g) u(g x) on the grid. Exact node permutations are used when every element
// maps nodes to nodes; otherwise multilinear interpolation (zero outside the domain).
// Radial domains: identity for trivial phi, zero for theta.
std::vector<double> symmetrize(const Domain& d, const std::vector<double>& u, const SymmetryGroup& g,
                               const SignHomomorphism& phi);
double check_equivariance(const Domain& d, const std::vector<double>& u, const SymmetryGroup& g,
                          const SignHomomorphism& phi);

using PointFunction = std::function<double(const std::vector<double>&)>;
PointFunction symmetrize_function(PointFunction f, const SymmetryGroup& g, const SignHomomorphism& phi);
double check_equivariance_function(const PointFunction& f, const SymmetryGroup& g, const SignHomomorphism& phi,
                                   const std::vector<std::vector<double>>& points);

// Whether the grid of d carries the action of g (gridDim == dimN for box kinds).
bool group_acts_on(const Domain& d, const SymmetryGroup& g);

}  // namespace cnls
