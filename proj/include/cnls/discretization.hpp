#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cnls/coupling.hpp"

namespace cnls {

enum class DomainKind { FullGrid, Radial, BallGrid };
enum class Boundary { DecayZero, DirichletZero };

const char* to_string(DomainKind k);

struct DstCache;

// Uniform computational domain with a discrete H^1 structure.
//
// Box kinds use nodes x_i = (i - (M-1)/2) h per axis with zero ghost values one step past
// the last node, the mass diagonal V = h^n, and the stiffness form
//   a(u, v) = h^n sum over grid edges of (u_b - u_a)(v_b - v_a) / h^2,
// edges to ghosts included. The ball kind keeps the box and zeroes every node with
// |x| >= radius. The radial kind is cell-centered, r_k = (k + 1/2) h, with exact shell
// volumes and a Dirichlet ghost at r = rMax + h/2.
//
// With these choices -Delta_h = V^{-1} A, so <-Delta_h u, u>_V = a(u, u) holds exactly.
class Domain {
 public:
  static std::shared_ptr<const Domain> full_grid(int n, double halfExtent, double spacing);
  static std::shared_ptr<const Domain> ball_grid(int n, double radius, double spacing);
  static std::shared_ptr<const Domain> radial(int N, double rMax, double spacing);

  DomainKind kind() const { return kind_; }
  Boundary boundary() const { return kind_ == DomainKind::BallGrid ? Boundary::DirichletZero : Boundary::DecayZero; }
  // Number of coordinates of a node: n for box kinds, 1 for radial.
  int gridDim() const { return gridDim_; }
  // Dimension of the measure: n for box kinds, N for radial.
  int measureDim() const { return measureDim_; }
  double spacing() const { return h_; }
  double extent() const { return extent_; }  // half-width of the box, ball radius or rMax
  int pointsPerAxis() const { return M_; }
  std::size_t size() const { return weights_.size(); }

  const std::vector<double>& weights() const { return weights_; }
  bool active(std::size_t k) const { return active_[k] != 0; }
  // Node coordinates (radial: the single coordinate r_k).
  std::array<double, 3> node(std::size_t k) const;
  double nodeRadius(std::size_t k) const;
  // Index of the node with the given per-axis indices (box kinds).
  std::size_t index(const std::array<int, 3>& ijk) const;
  std::array<int, 3> axisIndices(std::size_t k) const;
  double axisCoordinate(int i) const { return (i - 0.5 * (M_ - 1)) * h_; }

  double inner(const std::vector<double>& u, const std::vector<double>& v) const;  // L^2(V)
  double stiffness(const std::vector<double>& u, const std::vector<double>& v) const;
  double h1_inner(const std::vector<double>& u, const std::vector<double>& v) const {
    return stiffness(u, v) + inner(u, v);
  }
  double h1_norm_sq(const std::vector<double>& u) const { return h1_inner(u, u); }
  // int |u_i|^p |u_j|^p by nodal quadrature.
  double lp_coupling_integral(const std::vector<double>& ui, const std::vector<double>& uj, double p) const;
  // Delta_h u = -V^{-1} A u; zero at inactive nodes.
  std::vector<double> laplacian(const std::vector<double>& u) const;
  // H^1 Riesz representative: solves (A + V) G = V g.
  std::vector<double> riesz(const std::vector<double>& g) const;

  // Multilinear (radial: linear in r) interpolation; zero outside the domain.
  double interpolate(const std::vector<double>& u, const double* x, int dim) const;
  std::vector<double> zeros() const { return std::vector<double>(size(), 0.0); }
  // Samples f at every active node; f receives a point with gridDim() coordinates.
  template <class F>
  std::vector<double> sample(F&& f) const {
    std::vector<double> u(size(), 0.0);
    for (std::size_t k = 0; k < size(); ++k) {
      if (!active(k)) continue;
      auto x = node(k);
      u[k] = f(x.data());
    }
    return u;
  }

 private:
  Domain() = default;
  void applyStiffness(const std::vector<double>& u, std::vector<double>& out) const;
  std::vector<double> boxRiesz(const std::vector<double>& g) const;

  DomainKind kind_ = DomainKind::FullGrid;
  int gridDim_ = 1;
  int measureDim_ = 1;
  int M_ = 0;
  double h_ = 0.0;
  double extent_ = 0.0;
  std::vector<double> weights_;
  std::vector<char> active_;
  // Radial only: face areas F_k at r = (k + 1) h.
  std::vector<double> faces_;
  std::shared_ptr<DstCache> dst_;
};

using DomainPtr = std::shared_ptr<const Domain>;

// An ell-tuple of nodal fields on one domain.
struct FieldVector {
  DomainPtr domain;
  std::vector<std::vector<double>> comps;
  std::vector<BlockSign> signPattern;

  FieldVector() = default;
  FieldVector(DomainPtr d, int ell) : domain(std::move(d)), comps(ell, domain->zeros()) {}
  int ell() const { return static_cast<int>(comps.size()); }
};

double h1_norm_sq(const std::vector<double>& u, const Domain& d);
double lp_coupling_integral(const std::vector<double>& ui, const std::vector<double>& uj, double p, const Domain& d);
std::vector<double> discrete_laplacian(const std::vector<double>& u, const Domain& d);

// CSV snapshot: node coordinates then one column per component. Header lines start with '#'.
void write_field_csv(std::ostream& os, const FieldVector& f, const std::string& provenance);
// Binary dump: "CNLSFLD1", u64 config hash, i32 gridDim, i32 measureDim, i32 pointsPerAxis,
// f64 spacing, f64 extent, u64 nodes, i32 components, then component-major doubles.
void write_field_binary(std::ostream& os, const FieldVector& f, std::uint64_t configHash);

}  // namespace cnls
