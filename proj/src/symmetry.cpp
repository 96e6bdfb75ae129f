#include "cnls/symmetry.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "cnls/common.hpp"

namespace cnls {

namespace {

using Key = std::vector<long long>;

Key key_of(const Eigen::MatrixXd& m) {
  Key k(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) k[i] = std::llround(m.data()[i] * 1e9);
  return k;
}

// Rotation by angle a on both complex coordinates (x1 + i x2, x3 + i x4).
Eigen::MatrixXd complex_rotation(int N, double a) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(N, N);
  const double c = std::cos(a), s = std::sin(a);
  for (int b : {0, 2}) {
    r(b, b) = c;
    r(b, b + 1) = -s;
    r(b + 1, b) = s;
    r(b + 1, b + 1) = c;
  }
  return r;
}

Eigen::MatrixXd tau(int N) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(N, N);
  t(0, 2) = t(2, 0) = t(1, 3) = t(3, 1) = 1;
  for (int i = 4; i < N; ++i) t(i, i) = 1;
  return t;
}

void require_complex_part(int N) {
  if (N < 4) throw ConfigError("groups acting on C x C x R^{N-4} need N >= 4");
}

bool is_signed_permutation(const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    int nz = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (std::abs(v) < 1e-12) continue;
      if (std::abs(std::abs(v) - 1) > 1e-12) return false;
      ++nz;
    }
    if (nz != 1) return false;
  }
  return true;
}

double norm_of(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

std::vector<double> apply(const Eigen::MatrixXd& g, const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) y[i] += g(i, j) * x[j];
  return y;
}

}  // namespace

const char* to_string(GroupKind k) {
  switch (k) {
    case GroupKind::Gm:
      return "Gm";
    case GroupKind::GmPrime:
      return "GmPrime";
    case GroupKind::Ginfty:
      return "Ginfty";
    case GroupKind::Trivial:
      return "trivial";
    case GroupKind::Dihedral:
      return "dihedral";
  }
  return "?";
}

void SymmetryGroup::close() {
  const int N = N_;
  elements_.clear();
  std::map<Key, int> seen;
  GroupElement id{Eigen::MatrixXd::Identity(N, N), 1};
  elements_.push_back(id);
  seen[key_of(id.mat)] = 1;
  for (std::size_t head = 0; head < elements_.size(); ++head) {
    for (const auto& gen : generators_) {
      GroupElement prod{gen.mat * elements_[head].mat, gen.theta * elements_[head].theta};
      auto [it, fresh] = seen.emplace(key_of(prod.mat), prod.theta);
      if (!fresh) {
        if (it->second != prod.theta) throw ConfigError("sign assignment is not a homomorphism on " + describe());
        continue;
      }
      elements_.push_back(std::move(prod));
      if (elements_.size() > 100000) throw ConfigError("group closure exceeded 100000 elements");
    }
  }
}

namespace {
void add_y_factor(int N, std::vector<GroupElement>& gens, bool& continuous) {
  // O(1) = {+1, -1} for N = 5; for N >= 6 the coordinate reflections stand in for O(N-4),
  // which has the same (trivial) fixed space, and orbits with y != 0 are flagged infinite.
  for (int i = 4; i < N; ++i) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(N, N);
    r(i, i) = -1;
    gens.push_back({r, 1});
  }
  continuous = N >= 6;
}
}  // namespace

SymmetryGroup SymmetryGroup::Gm(int N, int m) {
  require_complex_part(N);
  if (m < 1) throw ConfigError("group order m must be >= 1");
  SymmetryGroup g;
  g.kind_ = GroupKind::Gm;
  g.N_ = N;
  g.m_ = m;
  g.generators_.push_back({complex_rotation(N, 2 * M_PI / m), 1});
  g.generators_.push_back({tau(N), -1});
  add_y_factor(N, g.generators_, g.continuousY_);
  g.close();
  return g;
}

SymmetryGroup SymmetryGroup::GmPrime(int N, int m) {
  require_complex_part(N);
  if (m < 1) throw ConfigError("group order m must be >= 1");
  SymmetryGroup g;
  g.kind_ = GroupKind::GmPrime;
  g.N_ = N;
  g.m_ = m;
  g.generators_.push_back({complex_rotation(N, 2 * M_PI / m), 1});
  g.generators_.push_back({tau(N), -1});
  g.close();
  return g;
}

SymmetryGroup SymmetryGroup::Ginfty(int N, int surrogate) {
  require_complex_part(N);
  SymmetryGroup g = Gm(N, surrogate);
  g.kind_ = GroupKind::Ginfty;
  return g;
}

SymmetryGroup SymmetryGroup::trivial(int N) {
  if (N < 1) throw ConfigError("dimension must be >= 1");
  SymmetryGroup g;
  g.kind_ = GroupKind::Trivial;
  g.N_ = N;
  g.close();
  return g;
}

SymmetryGroup SymmetryGroup::dihedral(int k) {
  if (k < 1) throw ConfigError("dihedral order must be >= 1");
  SymmetryGroup g;
  g.kind_ = GroupKind::Dihedral;
  g.N_ = 2;
  g.m_ = k;
  if (k > 1) {
    Eigen::MatrixXd r(2, 2);
    const double a = 2 * M_PI / k;
    // Exact entries for quarter turns keep node maps integral.
    const double c = std::abs(std::cos(a)) < 1e-15 ? 0.0 : std::cos(a);
    const double s = std::abs(std::sin(a)) < 1e-15 ? 0.0 : std::sin(a);
    r << c, -s, s, c;
    g.generators_.push_back({r, 1});
  }
  Eigen::MatrixXd f(2, 2);
  f << 1, 0, 0, -1;
  g.generators_.push_back({f, -1});
  g.close();
  return g;
}

std::string SymmetryGroup::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  if (kind_ == GroupKind::Gm || kind_ == GroupKind::GmPrime || kind_ == GroupKind::Dihedral) os << "(" << m_ << ")";
  if (kind_ == GroupKind::Ginfty) os << " [finite surrogate K_" << m_ << " + tau]";
  os << " on R^" << N_;
  return os.str();
}

OrbitData orbit(const SymmetryGroup& g, const std::vector<double>& xi) {
  if (static_cast<int>(xi.size()) != g.dimN()) throw ConfigError("orbit: point dimension does not match the group");
  OrbitData o;
  o.point = xi;
  const double scale = std::max(1.0, norm_of(xi));
  bool zNonzero = false, yNonzero = false;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (std::abs(xi[i]) <= 1e-14 * scale) continue;
    (i < 4 ? zNonzero : yNonzero) = true;
  }
  if (g.kind() == GroupKind::Ginfty && zNonzero) o.infinite = true;
  if (g.continuousOnY() && yNonzero) o.infinite = true;

  const auto& els = g.elements();
  for (std::size_t e = 0; e < els.size(); ++e) {
    std::vector<double> y = apply(els[e].mat, xi);
    double dx = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dx += (y[i] - xi[i]) * (y[i] - xi[i]);
    if (std::sqrt(dx) <= 1e-10 * scale) o.stabilizer.push_back(static_cast<int>(e));
    if (o.infinite) continue;
    bool fresh = true;
    for (const auto& q : o.orbitPoints) {
      double d = 0;
      for (std::size_t i = 0; i < y.size(); ++i) d += (y[i] - q[i]) * (y[i] - q[i]);
      if (std::sqrt(d) <= 1e-10 * scale) {
        fresh = false;
        break;
      }
    }
    if (fresh) {
      o.orbitPoints.push_back(std::move(y));
      o.orbitSigns.push_back(els[e].theta);
    }
  }
  return o;
}

Eigen::MatrixXd fixed_point_space(const SymmetryGroup& g) {
  const int N = g.dimN();
  if (g.generators().empty()) return Eigen::MatrixXd::Identity(N, N);
  Eigen::MatrixXd stack(N * g.generators().size(), N);
  for (std::size_t k = 0; k < g.generators().size(); ++k)
    stack.block(k * N, 0, N, N) = g.generators()[k].mat - Eigen::MatrixXd::Identity(N, N);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-10) ++rank;
  return svd.matrixV().rightCols(N - rank);
}

std::vector<double> a_phi_witness(const SymmetryGroup& g, const SignHomomorphism& phi) {
  if (!phi.isTheta) return {};
  std::vector<std::vector<double>> candidates;
  if (g.dimN() == 2) {
    candidates.push_back({1.0, 0.37});
  } else if (g.dimN() >= 4) {
    std::vector<double> z(g.dimN(), 0.0);
    z[0] = 1.0;
    candidates.push_back(z);
    z[1] = 0.31;
    z[2] = 0.17;
    candidates.push_back(z);
  }
  for (const auto& c : candidates) {
    OrbitData full = orbit(g, c);
    std::vector<std::vector<double>> ker;
    for (const auto& e : g.elements()) {
      if (e.theta != 1) continue;
      std::vector<double> y = apply(e.mat, c);
      bool fresh = true;
      for (const auto& q : ker) {
        double d = 0;
        for (std::size_t i = 0; i < y.size(); ++i) d += (y[i] - q[i]) * (y[i] - q[i]);
        if (std::sqrt(d) < 1e-10) fresh = false;
      }
      if (fresh) ker.push_back(y);
    }
    if (ker.size() < full.orbitPoints.size()) return c;
  }
  return {};
}

double chord_length(int m, double zetaNorm) { return 2.0 * std::sin(M_PI / m) * zetaNorm; }

bool group_acts_on(const Domain& d, const SymmetryGroup& g) {
  return d.kind() == DomainKind::Radial || d.gridDim() == g.dimN();
}

namespace {

// Node index map k -> index of g x_k for signed permutation elements; empty when not applicable.
std::vector<std::vector<std::size_t>> node_maps(const Domain& d, const SymmetryGroup& g) {
  std::vector<std::vector<std::size_t>> maps;
  for (const auto& e : g.elements())
    if (!is_signed_permutation(e.mat)) return maps;
  const int n = d.gridDim(), M = d.pointsPerAxis();
  for (const auto& e : g.elements()) {
    std::vector<int> perm(n), sign(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (std::abs(e.mat(i, j)) > 0.5) {
          perm[i] = j;
          sign[i] = e.mat(i, j) > 0 ? 1 : -1;
        }
    std::vector<std::size_t> map(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      auto ijk = d.axisIndices(k);
      std::array<int, 3> out{0, 0, 0};
      for (int i = 0; i < n; ++i) {
        const int c = 2 * ijk[perm[i]] - (M - 1);  // twice the centered index
        out[i] = (sign[i] * c + (M - 1)) / 2;
      }
      map[k] = d.index(out);
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

}  // namespace

std::vector<double> symmetrize(const Domain& d, const std::vector<double>& u, const SymmetryGroup& g,
                               const SignHomomorphism& phi) {
  if (d.kind() == DomainKind::Radial) {
    // Radial fields are invariant under every orthogonal map; a surjective phi forces zero.
    return phi.isTheta ? d.zeros() : u;
  }
  if (!group_acts_on(d, g)) throw ConfigError("symmetrize: group dimension does not match the grid");
  const auto& els = g.elements();
  const double inv = 1.0 / els.size();
  std::vector<double> out(d.size(), 0.0);
  auto maps = node_maps(d, g);
  if (!maps.empty()) {
    for (std::size_t e = 0; e < els.size(); ++e) {
      const double s = phi(els[e]) * inv;
      const auto& map = maps[e];
      for (std::size_t k = 0; k < d.size(); ++k) out[k] += s * u[map[k]];
    }
  } else {
    const int n = d.gridDim();
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!d.active(k)) continue;
      auto x = d.node(k);
      double acc = 0;
      for (const auto& e : els) {
        double gx[3] = {0, 0, 0};
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) gx[i] += e.mat(i, j) * x[j];
        acc += phi(e) * d.interpolate(u, gx, n);
      }
      out[k] = acc * inv;
    }
  }
  for (std::size_t k = 0; k < d.size(); ++k)
    if (!d.active(k)) out[k] = 0.0;
  return out;
}

double check_equivariance(const Domain& d, const std::vector<double>& u, const SymmetryGroup& g,
                          const SignHomomorphism& phi) {
  if (d.kind() == DomainKind::Radial) {
    if (!phi.isTheta) return 0.0;
    double worst = 0;
    for (double v : u) worst = std::max(worst, 2 * std::abs(v));  // u(tau x) = -u(x) forces u = 0
    return worst;
  }
  if (!group_acts_on(d, g)) throw ConfigError("check_equivariance: group dimension does not match the grid");
  const auto& els = g.elements();
  auto maps = node_maps(d, g);
  const int n = d.gridDim();
  double worst = 0;
  for (std::size_t e = 0; e < els.size(); ++e) {
    const int s = phi(els[e]);
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!d.active(k)) continue;
      double ugx;
      if (!maps.empty()) {
        ugx = u[maps[e][k]];
      } else {
        auto x = d.node(k);
        double gx[3] = {0, 0, 0};
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) gx[i] += els[e].mat(i, j) * x[j];
        ugx = d.interpolate(u, gx, n);
      }
      worst = std::max(worst, std::abs(ugx - s * u[k]));
    }
  }
  return worst;
}

PointFunction symmetrize_function(PointFunction f, const SymmetryGroup& g, const SignHomomorphism& phi) {
  std::vector<GroupElement> els = g.elements();
  return [f = std::move(f), els = std::move(els), phi](const std::vector<double>& x) {
    double acc = 0;
    for (const auto& e : els) acc += phi(e) * f(apply(e.mat, x));
    return acc / els.size();
  };
}

double check_equivariance_function(const PointFunction& f, const SymmetryGroup& g, const SignHomomorphism& phi,
                                   const std::vector<std::vector<double>>& points) {
  double worst = 0;
  for (const auto& x : points) {
    const double fx = f(x);
    for (const auto& e : g.elements()) worst = std::max(worst, std::abs(f(apply(e.mat, x)) - phi(e) * fx));
  }
  return worst;
}

}  // namespace cnls
