#include "cnls/discretization.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <ostream>

#include "cnls/common.hpp"

namespace cnls {

namespace {
// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct DstCache {
  int n = 0, M = 0;
  double* buf = nullptr;
  fftw_plan plan = nullptr;
  std::vector<double> symbol;  // 1 + sum of 1-d eigenvalues, per mode
  std::mutex use;

  DstCache(int n_, int M_, double h) : n(n_), M(M_) {
    std::size_t total = 1;
    for (int d = 0; d < n; ++d) total *= M;
    buf = static_cast<double*>(fftw_malloc(sizeof(double) * total));
    std::vector<int> dims(n, M);
    std::vector<fftw_r2r_kind> kinds(n, FFTW_RODFT00);
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      plan = fftw_plan_r2r(n, dims.data(), buf, buf, kinds.data(), FFTW_ESTIMATE);
    }
    std::vector<double> lam(M);
    for (int k = 0; k < M; ++k) lam[k] = (2.0 - 2.0 * std::cos(M_PI * (k + 1) / (M + 1))) / (h * h);
    symbol.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
      std::size_t r = k;
      double s = 1.0;
      for (int d = 0; d < n; ++d) {
        s += lam[r % M];
        r /= M;
      }
      symbol[k] = s;
    }
  }
  ~DstCache() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(buf);
  }
  DstCache(const DstCache&) = delete;
  DstCache& operator=(const DstCache&) = delete;

  // Solves (L + I) G = g on the full box with zero ghosts.
  void solve(const std::vector<double>& g, std::vector<double>& out) {
    std::lock_guard<std::mutex> lock(use);
    const std::size_t total = symbol.size();
    std::memcpy(buf, g.data(), sizeof(double) * total);
    fftw_execute(plan);
    double norm = 1.0;
    for (int d = 0; d < n; ++d) norm *= 2.0 * (M + 1);
    for (std::size_t k = 0; k < total; ++k) buf[k] /= symbol[k] * norm;
    fftw_execute(plan);
    out.assign(buf, buf + total);
  }
};

const char* to_string(DomainKind k) {
  switch (k) {
    case DomainKind::FullGrid:
      return "fullGrid";
    case DomainKind::Radial:
      return "radial";
    case DomainKind::BallGrid:
      return "ballGrid";
  }
  return "?";
}

std::shared_ptr<const Domain> Domain::full_grid(int n, double halfExtent, double spacing) {
  if (n < 1 || n > 3) throw ConfigError("full grids support n = 1, 2 or 3");
  if (!(spacing > 0) || !(halfExtent > spacing)) throw ConfigError("grid extent must exceed the spacing");
  auto d = std::shared_ptr<Domain>(new Domain());
  d->kind_ = DomainKind::FullGrid;
  d->gridDim_ = d->measureDim_ = n;
  d->h_ = spacing;
  d->M_ = 2 * static_cast<int>(std::lround(halfExtent / spacing)) + 1;
  d->extent_ = 0.5 * (d->M_ - 1) * spacing;
  std::size_t total = 1;
  for (int k = 0; k < n; ++k) total *= d->M_;
  d->weights_.assign(total, std::pow(spacing, n));
  d->active_.assign(total, 1);
  d->dst_ = std::make_shared<DstCache>(n, d->M_, spacing);
  return d;
}

std::shared_ptr<const Domain> Domain::ball_grid(int n, double radius, double spacing) {
  auto box = full_grid(n, radius, spacing);
  auto d = std::shared_ptr<Domain>(new Domain(*box));
  d->kind_ = DomainKind::BallGrid;
  d->extent_ = radius;
  for (std::size_t k = 0; k < d->size(); ++k) {
    if (d->nodeRadius(k) >= radius) {
      d->active_[k] = 0;
      d->weights_[k] = 0.0;
    }
  }
  return d;
}

std::shared_ptr<const Domain> Domain::radial(int N, double rMax, double spacing) {
  if (N < 1) throw ConfigError("radial domain needs N >= 1");
  if (!(spacing > 0) || !(rMax > 2 * spacing)) throw ConfigError("radial extent must exceed the spacing");
  auto d = std::shared_ptr<Domain>(new Domain());
  d->kind_ = DomainKind::Radial;
  d->gridDim_ = 1;
  d->measureDim_ = N;
  d->h_ = spacing;
  d->M_ = static_cast<int>(std::lround(rMax / spacing));
  d->extent_ = d->M_ * spacing;
  const double S = sphere_area(N);
  d->weights_.resize(d->M_);
  d->faces_.resize(d->M_);
  for (int k = 0; k < d->M_; ++k) {
    d->weights_[k] = S / N * (std::pow(k + 1.0, N) - std::pow(static_cast<double>(k), N)) * std::pow(spacing, N);
    d->faces_[k] = S * std::pow((k + 1.0) * spacing, N - 1);
  }
  d->active_.assign(d->M_, 1);
  return d;
}

std::array<double, 3> Domain::node(std::size_t k) const {
  std::array<double, 3> x{0, 0, 0};
  if (kind_ == DomainKind::Radial) {
    x[0] = (k + 0.5) * h_;
    return x;
  }
  auto ijk = axisIndices(k);
  for (int d = 0; d < gridDim_; ++d) x[d] = axisCoordinate(ijk[d]);
  return x;
}

double Domain::nodeRadius(std::size_t k) const {
  auto x = node(k);
  return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
}

std::size_t Domain::index(const std::array<int, 3>& ijk) const {
  std::size_t k = 0;
  for (int d = 0; d < gridDim_; ++d) k = k * M_ + ijk[d];
  return k;
}

std::array<int, 3> Domain::axisIndices(std::size_t k) const {
  std::array<int, 3> ijk{0, 0, 0};
  for (int d = gridDim_ - 1; d >= 0; --d) {
    ijk[d] = static_cast<int>(k % M_);
    k /= M_;
  }
  return ijk;
}

double Domain::inner(const std::vector<double>& u, const std::vector<double>& v) const {
  double acc = 0;
  for (std::size_t k = 0; k < size(); ++k) acc += weights_[k] * u[k] * v[k];
  return acc;
}

double Domain::stiffness(const std::vector<double>& u, const std::vector<double>& v) const {
  double acc = 0;
  if (kind_ == DomainKind::Radial) {
    for (int k = 0; k < M_; ++k) {
      const double du = (k + 1 < M_ ? u[k + 1] : 0.0) - u[k];
      const double dv = (k + 1 < M_ ? v[k + 1] : 0.0) - v[k];
      acc += faces_[k] * du * dv / h_;
    }
    return acc;
  }
  auto val = [&](const std::vector<double>& w, std::size_t k) { return active_[k] ? w[k] : 0.0; };
  std::size_t stride = 1;
  for (int d = gridDim_ - 1; d >= 0; --d) {
    for (std::size_t k = 0; k < size(); ++k) {
      const int i = static_cast<int>((k / stride) % M_);
      const double uk = val(u, k), vk = val(v, k);
      // edge to the next node (or the far ghost)
      const double un = i + 1 < M_ ? val(u, k + stride) : 0.0;
      const double vn = i + 1 < M_ ? val(v, k + stride) : 0.0;
      acc += (un - uk) * (vn - vk);
      // edge from the near ghost
      if (i == 0) acc += uk * vk;
    }
    stride *= M_;
  }
  return acc * std::pow(h_, gridDim_ - 2);
}

void Domain::applyStiffness(const std::vector<double>& u, std::vector<double>& out) const {
  out.assign(size(), 0.0);
  if (kind_ == DomainKind::Radial) {
    for (int k = 0; k < M_; ++k) {
      const double flux = faces_[k] * ((k + 1 < M_ ? u[k + 1] : 0.0) - u[k]) / h_;
      out[k] -= flux;
      if (k + 1 < M_) out[k + 1] += flux;
    }
    return;
  }
  const double scale = std::pow(h_, gridDim_ - 2);
  auto val = [&](std::size_t k) { return active_[k] ? u[k] : 0.0; };
  std::size_t stride = 1;
  for (int d = gridDim_ - 1; d >= 0; --d) {
    for (std::size_t k = 0; k < size(); ++k) {
      if (!active_[k]) continue;
      const int i = static_cast<int>((k / stride) % M_);
      const double up = i + 1 < M_ ? val(k + stride) : 0.0;
      const double dn = i > 0 ? val(k - stride) : 0.0;
      out[k] += scale * (2.0 * u[k] - up - dn);
    }
    stride *= M_;
  }
}

double Domain::lp_coupling_integral(const std::vector<double>& ui, const std::vector<double>& uj, double p) const {
  double acc = 0;
  for (std::size_t k = 0; k < size(); ++k) {
    if (weights_[k] == 0) continue;
    const double a = std::abs(ui[k]), b = std::abs(uj[k]);
    if (a == 0 || b == 0) continue;
    acc += weights_[k] * std::pow(a * b, p);
  }
  return acc;
}

std::vector<double> Domain::laplacian(const std::vector<double>& u) const {
  std::vector<double> out;
  applyStiffness(u, out);
  for (std::size_t k = 0; k < size(); ++k) out[k] = weights_[k] > 0 ? -out[k] / weights_[k] : 0.0;
  return out;
}

std::vector<double> Domain::boxRiesz(const std::vector<double>& g) const {
  std::vector<double> out;
  dst_->solve(g, out);
  return out;
}

std::vector<double> Domain::riesz(const std::vector<double>& g) const {
  if (kind_ == DomainKind::FullGrid) return boxRiesz(g);
  if (kind_ == DomainKind::Radial) {
    // Tridiagonal (A + V) G = V g by the Thomas algorithm.
    const int K = M_;
    std::vector<double> lo(K, 0.0), di(K), up(K, 0.0), rhs(K);
    for (int k = 0; k < K; ++k) {
      di[k] = weights_[k] + faces_[k] / h_ + (k > 0 ? faces_[k - 1] / h_ : 0.0);
      if (k + 1 < K) up[k] = -faces_[k] / h_;
      if (k > 0) lo[k] = -faces_[k - 1] / h_;
      rhs[k] = weights_[k] * g[k];
    }
    for (int k = 1; k < K; ++k) {
      const double f = lo[k] / di[k - 1];
      di[k] -= f * up[k - 1];
      rhs[k] -= f * rhs[k - 1];
    }
    std::vector<double> G(K);
    G[K - 1] = rhs[K - 1] / di[K - 1];
    for (int k = K - 2; k >= 0; --k) G[k] = (rhs[k] - up[k] * G[k + 1]) / di[k];
    return G;
  }
  // Ball: PCG on the active nodes for (L + I) G = g, preconditioned by the box solve.
  const double hn = std::pow(h_, gridDim_);
  auto op = [&](const std::vector<double>& x) {
    std::vector<double> y;
    applyStiffness(x, y);
    for (std::size_t k = 0; k < size(); ++k) y[k] = active_[k] ? y[k] / hn + x[k] : 0.0;
    return y;
  };
  auto precond = [&](const std::vector<double>& r) {
    std::vector<double> z = boxRiesz(r);
    for (std::size_t k = 0; k < size(); ++k)
      if (!active_[k]) z[k] = 0.0;
    return z;
  };
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < size(); ++k) s += a[k] * b[k];
    return s;
  };
  std::vector<double> rhs = g;
  for (std::size_t k = 0; k < size(); ++k)
    if (!active_[k]) rhs[k] = 0.0;
  std::vector<double> x(size(), 0.0), r = rhs, z = precond(r), p = z;
  double rz = dot(r, z);
  const double stop = 1e-26 * std::max(dot(rhs, rhs), 1e-300);
  for (int it = 0; it < 500 && dot(r, r) > stop; ++it) {
    std::vector<double> Ap = op(p);
    const double alpha = rz / dot(p, Ap);
    for (std::size_t k = 0; k < size(); ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * Ap[k];
    }
    z = precond(r);
    const double rzNew = dot(r, z);
    for (std::size_t k = 0; k < size(); ++k) p[k] = z[k] + rzNew / rz * p[k];
    rz = rzNew;
  }
  return x;
}

double Domain::interpolate(const std::vector<double>& u, const double* x, int dim) const {
  if (kind_ == DomainKind::Radial) {
    double r2 = 0;
    for (int d = 0; d < dim; ++d) r2 += x[d] * x[d];
    const double s = std::sqrt(r2) / h_ - 0.5;
    if (s <= 0) return u[0];
    const int k = static_cast<int>(s);
    if (k >= M_) return 0.0;
    const double t = s - k;
    const double a = u[k], b = k + 1 < M_ ? u[k + 1] : 0.0;
    return (1 - t) * a + t * b;
  }
  if (dim != gridDim_) throw ConfigError("interpolation point dimension does not match the grid");
  int base[3] = {0, 0, 0};
  double frac[3] = {0, 0, 0};
  for (int d = 0; d < gridDim_; ++d) {
    const double s = x[d] / h_ + 0.5 * (M_ - 1);
    if (!(s > -1.0) || !(s < M_)) return 0.0;
    base[d] = static_cast<int>(std::floor(s));
    frac[d] = s - base[d];
  }
  double acc = 0;
  for (int corner = 0; corner < (1 << gridDim_); ++corner) {
    double w = 1;
    std::array<int, 3> ijk{0, 0, 0};
    bool inside = true;
    for (int d = 0; d < gridDim_; ++d) {
      const int bit = (corner >> d) & 1;
      ijk[d] = base[d] + bit;
      w *= bit ? frac[d] : 1 - frac[d];
      if (ijk[d] < 0 || ijk[d] >= M_) inside = false;
    }
    if (!inside || w == 0) continue;
    const std::size_t k = index(ijk);
    if (active_[k]) acc += w * u[k];
  }
  return acc;
}

double h1_norm_sq(const std::vector<double>& u, const Domain& d) { return d.h1_norm_sq(u); }

double lp_coupling_integral(const std::vector<double>& ui, const std::vector<double>& uj, double p, const Domain& d) {
  return d.lp_coupling_integral(ui, uj, p);
}

std::vector<double> discrete_laplacian(const std::vector<double>& u, const Domain& d) { return d.laplacian(u); }

void write_field_csv(std::ostream& os, const FieldVector& f, const std::string& provenance) {
  const Domain& d = *f.domain;
  os << "# " << provenance << "\n";
  os << "# domain=" << to_string(d.kind()) << " spacing=" << d.spacing() << " extent=" << d.extent() << "\n";
  if (d.kind() == DomainKind::Radial) {
    os << "r";
  } else {
    const char* names[3] = {"x1", "x2", "x3"};
    for (int k = 0; k < d.gridDim(); ++k) os << (k ? "," : "") << names[k];
  }
  for (int i = 0; i < f.ell(); ++i) os << ",u" << i + 1;
  os << "\n";
  char buf[64];
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!d.active(k)) continue;
    auto x = d.node(k);
    for (int c = 0; c < d.gridDim(); ++c) {
      std::snprintf(buf, sizeof buf, "%.10g", x[c]);
      os << (c ? "," : "") << buf;
    }
    for (int i = 0; i < f.ell(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f.comps[i][k]);
      os << "," << buf;
    }
    os << "\n";
  }
}

void write_field_binary(std::ostream& os, const FieldVector& f, std::uint64_t configHash) {
  const Domain& d = *f.domain;
  auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  os.write("CNLSFLD1", 8);
  put(configHash);
  put(static_cast<std::int32_t>(d.gridDim()));
  put(static_cast<std::int32_t>(d.measureDim()));
  put(static_cast<std::int32_t>(d.pointsPerAxis()));
  put(d.spacing());
  put(d.extent());
  put(static_cast<std::uint64_t>(d.size()));
  put(static_cast<std::int32_t>(f.ell()));
  for (const auto& c : f.comps) os.write(reinterpret_cast<const char*>(c.data()), sizeof(double) * c.size());
}

}  // namespace cnls
