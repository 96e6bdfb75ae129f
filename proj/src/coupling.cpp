#include "cnls/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <sstream>

#include "cnls/common.hpp"

namespace cnls {

int CouplingMatrix::blockOf(int i) const {
  for (int h = 0; h < blockCount(); ++h)
    if (i < blockEnds[h]) return h;
  throw ConfigError("index " + std::to_string(i) + " outside every block");
}

void CouplingMatrix::checkStructure() const {
  if (beta.rows() == 0 || beta.rows() != beta.cols())
    throw ConfigError("beta must be a nonempty square matrix");
  if (blockEnds.empty()) throw ConfigError("at least one block is required");
  int prev = 0;
  for (int e : blockEnds) {
    if (e <= prev) throw ConfigError("block boundaries must be strictly increasing and positive");
    prev = e;
  }
  if (prev != ell())
    throw ConfigError("block boundaries end at " + std::to_string(prev) + " but beta has size " +
                      std::to_string(ell()));
  if (!signs.empty() && static_cast<int>(signs.size()) != blockCount())
    throw ConfigError("sign pattern has " + std::to_string(signs.size()) + " entries for " +
                      std::to_string(blockCount()) + " blocks");
  for (int i = 0; i < ell(); ++i)
    for (int j = 0; j < ell(); ++j)
      if (!std::isfinite(beta(i, j))) throw ConfigError("beta contains a non-finite entry");
}

Eigen::MatrixXd CouplingMatrix::blockMatrix(int h) const {
  const int b = blockBegin(h), n = blockSize(h);
  return beta.block(b, b, n, n);
}

ValidationReport validate_B1(const CouplingMatrix& m, double symTol) {
  m.checkStructure();
  ValidationReport r;
  r.condition = "B1";
  auto flag = [&](const std::string& s) {
    r.pass = false;
    r.violations.push_back(s);
  };
  const int l = m.ell();
  for (int i = 0; i < l; ++i) {
    if (!(m.beta(i, i) > 0)) flag("beta(" + std::to_string(i + 1) + "," + std::to_string(i + 1) + ") <= 0");
    for (int j = i + 1; j < l; ++j) {
      const double a = m.beta(i, j), b = m.beta(j, i);
      const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
      const std::string idx = "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")";
      if (std::abs(a - b) > symTol * scale) flag("asymmetric at " + idx);
      if (m.blockOf(i) == m.blockOf(j)) {
        if (a < 0 || b < 0) flag("negative within-block entry at " + idx);
      } else if (!(a < 0 && b < 0)) {
        flag("cross-block entry not strictly negative at " + idx);
      }
    }
  }
  return r;
}

ConnectivityReport validate_B2(const CouplingMatrix& m) {
  m.checkStructure();
  ConnectivityReport out;
  out.summary.condition = "B2";
  for (int h = 0; h < m.blockCount(); ++h) {
    BlockGraph g;
    g.blockIndex = h;
    const int b = m.blockBegin(h), e = m.blockEnd(h);
    for (int i = b; i < e; ++i) g.vertices.push_back(i);
    for (int i = b; i < e; ++i)
      for (int j = i + 1; j < e; ++j)
        if (m.beta(i, j) > 0) g.edges.emplace_back(i, j);

    std::vector<char> seen(e - b, 0);
    std::queue<int> todo;
    todo.push(b);
    seen[0] = 1;
    while (!todo.empty()) {
      int v = todo.front();
      todo.pop();
      for (auto [i, j] : g.edges) {
        int w = i == v ? j : (j == v ? i : -1);
        if (w >= 0 && !seen[w - b]) {
          seen[w - b] = 1;
          todo.push(w);
        }
      }
    }
    for (int i = b; i < e; ++i) {
      if (!seen[i - b]) {
        g.connected = false;
        out.summary.pass = false;
        out.summary.violations.push_back("block " + std::to_string(h + 1) + ": vertex " + std::to_string(i + 1) +
                                         " unreachable");
      }
    }
    out.graphs.push_back(std::move(g));
  }
  return out;
}

const char* to_string(MuMethod m) {
  switch (m) {
    case MuMethod::Analytic:
      return "analytic";
    case MuMethod::Gradient:
      return "gradient";
    case MuMethod::GridOracle:
      return "grid-oracle";
  }
  return "?";
}

double block_form(const Eigen::MatrixXd& block, double p, const std::vector<double>& s) {
  const int n = static_cast<int>(s.size());
  std::vector<double> sp(n);
  for (int i = 0; i < n; ++i) sp[i] = std::pow(std::abs(s[i]), p);
  double acc = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) acc += block(i, j) * sp[i] * sp[j];
  return acc;
}

namespace {

// On the unit sphere the quotient reduces to B(s)^{-1/(p-1)}, so mu minimizes it iff s maximizes B.
double mu_from_form(double B, double p) { return std::pow(B, -1.0 / (p - 1.0)); }

std::vector<double> form_gradient(const Eigen::MatrixXd& A, double p, const std::vector<double>& s) {
  const int n = static_cast<int>(s.size());
  std::vector<double> sp(n), g(n);
  for (int i = 0; i < n; ++i) sp[i] = std::pow(s[i], p);
  for (int i = 0; i < n; ++i) {
    double row = 0;
    for (int k = 0; k < n; ++k) row += A(i, k) * sp[k];
    g[i] = s[i] > 0 ? 2.0 * p * std::pow(s[i], p - 1.0) * row : 0.0;
  }
  return g;
}

// Scale-free first-order residual: tangential gradient of B relative to 2p B.
double kkt_residual(const Eigen::MatrixXd& A, double p, const std::vector<double>& s) {
  std::vector<double> g = form_gradient(A, p, s);
  double gs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) gs += g[i] * s[i];
  double r2 = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double t = g[i] - gs * s[i];
    if (s[i] == 0) t = std::max(0.0, t);
    r2 += t * t;
  }
  return std::sqrt(r2) / (2.0 * p * block_form(A, p, s));
}

void normalize(std::vector<double>& s) {
  double n = 0;
  for (double v : s) n += v * v;
  n = std::sqrt(n);
  for (double& v : s) v /= n;
}

std::vector<double> ascend(const Eigen::MatrixXd& A, double p, std::vector<double> s, int maxIt, double tol) {
  normalize(s);
  double B = block_form(A, p, s);
  double step = 0.1 / std::max(1.0, A.cwiseAbs().maxCoeff());
  for (int it = 0; it < maxIt; ++it) {
    std::vector<double> g = form_gradient(A, p, s);
    double gs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) gs += g[i] * s[i];
    std::vector<double> t(s.size());
    double tn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      t[i] = g[i] - gs * s[i];
      tn += t[i] * t[i];
    }
    if (std::sqrt(tn) < 1e-3 * tol * 2.0 * p * B) break;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      std::vector<double> c(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) c[i] = std::max(0.0, s[i] + step * t[i]);
      normalize(c);
      double Bc = block_form(A, p, c);
      if (Bc >= B + 1e-4 * step * tn || (Bc >= B && step < 1e-14)) {
        s = std::move(c);
        B = Bc;
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return s;
}

// Newton on the KKT system restricted to the support of s: grad B = 2 lambda s, |s| = 1.
std::vector<double> polish(const Eigen::MatrixXd& A, double p, std::vector<double> s) {
  const int n = static_cast<int>(s.size());
  std::vector<int> sup;
  for (int i = 0; i < n; ++i) {
    if (s[i] > 1e-7)
      sup.push_back(i);
    else
      s[i] = 0;
  }
  normalize(s);
  const int k = static_cast<int>(sup.size());
  for (int it = 0; it < 50; ++it) {
    std::vector<double> g = form_gradient(A, p, s);
    double lambda = 0;
    for (int i : sup) lambda += g[i] * s[i];
    lambda *= 0.5;
    std::vector<double> sp(n);
    for (int i = 0; i < n; ++i) sp[i] = std::pow(s[i], p);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd F(k + 1);
    for (int a = 0; a < k; ++a) {
      const int i = sup[a];
      double row = 0;
      for (int m = 0; m < n; ++m) row += A(i, m) * sp[m];
      F(a) = g[i] - 2 * lambda * s[i];
      for (int b = 0; b < k; ++b) {
        const int j = sup[b];
        double hij = 2 * p * p * A(i, j) * std::pow(s[i], p - 1) * std::pow(s[j], p - 1);
        if (i == j) hij += 2 * p * (p - 1) * std::pow(s[i], p - 2) * row;
        J(a, b) = hij - (a == b ? 2 * lambda : 0.0);
      }
      J(a, k) = -2 * s[i];
      J(k, a) = 2 * s[i];
    }
    double nn = 0;
    for (int i : sup) nn += s[i] * s[i];
    F(k) = nn - 1;
    Eigen::VectorXd d = J.fullPivLu().solve(-F);
    std::vector<double> c = s;
    bool ok = true;
    for (int a = 0; a < k; ++a) {
      c[sup[a]] += d(a);
      if (!(c[sup[a]] > 0)) ok = false;
    }
    if (!ok) break;
    normalize(c);
    if (kkt_residual(A, p, c) > kkt_residual(A, p, s) && it > 0) break;
    s = std::move(c);
    if (d.head(k).norm() < 1e-15) break;
  }
  return s;
}

// For p < 2 a face of the orthant can look stationary to first order while B still grows like eps^p off the face.
bool escape_face(const Eigen::MatrixXd& A, double p, std::vector<double>& s) {
  const double B = block_form(A, p, s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 0) continue;
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
      std::vector<double> c = s;
      c[i] = eps;
      normalize(c);
      if (block_form(A, p, c) > B * (1 + 1e-12)) {
        s = std::move(c);
        return true;
      }
    }
  }
  return false;
}

}  // namespace

MuResult compute_mu_block(const Eigen::MatrixXd& A, double p, const MuOptions& opt) {
  const int n = static_cast<int>(A.rows());
  MuResult res;
  if (n == 1) {
    res.method = MuMethod::Analytic;
    res.mu = mu_from_form(A(0, 0), p);
    res.minimizer = {std::sqrt(res.mu)};
    res.residual = 0.0;
    return res;
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> starts;
  starts.emplace_back(n, 1.0);
  for (int k = 0; k < opt.randomStarts; ++k) {
    std::vector<double> s(n);
    for (double& v : s) v = std::abs(gauss(rng)) + 1e-3;
    starts.push_back(std::move(s));
  }

  struct Candidate {
    std::vector<double> s;
    double mu, residual;
  };
  std::vector<Candidate> cands;
  for (auto& s0 : starts) {
    std::vector<double> s = ascend(A, p, s0, opt.maxIterations, opt.residualTol);
    s = polish(A, p, s);
    for (int k = 0; k < n && escape_face(A, p, s); ++k) s = polish(A, p, ascend(A, p, s, opt.maxIterations, opt.residualTol));
    cands.push_back({s, mu_from_form(block_form(A, p, s), p), kkt_residual(A, p, s)});
  }
  // Ordered reduction: the first start attaining the minimum wins ties.
  std::size_t best = 0;
  for (std::size_t k = 1; k < cands.size(); ++k)
    if (cands[k].mu < cands[best].mu * (1 - 1e-13)) best = k;

  const Candidate& c = cands[best];
  res.mu = c.mu;
  res.residual = c.residual;
  res.method = MuMethod::Gradient;
  // Rescale the unit direction onto M_h: |t|^2 = B(t), i.e. t = B(s)^{-1/(2p-2)} s.
  const double scale = std::pow(block_form(A, p, c.s), -1.0 / (2.0 * p - 2.0));
  for (double v : c.s) res.minimizer.push_back(scale * v);
  for (const Candidate& o : cands) {
    if (std::abs(o.mu - res.mu) > 1e-9 * res.mu || o.residual > opt.residualTol) continue;
    bool fresh = true;
    for (const auto& a : res.alternatives) {
      double d = 0;
      for (int i = 0; i < n; ++i) d += std::pow(a[i] - scale * o.s[i], 2);
      if (std::sqrt(d) < 1e-6) fresh = false;
    }
    if (fresh) {
      std::vector<double> t;
      for (double v : o.s) t.push_back(scale * v);
      res.alternatives.push_back(std::move(t));
    }
  }
  if (!(res.residual < opt.residualTol)) {
    std::ostringstream os;
    os << "compute_mu: no start reached residual " << opt.residualTol << " (best mu " << res.mu << ", residual "
       << res.residual << ")";
    throw NumericalError(os.str());
  }
  if (opt.runOracle && (n == 2 || n == 3)) {
    GridOracle g = mu_grid_oracle(A, p, n == 2 ? opt.oracleSamples2 : opt.oracleSamples3);
    res.oracleRun = true;
    res.oracleMu = g.mu;
    res.oracleErrorBound = g.errorBound;
  }
  return res;
}

MuResult compute_mu(const CouplingMatrix& m, int h, const MuOptions& opt) {
  m.checkStructure();
  if (h < 0 || h >= m.blockCount()) throw ConfigError("block index out of range");
  MuResult r = compute_mu_block(m.blockMatrix(h), m.p, opt);
  r.blockIndex = h;
  return r;
}

GridOracle mu_grid_oracle(const Eigen::MatrixXd& A, double p, int samples) {
  const int n = static_cast<int>(A.rows());
  if (n != 2 && n != 3) throw ConfigError("grid oracle supports blocks of size 2 or 3");
  GridOracle out;
  out.mu = std::numeric_limits<double>::infinity();
  double lip = 0, spacing = 0;
  auto visit = [&](const std::vector<double>& s) {
    const double B = block_form(A, p, s);
    const double mu = mu_from_form(B, p);
    // |grad_sphere mu| = mu / ((p-1) B) * |tangential grad B|
    std::vector<double> g = form_gradient(A, p, s);
    double gs = 0, tn = 0;
    for (int i = 0; i < n; ++i) gs += g[i] * s[i];
    for (int i = 0; i < n; ++i) tn += std::pow(g[i] - gs * s[i], 2);
    lip = std::max(lip, mu / ((p - 1) * B) * std::sqrt(tn));
    if (mu < out.mu) {
      out.mu = mu;
      out.direction = s;
    }
  };
  if (n == 2) {
    const int k = std::max(2, samples);
    spacing = 0.5 * M_PI / (k - 1);
    for (int i = 0; i < k; ++i) {
      double a = i * spacing;
      visit({std::cos(a), std::sin(a)});
    }
    out.errorBound = lip * 0.5 * spacing;
  } else {
    const int k = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(samples)))));
    spacing = 0.5 * M_PI / (k - 1);
    for (int i = 0; i < k; ++i) {
      const double th = i * spacing;
      for (int j = 0; j < k; ++j) {
        const double ph = j * spacing;
        visit({std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)});
      }
    }
    // Any direction is within half a cell diagonal (in angle) of a grid node.
    out.errorBound = lip * 0.5 * std::sqrt(2.0) * spacing;
  }
  return out;
}

B3Report check_B3(const CouplingMatrix& m, double Cphi) {
  m.checkStructure();
  B3Report r;
  r.Cphi = Cphi;
  if (m.blockCount() < 2) {
    r.vacuous = true;
    return r;
  }
  double diagTerm = std::numeric_limits<double>::infinity();
  for (int h = 0; h < m.blockCount(); ++h) {
    double mx = 0;
    for (int i = m.blockBegin(h); i < m.blockEnd(h); ++i) mx = std::max(mx, m.beta(i, i));
    diagTerm = std::min(diagTerm, mx);
  }
  const double p = m.p;
  bool any = false;
  for (int h = 0; h < m.blockCount(); ++h) {
    if (m.blockSize(h) < 2) continue;
    any = true;
    const int b = m.blockBegin(h), e = m.blockEnd(h);
    double minEdge = std::numeric_limits<double>::infinity(), total = 0, cross = 0;
    bool haveEdge = false;
    for (int i = b; i < e; ++i) {
      for (int j = b; j < e; ++j) {
        total += m.beta(i, j);
        if (i != j && m.beta(i, j) > 0) {
          minEdge = std::min(minEdge, m.beta(i, j));
          haveEdge = true;
        }
      }
      for (int j = 0; j < m.ell(); ++j)
        if (j < b || j >= e) cross += std::abs(m.beta(i, j));
    }
    B3BlockRow row;
    row.block = h;
    row.lhs = haveEdge ? minEdge * std::pow(diagTerm / total, p / (p - 1)) : 0.0;
    row.rhs = Cphi * cross;
    row.pass = row.lhs > row.rhs;
    r.pass = r.pass && row.pass;
    r.rows.push_back(row);
  }
  r.vacuous = !any;
  return r;
}

}  // namespace cnls
