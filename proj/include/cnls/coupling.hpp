#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace cnls {

enum class BlockSign { Positive, SignChanging };  // Q+ / Q-

struct CouplingMatrix {
  Eigen::MatrixXd beta;
  double p = 2.0;
  int dimN = 1;
  std::vector<int> blockEnds;  // l_1 < ... < l_q = l (exclusive ends, 0-based starts implied)
  std::vector<BlockSign> signs;

  int ell() const { return static_cast<int>(beta.rows()); }
  int blockCount() const { return static_cast<int>(blockEnds.size()); }
  int blockBegin(int h) const { return h == 0 ? 0 : blockEnds[h - 1]; }
  int blockEnd(int h) const { return blockEnds[h]; }
  int blockSize(int h) const { return blockEnd(h) - blockBegin(h); }
  int blockOf(int i) const;

  // Structural checks only (square, block boundaries, sign list length); throws ConfigError.
  void checkStructure() const;
  Eigen::MatrixXd blockMatrix(int h) const;
};

struct ValidationReport {
  std::string condition;
  bool pass = true;
  std::vector<std::string> violations;
};

struct BlockGraph {
  int blockIndex = 0;
  std::vector<int> vertices;
  std::vector<std::pair<int, int>> edges;
  bool connected = true;
};

ValidationReport validate_B1(const CouplingMatrix& m, double symTol = 1e-12);

struct ConnectivityReport {
  ValidationReport summary;
  std::vector<BlockGraph> graphs;
};
ConnectivityReport validate_B2(const CouplingMatrix& m);

enum class MuMethod { Analytic, Gradient, GridOracle };
const char* to_string(MuMethod m);

struct MuOptions {
  int randomStarts = 16;
  unsigned long long seed = 12345;
  double residualTol = 1e-9;
  int maxIterations = 20000;
  bool runOracle = true;
  int oracleSamples2 = 10000;
  int oracleSamples3 = 1000000;
};

struct MuResult {
  int blockIndex = 0;
  double mu = 0.0;
  std::vector<double> minimizer;  // on M_h
  MuMethod method = MuMethod::Gradient;
  double residual = 0.0;
  // Every distinct multistart minimizer whose value is within tolerance of mu.
  std::vector<std::vector<double>> alternatives;
  bool oracleRun = false;
  double oracleMu = 0.0;
  double oracleErrorBound = 0.0;
};

// Block-local quadratic form B(s) = sum beta_ij |s_i|^p |s_j|^p.
double block_form(const Eigen::MatrixXd& block, double p, const std::vector<double>& s);

MuResult compute_mu(const CouplingMatrix& m, int h, const MuOptions& opt = {});
MuResult compute_mu_block(const Eigen::MatrixXd& block, double p, const MuOptions& opt = {});

struct GridOracle {
  double mu = 0.0;
  double errorBound = 0.0;
  std::vector<double> direction;
};
// Brute-force minimum of the quotient over a direction grid on the nonnegative sphere (size 2 or 3).
GridOracle mu_grid_oracle(const Eigen::MatrixXd& block, double p, int samples);

struct B3BlockRow {
  int block = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
};
struct B3Report {
  bool pass = true;
  bool vacuous = false;
  double Cphi = 0.0;
  std::vector<B3BlockRow> rows;
};
B3Report check_B3(const CouplingMatrix& m, double Cphi);

}  // namespace cnls
