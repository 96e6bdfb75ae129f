#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnls/coupling.hpp"

namespace cnls {

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitConfig = 2, kExitNumerical = 3, kExitBoundFailure = 4 };

struct ProblemConfig {
  int N = 1;
  double p = 2.0;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Ones(1, 1);
  std::vector<int> blocks;  // block sizes; empty means one block
  std::vector<BlockSign> signPattern;
  std::string group = "trivial";  // Gm | GmPrime | Ginfty | trivial | dihedral
  int m = 1;
  std::string phi = "trivial";  // trivial | theta (multibump curves)
  int surrogate = 64;
};

struct NumericsConfig {
  unsigned long long seed = 1;
  // Grids for minimize: radial (measure dimension N), full box or ball with gridDim axes.
  std::string grid = "radial";
  int gridDim = 2;
  double extent = 24.0;
  double spacing = 0.01;
  // Solver.
  double tolGrad = 1e-7;
  int maxIters = 3000;
  std::string init = "muScaledGroundState";
  double seedR = 10.0;
  double alphaMax = 1000.0;
  // Ground state and interaction tables.
  double rMax = 30.0;
  double step = 1e-3;
  int profileStride = 10;
  double deltaMax = 20.0;
  double deltaStep = 0.25;
  double fitLo = 8.0;
  double fitHi = 16.0;
  // Multibump.
  std::string multibumpMode = "curve";  // curve | twoBlock | crossDecay
  std::vector<double> Rlist = {8, 10, 12, 14, 16};
  std::string lpMethod = "auto";
  long long samples = 10000000;
  double ringR = 20.0;
  double centralR = 8.0;
  int ringOrder = 6;
  double crossR = 20.0;
  double crossDR = 2.0;
  // mu.
  int randomStarts = 16;
  bool oracle = true;
  // Sweep.
  std::string sweepMode = "persisting";
  std::vector<double> epsilons = {0.25, 0.2, 0.15, 0.1, 0.075};
  double sweepSpacing = 0.15;
  double seedFraction = 0.5;
};

struct OutputConfig {
  std::string directory = "cnls-out";
  std::vector<std::string> formats = {"json", "csv", "txt"};
};

struct RunConfig {
  std::string task;
  ProblemConfig problem;
  NumericsConfig numerics;
  OutputConfig output;
  std::string source;

  CouplingMatrix matrix() const;
};

const std::vector<std::string>& known_tasks();

// Parses and validates; throws ConfigError naming the key, or the line and column of a parse error.
RunConfig parse_config(std::string_view text, const std::string& source = "<string>");
RunConfig load_config(const std::string& path);

// Canonical TOML of the effective configuration with every default filled in.
std::string effective_config_toml(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

struct RunOptions {
  std::string task;
  bool strict = false;
  std::optional<unsigned long long> seed;
  std::optional<std::string> outDir;
  int threads = 0;
};

// Runs one task and writes its artifacts; returns an ExitCode and never throws.
int run(RunConfig cfg, const RunOptions& opt, std::ostream& log);

// Entry point of the command-line tool.
int cli_main(int argc, char** argv);

// Writes through a temporary file and a rename.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace cnls
