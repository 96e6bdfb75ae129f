#include "cnls/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "cnls/common.hpp"
#include "cnls/coupling.hpp"
#include "cnls/groundstate.hpp"
#include "cnls/multibump.hpp"
#include "cnls/nehari.hpp"
#include "cnls/solver.hpp"
#include "cnls/symmetry.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace cnls {

namespace {

// Thrown when --strict turns a failed check into a failed run.
class BoundCheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kFormats = {"json", "csv", "binary", "txt"};

std::string key_path(const std::string& table, const std::string& key) {
  return table.empty() ? key : table + "." + key;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

double as_double(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>(); v && (n.is_integer() || n.is_floating_point())) return *v;
  bad(key, "expected a number");
}

long long as_int(const toml::node& n, const std::string& key) {
  if (n.is_integer()) return *n.value<long long>();
  bad(key, "expected an integer");
}

bool as_bool(const toml::node& n, const std::string& key) {
  if (n.is_boolean()) return *n.value<bool>();
  bad(key, "expected true or false");
}

std::string as_string(const toml::node& n, const std::string& key) {
  if (n.is_string()) return *n.value<std::string>();
  bad(key, "expected a string");
}

std::vector<double> as_doubles(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (!arr) bad(key, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(as_double(*arr->get(i), key));
  return out;
}

std::vector<std::string> as_strings(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (!arr) bad(key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(as_string(*arr->get(i), key));
  return out;
}

Eigen::MatrixXd as_matrix(const toml::node& n, const std::string& key) {
  const auto* rows = n.as_array();
  if (!rows || rows->empty()) bad(key, "expected a non-empty array of rows");
  const auto r = rows->size();
  Eigen::MatrixXd m(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto* row = rows->get(i);
    if (!row || !row->is_array()) bad(key, "expected an array of rows");
    auto vals = as_doubles(*row, key);
    if (vals.size() != r) bad(key, "matrix must be square");
    for (std::size_t j = 0; j < r; ++j) {
      if (!std::isfinite(vals[j])) bad(key, "entries must be finite");
      m(i, j) = vals[j];
    }
  }
  return m;
}

void apply_problem(ProblemConfig& p, const std::string& k, const toml::node& v, const std::string& path) {
  if (k == "N") p.N = static_cast<int>(as_int(v, path));
  else if (k == "p") p.p = as_double(v, path);
  else if (k == "beta") p.beta = as_matrix(v, path);
  else if (k == "blocks") {
    p.blocks.clear();
    for (double b : as_doubles(v, path)) {
      if (b != std::floor(b) || b < 1) bad(path, "block sizes must be positive integers");
      p.blocks.push_back(static_cast<int>(b));
    }
  } else if (k == "signPattern") {
    p.signPattern.clear();
    for (const auto& s : as_strings(v, path)) {
      if (s == "+" || s == "Q+") p.signPattern.push_back(BlockSign::Positive);
      else if (s == "-" || s == "Q-") p.signPattern.push_back(BlockSign::SignChanging);
      else bad(path, "entries must be \"+\" or \"-\"");
    }
  } else if (k == "group") p.group = as_string(v, path);
  else if (k == "m") p.m = static_cast<int>(as_int(v, path));
  else if (k == "phi") p.phi = as_string(v, path);
  else if (k == "surrogate") p.surrogate = static_cast<int>(as_int(v, path));
  else bad(path, "unknown key");
}

void apply_numerics(NumericsConfig& n, const std::string& k, const toml::node& v, const std::string& path) {
  if (k == "seed") {
    const auto s = as_int(v, path);
    if (s < 0) bad(path, "must be nonnegative");
    n.seed = static_cast<unsigned long long>(s);
  } else if (k == "grid") n.grid = as_string(v, path);
  else if (k == "gridDim") n.gridDim = static_cast<int>(as_int(v, path));
  else if (k == "extent") n.extent = as_double(v, path);
  else if (k == "spacing") n.spacing = as_double(v, path);
  else if (k == "tolGrad") n.tolGrad = as_double(v, path);
  else if (k == "maxIters") n.maxIters = static_cast<int>(as_int(v, path));
  else if (k == "init") n.init = as_string(v, path);
  else if (k == "seedR") n.seedR = as_double(v, path);
  else if (k == "alphaMax") n.alphaMax = as_double(v, path);
  else if (k == "rMax") n.rMax = as_double(v, path);
  else if (k == "step") n.step = as_double(v, path);
  else if (k == "profileStride") n.profileStride = static_cast<int>(as_int(v, path));
  else if (k == "deltaMax") n.deltaMax = as_double(v, path);
  else if (k == "deltaStep") n.deltaStep = as_double(v, path);
  else if (k == "fitLo") n.fitLo = as_double(v, path);
  else if (k == "fitHi") n.fitHi = as_double(v, path);
  else if (k == "multibumpMode") n.multibumpMode = as_string(v, path);
  else if (k == "Rlist") n.Rlist = as_doubles(v, path);
  else if (k == "lpMethod") n.lpMethod = as_string(v, path);
  else if (k == "samples") n.samples = as_int(v, path);
  else if (k == "ringR") n.ringR = as_double(v, path);
  else if (k == "centralR") n.centralR = as_double(v, path);
  else if (k == "ringOrder") n.ringOrder = static_cast<int>(as_int(v, path));
  else if (k == "crossR") n.crossR = as_double(v, path);
  else if (k == "crossDR") n.crossDR = as_double(v, path);
  else if (k == "randomStarts") n.randomStarts = static_cast<int>(as_int(v, path));
  else if (k == "oracle") n.oracle = as_bool(v, path);
  else if (k == "sweepMode") n.sweepMode = as_string(v, path);
  else if (k == "epsilons") n.epsilons = as_doubles(v, path);
  else if (k == "sweepSpacing") n.sweepSpacing = as_double(v, path);
  else if (k == "seedFraction") n.seedFraction = as_double(v, path);
  else bad(path, "unknown key");
}

void apply_output(OutputConfig& o, const std::string& k, const toml::node& v, const std::string& path) {
  if (k == "directory") o.directory = as_string(v, path);
  else if (k == "formats") o.formats = as_strings(v, path);
  else bad(path, "unknown key");
}

const std::set<std::string> kProblemKeys = {"N", "p", "beta", "blocks", "signPattern", "group", "m", "phi", "surrogate"};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) bad(key, what);
}

void validate_config(RunConfig& c) {
  auto& P = c.problem;
  auto& n = c.numerics;
  if (!c.task.empty()) {
    const auto& t = known_tasks();
    require(std::find(t.begin(), t.end(), c.task) != t.end(), "task", "unknown task '" + c.task + "'");
  }
  require(P.N >= 1 && P.N <= 16, "problem.N", "must lie in [1, 16]");
  require(std::isfinite(P.p), "problem.p", "must be finite");
  try {
    check_exponent(P.N, P.p);
  } catch (const ConfigError& e) {
    bad("problem.p", e.what());
  }
  const int ell = static_cast<int>(P.beta.rows());
  require(ell <= 64, "problem.beta", "at most 64 components");
  if (P.blocks.empty()) P.blocks = {ell};
  int total = 0;
  for (int b : P.blocks) total += b;
  require(total == ell, "problem.blocks", "block sizes must sum to the number of components");
  if (P.signPattern.empty()) P.signPattern.assign(P.blocks.size(), BlockSign::Positive);
  require(P.signPattern.size() == P.blocks.size(), "problem.signPattern", "needs one entry per block");
  const std::set<std::string> groups = {"Gm", "GmPrime", "Ginfty", "trivial", "dihedral"};
  require(groups.count(P.group) == 1, "problem.group", "must be one of Gm, GmPrime, Ginfty, trivial, dihedral");
  require(P.m >= 1 && P.m <= 1000, "problem.m", "must lie in [1, 1000]");
  require(P.phi == "trivial" || P.phi == "theta", "problem.phi", "must be trivial or theta");
  require(P.surrogate >= 2 && P.surrogate <= 4096, "problem.surrogate", "must lie in [2, 4096]");
  if (P.group == "Gm" || P.group == "GmPrime" || P.group == "Ginfty")
    require(P.N >= 4, "problem.group", P.group + " needs N >= 4");
  if (P.group == "dihedral") require(P.N == 2, "problem.group", "dihedral acts on the plane (N = 2)");

  const auto B1 = validate_B1(c.matrix());
  if (!B1.pass) {
    std::string msg = "B1 rejected:";
    for (const auto& v : B1.violations) msg += " " + v + ";";
    bad("problem.beta", msg);
  }

  require(n.grid == "radial" || n.grid == "full" || n.grid == "ball", "numerics.grid", "must be radial, full or ball");
  require(n.gridDim >= 1 && n.gridDim <= 3, "numerics.gridDim", "must lie in [1, 3]");
  require(n.spacing > 0 && n.extent > 2 * n.spacing, "numerics.spacing", "need 0 < spacing < extent / 2");
  require(n.tolGrad > 0 && n.tolGrad < 1, "numerics.tolGrad", "must lie in (0, 1)");
  require(n.maxIters >= 1 && n.maxIters <= 1000000, "numerics.maxIters", "must lie in [1, 1e6]");
  try {
    (void)init_from_string(n.init);
  } catch (const ConfigError& e) {
    bad("numerics.init", e.what());
  }
  require(n.seedR > 0, "numerics.seedR", "must be positive");
  require(n.alphaMax >= 1e-3, "numerics.alphaMax", "must be at least 1e-3");
  require(n.rMax > 5 && n.rMax <= 200, "numerics.rMax", "must lie in (5, 200]");
  require(n.step > 0 && n.step <= 0.1, "numerics.step", "must lie in (0, 0.1]");
  require(n.profileStride >= 1, "numerics.profileStride", "must be positive");
  require(n.deltaStep > 0 && n.deltaMax > n.deltaStep, "numerics.deltaMax", "need 0 < deltaStep < deltaMax");
  require(n.fitLo < n.fitHi, "numerics.fitLo", "must be below fitHi");
  require(n.multibumpMode == "curve" || n.multibumpMode == "twoBlock" || n.multibumpMode == "crossDecay",
          "numerics.multibumpMode", "must be curve, twoBlock or crossDecay");
  require(!n.Rlist.empty(), "numerics.Rlist", "must not be empty");
  for (std::size_t i = 0; i < n.Rlist.size(); ++i) {
    require(n.Rlist[i] > 1, "numerics.Rlist", "entries must exceed 1");
    if (i) require(n.Rlist[i] > n.Rlist[i - 1], "numerics.Rlist", "entries must increase");
  }
  require(n.lpMethod == "auto" || n.lpMethod == "grid" || n.lpMethod == "monteCarlo", "numerics.lpMethod",
          "must be auto, grid or monteCarlo");
  require(n.samples >= 1000 && n.samples <= 10000000000LL, "numerics.samples", "must lie in [1e3, 1e10]");
  require(n.ringR > 1 && n.centralR > 1 && n.crossR > 1 && n.crossDR > 0, "numerics.ringR",
          "ring, central and cross scales must exceed 1");
  require(n.ringOrder >= 2, "numerics.ringOrder", "must be at least 2");
  require(n.randomStarts >= 1 && n.randomStarts <= 10000, "numerics.randomStarts", "must lie in [1, 1e4]");
  try {
    (void)sweep_mode_from_string(n.sweepMode);
  } catch (const ConfigError& e) {
    bad("numerics.sweepMode", e.what());
  }
  require(n.epsilons.size() >= 2, "numerics.epsilons", "at least two values");
  for (std::size_t i = 0; i < n.epsilons.size(); ++i) {
    require(n.epsilons[i] > 0 && n.epsilons[i] <= 1, "numerics.epsilons", "entries must lie in (0, 1]");
    if (i) require(n.epsilons[i] < n.epsilons[i - 1], "numerics.epsilons", "entries must decrease");
  }
  require(n.sweepSpacing > 0 && n.sweepSpacing < 1, "numerics.sweepSpacing", "must lie in (0, 1)");
  require(n.seedFraction > 0 && n.seedFraction < 1, "numerics.seedFraction", "must lie in (0, 1)");

  require(!c.output.directory.empty(), "output.directory", "must not be empty");
  for (const auto& f : c.output.formats)
    require(kFormats.count(f) == 1, "output.formats", "unknown format '" + f + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

toml::array to_toml(const std::vector<double>& v) {
  toml::array a;
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

CouplingMatrix RunConfig::matrix() const {
  CouplingMatrix m;
  m.beta = problem.beta;
  m.p = problem.p;
  m.dimN = problem.N;
  int end = 0;
  for (int b : problem.blocks) m.blockEnds.push_back(end += b);
  if (m.blockEnds.empty()) m.blockEnds = {static_cast<int>(problem.beta.rows())};
  m.signs = problem.signPattern;
  if (m.signs.empty()) m.signs.assign(m.blockEnds.size(), BlockSign::Positive);
  return m;
}

const std::vector<std::string>& known_tasks() {
  static const std::vector<std::string> t = {"validate",  "mu",       "groundstate", "interaction",
                                             "multibump", "minimize", "sweep",       "report"};
  return t;
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  toml::table tbl;
  try {
    tbl = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "parse error in " << source << " at line " << e.source().begin.line << ", column "
       << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
  RunConfig c;
  c.source = source;
  std::set<std::string> topProblem;
  for (auto&& [k, v] : tbl) {
    const std::string key(k.str());
    if (key == "task") {
      c.task = as_string(v, key);
    } else if (key == "problem" || key == "numerics" || key == "output") {
      const auto* t = v.as_table();
      if (!t) bad(key, "expected a table");
      for (auto&& [k2, v2] : *t) {
        const std::string sub(k2.str());
        const std::string path = key_path(key, sub);
        if (key == "problem") {
          if (topProblem.count(sub)) bad(path, "given both at top level and in [problem]");
          apply_problem(c.problem, sub, v2, path);
          topProblem.insert(sub);
        } else if (key == "numerics") {
          apply_numerics(c.numerics, sub, v2, path);
        } else {
          apply_output(c.output, sub, v2, path);
        }
      }
    } else if (kProblemKeys.count(key)) {
      // Problem keys may sit at the top level for short configs.
      if (topProblem.count(key)) bad(key, "given both at top level and in [problem]");
      apply_problem(c.problem, key, v, key);
      topProblem.insert(key);
    } else {
      bad(key, "unknown key");
    }
  }
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string effective_config_toml(const RunConfig& c) {
  const auto& P = c.problem;
  const auto& n = c.numerics;
  toml::table problem;
  problem.insert("N", P.N);
  problem.insert("p", P.p);
  toml::array beta;
  for (int i = 0; i < P.beta.rows(); ++i) {
    toml::array row;
    for (int j = 0; j < P.beta.cols(); ++j) row.push_back(P.beta(i, j));
    beta.push_back(std::move(row));
  }
  problem.insert("beta", std::move(beta));
  toml::array blocks, signs;
  for (int b : P.blocks) blocks.push_back(b);
  for (auto s : P.signPattern) signs.push_back(s == BlockSign::Positive ? "+" : "-");
  problem.insert("blocks", std::move(blocks));
  problem.insert("signPattern", std::move(signs));
  problem.insert("group", P.group);
  problem.insert("m", P.m);
  problem.insert("phi", P.phi);
  problem.insert("surrogate", P.surrogate);

  toml::table num;
  num.insert("seed", static_cast<int64_t>(n.seed));
  num.insert("grid", n.grid);
  num.insert("gridDim", n.gridDim);
  num.insert("extent", n.extent);
  num.insert("spacing", n.spacing);
  num.insert("tolGrad", n.tolGrad);
  num.insert("maxIters", n.maxIters);
  num.insert("init", n.init);
  num.insert("seedR", n.seedR);
  num.insert("alphaMax", n.alphaMax);
  num.insert("rMax", n.rMax);
  num.insert("step", n.step);
  num.insert("profileStride", n.profileStride);
  num.insert("deltaMax", n.deltaMax);
  num.insert("deltaStep", n.deltaStep);
  num.insert("fitLo", n.fitLo);
  num.insert("fitHi", n.fitHi);
  num.insert("multibumpMode", n.multibumpMode);
  num.insert("Rlist", to_toml(n.Rlist));
  num.insert("lpMethod", n.lpMethod);
  num.insert("samples", static_cast<int64_t>(n.samples));
  num.insert("ringR", n.ringR);
  num.insert("centralR", n.centralR);
  num.insert("ringOrder", n.ringOrder);
  num.insert("crossR", n.crossR);
  num.insert("crossDR", n.crossDR);
  num.insert("randomStarts", n.randomStarts);
  num.insert("oracle", n.oracle);
  num.insert("sweepMode", n.sweepMode);
  num.insert("epsilons", to_toml(n.epsilons));
  num.insert("sweepSpacing", n.sweepSpacing);
  num.insert("seedFraction", n.seedFraction);

  toml::table out;
  out.insert("directory", c.output.directory);
  toml::array formats;
  for (const auto& f : c.output.formats) formats.push_back(f);
  out.insert("formats", std::move(formats));

  toml::table root;
  root.insert("task", c.task);
  root.insert("problem", std::move(problem));
  root.insert("numerics", std::move(num));
  root.insert("output", std::move(out));
  std::ostringstream os;
  os << root << "\n";
  return os.str();
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // The output directory does not change results, so it stays out of the hash.
  RunConfig c = cfg;
  c.output.directory = "-";
  return fnv1a64(effective_config_toml(c));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

namespace {

struct Emitter {
  RunConfig cfg;
  std::string hash;
  fs::path dir;
  std::vector<std::string> written;
  std::ostringstream text;  // human report body

  bool wants(const std::string& f) const {
    return std::find(cfg.output.formats.begin(), cfg.output.formats.end(), f) != cfg.output.formats.end();
  }
  std::string header(const std::string& schema) const {
    return std::string("# cnls ") + kToolVersion + " config " + hash + "\n# schema " + schema + " v1\n";
  }
  void file(const std::string& name, const std::string& content) {
    write_file_atomic((dir / name).string(), content);
    written.push_back(name);
  }
  void json_file(const std::string& name, json j) {
    if (!wants("json")) return;
    json out;
    out["toolVersion"] = kToolVersion;
    out["configHash"] = hash;
    out["task"] = cfg.task;
    for (auto& [k, v] : j.items()) out[k] = v;
    file(name, out.dump(2) + "\n");
  }
  void csv_file(const std::string& name, const std::string& schema, const std::string& body) {
    if (wants("csv")) file(name, header(schema) + body);
  }
};

json to_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

std::vector<std::string> theory_banners(const RunConfig& c) {
  std::vector<std::string> b;
  if (c.problem.N < 4 || c.problem.group == "Ginfty" || c.problem.group == "dihedral")
    b.push_back("algorithmic validation outside the theorem's hypotheses");
  if (c.problem.N == 5 && c.problem.blocks.size() >= 2)
    b.push_back("N = 5 with q >= 2 is excluded by the existence theorem; results carry no theoretical backing");
  return b;
}

SymmetryGroup make_group(const ProblemConfig& P, int n) {
  if (P.group == "Gm") return SymmetryGroup::Gm(n, P.m);
  if (P.group == "GmPrime") return SymmetryGroup::GmPrime(n, P.m);
  if (P.group == "Ginfty") return SymmetryGroup::Ginfty(n, P.surrogate);
  if (P.group == "dihedral") return SymmetryGroup::dihedral(P.m);
  return SymmetryGroup::trivial(n);
}

RadialProfile profile_of(const RunConfig& c) {
  GroundStateOptions o;
  o.rMax = c.numerics.rMax;
  o.step = c.numerics.step;
  o.rStitch = std::min(o.rStitch, 0.75 * o.rMax);
  return solve_ground_state(c.problem.N, c.problem.p, o);
}

MuOptions mu_options(const RunConfig& c) {
  MuOptions o;
  o.randomStarts = c.numerics.randomStarts;
  o.seed = c.numerics.seed;
  o.runOracle = c.numerics.oracle;
  return o;
}

LpOptions lp_options(const RunConfig& c) {
  LpOptions o;
  o.samples = c.numerics.samples;
  o.seed = c.numerics.seed;
  o.method = c.numerics.lpMethod == "grid"         ? LpMethod::Grid
             : c.numerics.lpMethod == "monteCarlo" ? LpMethod::MonteCarlo
                                                   : LpMethod::Auto;
  return o;
}

json mu_json(const MuResult& r) {
  json j;
  j["block"] = r.blockIndex + 1;
  j["mu"] = r.mu;
  j["minimizer"] = to_json(r.minimizer);
  j["method"] = to_string(r.method);
  j["residual"] = r.residual;
  j["alternatives"] = static_cast<int>(r.alternatives.size());
  if (r.oracleRun) {
    j["oracleMu"] = r.oracleMu;
    j["oracleErrorBound"] = r.oracleErrorBound;
  }
  return j;
}

void task_validate(Emitter& E, bool strict) {
  const auto m = E.cfg.matrix();
  const auto B1 = validate_B1(m);
  const auto B2 = validate_B2(m);
  json j;
  j["B1"] = {{"pass", B1.pass}, {"violations", B1.violations}};
  json graphs = json::array();
  for (const auto& g : B2.graphs) graphs.push_back({{"block", g.blockIndex + 1}, {"connected", g.connected}});
  j["B2"] = {{"pass", B2.summary.pass}, {"violations", B2.summary.violations}, {"graphs", graphs}};
  bool b3pass = true;
  if (E.cfg.problem.N >= 2) {
    const auto prof = profile_of(E.cfg);
    std::vector<int> bumps;
    for (auto s : m.signs) bumps.push_back(s == BlockSign::Positive ? 1 : 2);
    const double S = Sphi_trivial(prof);
    const auto d = compute_dphi_upper(prof, bumps);
    const double C = compute_Cphi(d.value, S, m.p);
    const auto B3 = check_B3(m, C);
    b3pass = B3.pass;
    json rows = json::array();
    for (const auto& r : B3.rows) rows.push_back({{"block", r.block + 1}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"pass", r.pass}});
    j["B3"] = {{"pass", B3.pass}, {"vacuous", B3.vacuous}, {"Cphi", C}, {"Sphi", S}, {"dphiUpper", d.value},
               {"provenance", "S from the trivial class; d from disjoint truncated ground-state bumps"},
               {"rows", rows}};
  }
  j["banners"] = theory_banners(E.cfg);
  E.json_file("validate.json", j);
  E.text << "B1 " << (B1.pass ? "pass" : "FAIL") << "\nB2 " << (B2.summary.pass ? "pass" : "FAIL") << "\n";
  for (const auto& v : B2.summary.violations) E.text << "  " << v << "\n";
  if (j.contains("B3")) E.text << "B3 " << (b3pass ? "pass" : "FAIL") << "\n";
  if (strict && (!B2.summary.pass || !b3pass)) throw BoundCheckFailure("validation failed under --strict");
}

void task_mu(Emitter& E) {
  const auto m = E.cfg.matrix();
  json blocks = json::array();
  for (int h = 0; h < m.blockCount(); ++h) {
    const auto r = compute_mu(m, h, mu_options(E.cfg));
    blocks.push_back(mu_json(r));
    E.text << "mu_" << h + 1 << " = " << num(r.mu) << " (" << to_string(r.method) << ")\n";
  }
  E.json_file("mu.json", {{"blocks", blocks}});
}

void task_groundstate(Emitter& E) {
  const auto prof = profile_of(E.cfg);
  json j = {{"N", prof.N},
            {"p", prof.p},
            {"w0", prof.w0},
            {"normH1sq", prof.normH1sq},
            {"norm2p", prof.norm2p},
            {"cBase", prof.cBase},
            {"odeResidual", prof.odeResidual},
            {"asymptoticConstant", prof.asymptoticConstant},
            {"rStitch", prof.rStitch}};
  E.json_file("groundstate.json", j);
  std::ostringstream csv;
  csv << "r,w,dw\n";
  for (std::size_t k = 0; k < prof.nodes(); k += E.cfg.numerics.profileStride)
    csv << num(prof.radius(k)) << "," << num(prof.w[k]) << "," << num(prof.dw[k]) << "\n";
  E.csv_file("groundstate.csv", "groundstate(r,w,dw)", csv.str());
  E.text << "omega(0) = " << num(prof.w0) << "\n||omega||^2 = " << num(prof.normH1sq) << "\nc = " << num(prof.cBase)
         << "\n";
}

void task_interaction(Emitter& E) {
  const auto& n = E.cfg.numerics;
  const auto prof = profile_of(E.cfg);
  const auto K = build_interaction_kernel(prof, n.deltaMax, n.deltaStep, n.fitLo, n.fitHi);
  E.json_file("interaction.json", {{"fittedRate", K.fittedRate},
                                   {"fittedB", K.fittedB},
                                   {"fitResidual", K.fitResidual},
                                   {"fitLo", K.fitLo},
                                   {"fitHi", K.fitHi}});
  std::ostringstream csv;
  csv << "delta,psi\n";
  for (std::size_t i = 0; i < K.delta.size(); ++i) csv << num(K.delta[i]) << "," << num(K.psi[i]) << "\n";
  E.csv_file("interaction.csv", "interaction(delta,psi)", csv.str());
  E.text << "fitted decay rate of Psi(delta) delta^{(N-1)/2}: " << num(K.fittedRate) << "\n";
}

void task_multibump(Emitter& E, bool strict) {
  const auto& c = E.cfg;
  const auto& n = c.numerics;
  const auto prof = profile_of(c);
  if (n.multibumpMode == "curve") {
    const auto g = make_group(c.problem, c.problem.N);
    const auto phi = c.problem.phi == "theta" ? SignHomomorphism::theta() : SignHomomorphism::trivial();
    const auto curve = sigma_energy_curve(prof, g, phi, n.Rlist, lp_options(c), n.fitLo, n.fitHi);
    std::ostringstream csv;
    csv << "R,energy_over_c,gap_over_c,gap_stderr_over_c,t_scale,method,samples\n";
    bool allPositive = true;
    for (std::size_t i = 0; i < curve.Rvalues.size(); ++i) {
      allPositive = allPositive && curve.gaps[i] > 0;
      csv << num(curve.Rvalues[i]) << "," << num(curve.energies[i] / prof.cBase) << ","
          << num(curve.gaps[i] / prof.cBase) << "," << num(curve.gapStderr[i] / prof.cBase) << ","
          << num(curve.tScales[i]) << "," << to_string(curve.lp[i].method) << "," << curve.lp[i].samples << "\n";
    }
    E.csv_file("multibump_curve.csv", "multibump_curve(R,energy_over_c,gap_over_c,gap_stderr_over_c,t_scale,method,samples)",
               csv.str());
    E.json_file("multibump.json", {{"mode", "curve"},
                                   {"bumps", curve.bumps},
                                   {"limitOverC", curve.limit / prof.cBase},
                                   {"chord", curve.chord},
                                   {"fitRate", curve.fit.rate},
                                   {"rawRate", curve.fit.rawRate},
                                   {"fitResidual", curve.fit.residual},
                                   {"allGapsPositive", allPositive},
                                   {"decreasing", curve.fit.decreasing},
                                   {"logConvex", curve.fit.logConvex},
                                   {"banners", theory_banners(c)}});
    E.text << "bumps " << curve.bumps << ", fitted gap rate " << num(curve.fit.rate) << " vs chord " << num(curve.chord)
           << "\n";
    if (strict && !allPositive) throw BoundCheckFailure("a multibump energy reached the orbit limit");
  } else if (n.multibumpMode == "twoBlock") {
    TwoBlockOptions o;
    o.R = n.ringR;
    o.centralR = n.centralR;
    o.ringOrder = n.ringOrder;
    o.lp = lp_options(c);
    o.mu = mu_options(c);
    const auto r = two_block_upper_bound(prof, c.matrix(), c.problem.signPattern, o);
    json layouts = json::array();
    for (const auto& L : r.layouts)
      layouts.push_back({{"centralBlock", L.centralBlock + 1},
                         {"ringBlock", L.ringBlock + 1},
                         {"energyOverC", L.energy / prof.cBase},
                         {"capOverC", L.cap / prof.cBase},
                         {"marginOverC", L.margin / prof.cBase},
                         {"crossIntegral", L.crossIntegral},
                         {"crossMethod", L.crossMethod}});
    E.json_file("multibump.json", {{"mode", "twoBlock"},
                                   {"energyOverC", r.energy / r.cBase},
                                   {"capOverC", r.cap / r.cBase},
                                   {"capName", r.capName},
                                   {"marginOverC", r.margin / r.cBase},
                                   {"lowerBoundOverC", r.lowerBound / r.cBase},
                                   {"belowCap", r.belowCap},
                                   {"aboveLower", r.aboveLower},
                                   {"R", r.R},
                                   {"mu", to_json(r.mu)},
                                   {"planar", r.planar},
                                   {"layouts", layouts},
                                   {"notes", r.notes},
                                   {"banners", theory_banners(c)}});
    E.text << "two-block estimate " << num(r.energy / r.cBase) << " c, cap " << r.capName << " = "
           << num(r.cap / r.cBase) << " c, margin " << num(r.margin / r.cBase) << " c\n";
    if (strict && !(r.belowCap && r.aboveLower)) throw BoundCheckFailure("two-block estimate outside its bounds");
  } else {
    const auto d = cross_term_decay(prof, n.crossR, n.crossDR, n.ringOrder, lp_options(c));
    E.json_file("multibump.json", {{"mode", "crossDecay"},
                                   {"R", d.R},
                                   {"dR", d.dR},
                                   {"X0", d.X0},
                                   {"X1", d.X1},
                                   {"ratio", d.ratio},
                                   {"target", d.target},
                                   {"method", d.method}});
    E.text << "cross-term ratio " << num(d.ratio) << " vs e^{-p dR} = " << num(d.target) << "\n";
  }
}

DomainPtr make_domain(const RunConfig& c) {
  const auto& n = c.numerics;
  if (n.grid == "radial") return Domain::radial(c.problem.N, n.extent, n.spacing);
  if (n.gridDim != c.problem.N)
    throw ConfigError("config key 'numerics.gridDim': box grids need gridDim = N (radial grids carry other N)");
  if (n.grid == "ball") return Domain::ball_grid(n.gridDim, n.extent, n.spacing);
  return Domain::full_grid(n.gridDim, n.extent, n.spacing);
}

SolveSpec solve_spec(const RunConfig& c) {
  const auto& n = c.numerics;
  SolveSpec s;
  s.ctx.matrix = c.matrix();
  s.ctx.domain = make_domain(c);
  s.signPattern = c.problem.signPattern;
  const int dim = s.ctx.domain->kind() == DomainKind::Radial ? c.problem.N : n.gridDim;
  for (auto sign : s.signPattern) {
    BlockSymmetry bs;
    bs.group = s.ctx.domain->kind() == DomainKind::Radial ? SymmetryGroup::trivial(dim) : make_group(c.problem, dim);
    bs.phi = sign == BlockSign::SignChanging ? SignHomomorphism::theta() : SignHomomorphism::trivial();
    s.ctx.groupData.push_back(bs);
  }
  s.init = init_from_string(n.init);
  s.seeds.assign(s.signPattern.size(), BlockSeed{{}, n.seedR});
  s.maxIters = n.maxIters;
  s.tolGrad = n.tolGrad;
  s.alphaMax = n.alphaMax;
  s.seed = n.seed;
  return s;
}

json solve_json(const SolveResult& r) {
  json signs = json::array();
  for (const auto& s : r.signReport)
    signs.push_back({{"class", to_string(s.cls)}, {"min", s.min}, {"max", s.max}, {"nonradiality", s.nonradiality}});
  json checks = json::array();
  for (const auto& b : r.bounds.checks)
    checks.push_back({{"name", b.name}, {"target", b.target}, {"achieved", b.achieved}, {"margin", b.margin},
                      {"pass", b.pass}});
  json mus = json::array();
  for (const auto& m : r.mu) mus.push_back(m.mu);
  return {{"energy", r.energy},
          {"energyOverC", r.energy / r.cBase},
          {"normSqTotal", r.normSqTotal},
          {"blockNormSq", to_json(r.blockNormSq)},
          {"nehariResiduals", to_json(r.nehariResiduals)},
          {"identityGap", r.identityGap},
          {"converged", r.converged},
          {"stopReason", r.stopReason},
          {"iterations", r.iterations},
          {"gradNorm", r.gradNorm},
          {"equivarianceResidual", r.equivarianceResidual},
          {"reseeds", r.reseeds},
          {"mu", mus},
          {"cBase", r.cBase},
          {"blockLevels", to_json(r.blockLevels)},
          {"signReport", signs},
          {"bounds", {{"nontrivial", r.bounds.nontrivial}, {"message", r.bounds.message}, {"checks", checks}}},
          {"banners", r.banners}};
}

void task_minimize(Emitter& E, bool strict) {
  const auto spec = solve_spec(E.cfg);
  const auto r = minimize(spec);
  E.json_file("minimize.json", solve_json(r));
  std::ostringstream trace;
  trace << "iter,energy,grad_norm,alpha\n";
  for (const auto& t : r.trace) trace << t.iter << "," << num(t.energy) << "," << num(t.gradNorm) << "," << num(t.alpha) << "\n";
  E.csv_file("minimize_trace.csv", "minimize_trace(iter,energy,grad_norm,alpha)", trace.str());
  if (E.wants("csv")) {
    std::ostringstream f;
    write_field_csv(f, r.field, std::string("cnls ") + kToolVersion + " config " + E.hash);
    E.file("field.csv", f.str());
  }
  if (E.wants("binary")) {
    std::ostringstream f(std::ios::binary);
    write_field_binary(f, r.field, std::stoull(E.hash, nullptr, 16));
    E.file("field.bin", f.str());
  }
  for (const auto& b : r.banners) E.text << "NOTE: " << b << "\n";
  E.text << "energy " << num(r.energy / r.cBase) << " c after " << r.iterations << " iterations (" << r.stopReason
         << ")\n";
  for (const auto& b : r.bounds.checks) E.text << (b.pass ? "  pass " : "  FAIL ") << b.name << "\n";
  if (!r.bounds.nontrivial) E.text << "  " << r.bounds.message << "\n";
  if (strict && !r.bounds.pass()) throw BoundCheckFailure("bound checks failed under --strict");
}

void task_sweep(Emitter& E, int threads) {
  const auto& c = E.cfg;
  SweepSpec s;
  s.matrix = c.matrix();
  s.signPattern = c.problem.signPattern;
  s.epsilons = c.numerics.epsilons;
  s.mode = sweep_mode_from_string(c.numerics.sweepMode);
  s.spacing = c.numerics.sweepSpacing;
  s.seedFraction = c.numerics.seedFraction;
  s.solver.tolGrad = c.numerics.tolGrad;
  s.solver.maxIters = c.numerics.maxIters;
  s.solver.alphaMax = c.numerics.alphaMax;
  s.solver.seed = c.numerics.seed;
  s.threads = threads;
  if (c.problem.N != 2) throw ConfigError("config key 'problem.N': the sweep runs on planar balls (N = 2)");
  const auto run = epsilon_sweep(s);
  std::ostringstream csv;
  csv << "eps,energy,peakSep,peakSepOverEps,bdryDistOverEps,profileDelta,oracleDistance,ok\n";
  json pts = json::array();
  for (const auto& p : run.points) {
    csv << num(p.eps) << "," << num(p.result.energy) << "," << num(p.peakSep) << "," << num(p.peakSepOverEps) << ","
        << num(p.bdryDistOverEps) << "," << num(p.profileDelta) << "," << num(p.oracleDistance) << ","
        << (p.ok ? 1 : 0) << "\n";
    pts.push_back({{"eps", p.eps}, {"ok", p.ok}, {"error", p.error}, {"solve", p.ok ? solve_json(p.result) : json()}});
  }
  E.csv_file("sweep.csv", "sweep(eps,energy,peakSep,peakSepOverEps,bdryDistOverEps,profileDelta,oracleDistance,ok)",
             csv.str());
  E.json_file("sweep.json", {{"mode", to_string(run.mode)},
                             {"classification", run.classification},
                             {"cauchyDecreasing", run.cauchyDecreasing},
                             {"separationGrowth", run.separationGrowth},
                             {"boundaryGrowth", run.boundaryGrowth},
                             {"oracleDistance", run.oracleDistance},
                             {"points", pts}});
  E.text << "sweep classification: " << run.classification << "\n";
}

void task_report(Emitter& E, bool strict) {
  const auto& c = E.cfg;
  const auto m = c.matrix();
  const auto prof = profile_of(c);
  json mus = json::array();
  std::vector<double> mu;
  for (int h = 0; h < m.blockCount(); ++h) {
    const auto r = compute_mu(m, h, mu_options(c));
    mu.push_back(r.mu);
    mus.push_back(mu_json(r));
  }
  double lower = 0;
  for (int h = 0; h < m.blockCount(); ++h)
    lower += (m.signs[h] == BlockSign::Positive ? 1.0 : 2.0) * mu[h] * prof.cBase;
  std::vector<int> bumps;
  for (auto s : m.signs) bumps.push_back(s == BlockSign::Positive ? 1 : 2);
  const double S = Sphi_trivial(prof);
  const auto d = compute_dphi_upper(prof, bumps);
  const auto B2 = validate_B2(m);
  const auto B3 = check_B3(m, compute_Cphi(d.value, S, m.p));
  json j = {{"cBase", prof.cBase},
            {"normOmegaSq", prof.normH1sq},
            {"mu", mus},
            {"lowerBoundOverC", lower / prof.cBase},
            {"Sphi", S},
            {"dphiUpper", d.value},
            {"Cphi", compute_Cphi(d.value, S, m.p)},
            {"B2", B2.summary.pass},
            {"B3", B3.pass},
            {"banners", theory_banners(c)}};
  E.json_file("report.json", j);
  for (const auto& b : theory_banners(c)) E.text << "NOTE: " << b << "\n";
  E.text << "c = " << num(prof.cBase) << "\n";
  for (std::size_t h = 0; h < mu.size(); ++h) E.text << "mu_" << h + 1 << " = " << num(mu[h]) << "\n";
  E.text << "lower bound sum_{Q+} mu_h c + 2 sum_{Q-} mu_k c = " << num(lower / prof.cBase) << " c\n";
  E.text << "B2 " << (B2.summary.pass ? "pass" : "FAIL") << ", B3 " << (B3.pass ? "pass" : "FAIL") << "\n";
  if (strict && (!B2.summary.pass || !B3.pass)) throw BoundCheckFailure("structural conditions failed under --strict");
}

void write_error(const fs::path& dir, const std::string& hash, const std::string& kind, const std::string& msg,
                 int code) {
  json j;
  j["toolVersion"] = kToolVersion;
  j["configHash"] = hash;
  j["status"] = "error";
  j["kind"] = kind;
  j["exitCode"] = code;
  j["message"] = msg;
  try {
    fs::create_directories(dir);
    write_file_atomic((dir / "error.json").string(), j.dump(2) + "\n");
  } catch (const std::exception&) {
  }
}

}  // namespace

int run(RunConfig cfg, const RunOptions& opt, std::ostream& log) {
  if (!opt.task.empty()) {
    if (!cfg.task.empty() && cfg.task != opt.task) {
      log << "error: task '" << opt.task << "' does not match the config task '" << cfg.task << "'\n";
      write_error(opt.outDir ? fs::path(*opt.outDir) : fs::path(cfg.output.directory), "", "config",
                  "task mismatch", kExitConfig);
      return kExitConfig;
    }
    cfg.task = opt.task;
  }
  if (opt.seed) cfg.numerics.seed = *opt.seed;
  if (opt.outDir) cfg.output.directory = *opt.outDir;
  Emitter E;
  E.dir = cfg.output.directory;
  try {
    validate_config(cfg);
    if (cfg.task.empty()) throw ConfigError("config key 'task': no task given");
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    write_error(E.dir, "", "config", e.what(), kExitConfig);
    return kExitConfig;
  }
  E.cfg = cfg;
  E.hash = hex64(config_hash(cfg));
  try {
    fs::create_directories(E.dir);
    E.file("config.effective.toml", "# cnls " + std::string(kToolVersion) + " config " + E.hash + "\n" +
                                        effective_config_toml(cfg));
    for (const auto& b : theory_banners(cfg)) log << "NOTE: " << b << "\n";
    const auto& t = cfg.task;
    if (t == "validate") task_validate(E, opt.strict);
    else if (t == "mu") task_mu(E);
    else if (t == "groundstate") task_groundstate(E);
    else if (t == "interaction") task_interaction(E);
    else if (t == "multibump") task_multibump(E, opt.strict);
    else if (t == "minimize") task_minimize(E, opt.strict);
    else if (t == "sweep") task_sweep(E, opt.threads);
    else task_report(E, opt.strict);
    if (E.wants("txt"))
      E.file(t + ".txt", "cnls " + std::string(kToolVersion) + " config " + E.hash + "\ntask " + t + "\n" + E.text.str());
    log << E.text.str();
    log << "wrote " << E.written.size() << " files to " << E.dir.string() << "\n";
    return kExitOk;
  } catch (const BoundCheckFailure& e) {
    if (E.wants("txt"))
      E.file(cfg.task + ".txt", "cnls " + std::string(kToolVersion) + " config " + E.hash + "\ntask " + cfg.task +
                                    "\n" + E.text.str());
    log << E.text.str() << "bound-check failure: " << e.what() << "\n";
    write_error(E.dir, E.hash, "boundCheck", e.what(), kExitBoundFailure);
    return kExitBoundFailure;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    write_error(E.dir, E.hash, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    write_error(E.dir, E.hash, "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << "\n";
    write_error(E.dir, E.hash, "internal", e.what(), kExitInternal);
    return kExitInternal;
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Coupled nonlinear Schroedinger systems: ground states, Nehari minimization and bound checks"};
  std::string task, configPath;
  RunOptions opt;
  unsigned long long seed = 0;
  std::string outDir;
  app.add_option("task", task, "validate | mu | groundstate | interaction | multibump | minimize | sweep | report")
      ->required()
      ->check(CLI::IsMember(known_tasks()));
  app.add_option("--config", configPath, "TOML configuration file")->required();
  app.add_flag("--strict", opt.strict, "exit with status 4 when a bound or structural check fails");
  auto* seedOpt = app.add_option("--seed", seed, "override numerics.seed");
  auto* outOpt = app.add_option("--out", outDir, "override output.directory");
  app.add_option("--threads", opt.threads, "concurrent solves in sweeps (0: one per epsilon)")
      ->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  opt.task = task;
  if (*seedOpt) opt.seed = seed;
  if (*outOpt) opt.outDir = outDir;
  RunConfig cfg;
  try {
    cfg = load_config(configPath);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    write_error(opt.outDir ? fs::path(*opt.outDir) : fs::path("cnls-out"), "", "config", e.what(), kExitConfig);
    return kExitConfig;
  }
  return run(std::move(cfg), opt, std::cout);
}

}  // namespace cnls
