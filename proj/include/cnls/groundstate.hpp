#pragma once

#include <vector>

namespace cnls {

struct GroundStateOptions {
  double rMax = 30.0;
  // Upper limit for the radius where the shooting trajectory hands over to the decaying tail.
  double rStitch = 20.0;
  double step = 1e-3;
  // Tolerated relative split between the two bracketing trajectories before the tail takes over.
  double reliability = 1e-7;
};

// Positive radial ground state of -w'' - (N-1)/r w' + w = w^{2p-1}, tabulated on r_k = k*step.
struct RadialProfile {
  int N = 1;
  double p = 2.0;
  double w0 = 0.0;
  double step = 0.0;
  double rMax = 0.0;
  double rStitch = 0.0;
  double tailAmplitude = 0.0;       // w = A r^{-nu} K_|nu|(r), nu = (N-2)/2, beyond rStitch
  double asymptoticConstant = 0.0;  // lim w(r) r^{(N-1)/2} e^r
  double normH1sq = 0.0;            // ||w||^2 = int |grad w|^2 + w^2
  double norm2p = 0.0;              // int |w|^{2p}
  double cBase = 0.0;               // (p-1)/(2p) ||w||^2
  double odeResidual = 0.0;         // sup over nodes of the ODE residual
  std::vector<double> w;
  std::vector<double> dw;

  double value(double r) const;
  double derivative(double r) const;
  double radius(std::size_t k) const { return k * step; }
  std::size_t nodes() const { return w.size(); }
};

RadialProfile solve_ground_state(int N, double p, const GroundStateOptions& opt = {});

// Pointwise residual of the radial ODE at every tabulated node (fourth-order differences of w').
std::vector<double> radial_residual(const RadialProfile& prof);

// Throws ConfigError unless N >= 1 and 1 < p < N/(N-2) (no upper limit for N <= 2).
void check_exponent(int N, double p);

}  // namespace cnls

namespace cnls {

// Outcome of one shot from w(0) = w0: +1 crosses zero, -1 turns upward, 0 neither before rMax.
int shooting_verdict(int N, double p, double w0, const GroundStateOptions& opt = {});

// int omega^a(x) omega^b(x - delta e) dx, by cylindrical quadrature about the separation axis.
double pair_power_integral(const RadialProfile& prof, double a, double b, double delta);
// Psi(delta): the case a = 2p - 1, b = 1.
double interaction_psi(const RadialProfile& prof, double delta);

// H^1 inner product of omega(. - a) and omega(. - b); equals Psi(|b - a|) because omega solves its equation.
double h1_cross_term(const RadialProfile& prof, const std::vector<double>& a, const std::vector<double>& b);

struct InteractionKernel {
  int N = 1;
  std::vector<double> delta;
  std::vector<double> psi;
  double fitLo = 8.0, fitHi = 16.0;
  double fittedRate = 0.0;  // minus the slope of log(Psi delta^{(N-1)/2}) on [fitLo, fitHi]
  double fittedB = 0.0;     // b with the rate pinned to 1
  double fitResidual = 0.0; // rms deviation of the pinned fit in log space

  // Linear interpolation of log Psi on the table; exact at table nodes.
  double operator()(double d) const;
};

InteractionKernel build_interaction_kernel(const RadialProfile& prof, double deltaMax = 20.0, double spacing = 0.25,
                                           double fitLo = 8.0, double fitHi = 16.0);

}  // namespace cnls
