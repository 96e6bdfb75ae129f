#pragma once

#include <vector>

namespace cnls {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

const GaussRule& gauss_legendre(int n);

// Composite Gauss-Legendre nodes/weights covering [a, b] with panels of width <= panel.
struct CompositeRule {
  std::vector<double> x;
  std::vector<double> w;
};

CompositeRule composite_gauss(double a, double b, double panel, int order);

// Composite Simpson weights on a uniform grid with n intervals (n even), spacing h.
std::vector<double> simpson_weights(int n, double h);

}  // namespace cnls
