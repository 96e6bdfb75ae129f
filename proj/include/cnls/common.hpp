#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnls {

inline constexpr const char* kToolVersion = "0.1.0";

// Raised for malformed input: bad config keys, inconsistent matrices, bad sizes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an iteration or quadrature cannot deliver the requested accuracy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Surface measure of the unit sphere S^{n-1} in R^n (n >= 1; |S^0| = 2).
inline double sphere_area(int n) {
  return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

// Odd power |u|^{q-1} u, defined as 0 at u = 0 even when q < 1.
inline double signed_pow(double u, double q) {
  if (u == 0.0) return 0.0;
  return u > 0.0 ? std::pow(u, q) : -std::pow(-u, q);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LinearFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cnls
