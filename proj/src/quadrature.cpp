#include "cnls/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "cnls/common.hpp"

namespace cnls {

const GaussRule& gauss_legendre(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      double dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) {
        rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        break;
      }
      rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    rule.nodes[i] = x;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

CompositeRule composite_gauss(double a, double b, double panel, int order) {
  CompositeRule out;
  if (b <= a) return out;
  const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / panel - 1e-12)));
  const double width = (b - a) / panels;
  const GaussRule& g = gauss_legendre(order);
  out.x.reserve(panels * order);
  out.w.reserve(panels * order);
  for (int k = 0; k < panels; ++k) {
    const double mid = a + (k + 0.5) * width;
    for (int i = 0; i < order; ++i) {
      out.x.push_back(mid + 0.5 * width * g.nodes[i]);
      out.w.push_back(0.5 * width * g.weights[i]);
    }
  }
  return out;
}

std::vector<double> simpson_weights(int n, double h) {
  if (n < 2 || n % 2 != 0) throw NumericalError("simpson_weights: interval count must be even and >= 2");
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) {
    double c = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w[i] = c * h / 3.0;
  }
  return w;
}

LinearFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw NumericalError("least_squares_line: need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace cnls
