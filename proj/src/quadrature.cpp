#include "nitsche/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace nitsche {

namespace {

LineRule compute_gauss(int n) {
  // Newton iteration on Legendre roots over [-1,1], mapped to [0,1].
  LineRule rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    rule.points[n - 1 - i] = 0.5 * (x + 1.0);
    rule.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

} // namespace

LineRule gauss_legendre(int npoints) {
  if (npoints < 1)
    throw Error("gauss_legendre: need at least one point");
  static std::mutex m;
  static std::map<int, LineRule> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(npoints);
  if (it == cache.end())
    it = cache.emplace(npoints, compute_gauss(npoints)).first;
  return it->second;
}

TriangleRule triangle_rule(int degree) {
  if (degree < 0)
    throw Error("triangle_rule: negative degree");
  static std::mutex m;
  static std::map<int, TriangleRule> cache;
  {
    std::lock_guard<std::mutex> lock(m);
    auto it = cache.find(degree);
    if (it != cache.end())
      return it->second;
  }
  // (s,t) in the unit square -> (x,y) = (s(1-t), t), Jacobian (1-t).
  const int n = (degree + 3) / 2;
  const LineRule g = gauss_legendre(n);
  TriangleRule rule;
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double s = g.points[i], t = g.points[j];
      const double x = s * (1.0 - t), y = t;
      const double w = g.weights[i] * g.weights[j] * (1.0 - t);
      rule.points.push_back({1.0 - x - y, x, y});
      rule.weights.push_back(w);
      total += w;
    }
  for (double& w : rule.weights)
    w /= total;
  std::lock_guard<std::mutex> lock(m);
  cache.emplace(degree, rule);
  return rule;
}

} // namespace nitsche
