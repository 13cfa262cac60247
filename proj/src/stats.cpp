#include "randlr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace randlr::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double pooled_stddev(const std::vector<std::vector<double>>& groups) {
  double num = 0.0;
  double dof = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    const double s = stddev(g);
    num += static_cast<double>(g.size() - 1) * s * s;
    dof += static_cast<double>(g.size() - 1);
  }
  return dof > 0.0 ? std::sqrt(num / dof) : 0.0;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double ks_distance_normal(std::vector<double> xs, double mu, double sigma) {
  if (xs.empty()) return 1.0;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf((xs[i] - mu) / sigma);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace randlr::stats
