#pragma once

#include <span>
#include <vector>

namespace randlr::stats {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> xs);
/// sqrt(sum (n_i - 1) s_i^2 / sum (n_i - 1)) over the groups.
double pooled_stddev(const std::vector<std::vector<double>>& groups);
/// Kolmogorov-Smirnov distance between the sample and N(mu, sigma^2).
double ks_distance_normal(std::vector<double> xs, double mu, double sigma);
double normal_cdf(double z);

}  // namespace randlr::stats
