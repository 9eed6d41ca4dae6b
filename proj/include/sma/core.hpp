#pragma once

#include "sma/types.hpp"

#include <span>

namespace sma {

/// Check loss rho_tau(u) = u * (tau - 1{u <= 0}).
inline double check_loss(double u, const QuantileLevel& tau) {
  return u * (tau.tau - (u <= 0.0 ? 1.0 : 0.0));
}

/// Subgradient of the check loss at u (tau - 1 chosen at the kink).
inline double check_loss_slope(double u, const QuantileLevel& tau) {
  return tau.tau - (u <= 0.0 ? 1.0 : 0.0);
}

/// Standard multivariate Gaussian density (2*pi)^(-d/2) exp(-|u|^2/2).
double gaussian_kernel(const Vec& u);
double log_gaussian_kernel(const Vec& u);

/// Bandwidth rule scale * n^exponent * data_sd.
double bandwidth(double data_sd, int n, const KernelConfig& cfg = KernelConfig{});

/// Sample distance correlation (V-statistic form) between the rows of a
/// (n x q, q >= 1) and b (n). Throws on constant input.
double distance_correlation(const Mat& a, const Vec& b);
double distance_correlation(const Vec& a, const Vec& b);

/// Euclidean projection onto the probability simplex.
SimplexWeights project_to_simplex(const Vec& v);

double log_sum_exp(std::span<const double> v);
double log_mean_exp(std::span<const double> v);

/// Sample standard deviation (n-1 denominator).
double sample_sd(const Vec& v);
double sample_mean(const Vec& v);

/// Per-column centering/scaling used in front of every kernel smoother.
struct Standardizer {
  Vec mean;
  Vec sd;

  static Standardizer fit(const Mat& x);
  Mat apply(const Mat& x) const;
  Vec apply_row(const Vec& x) const;
};

}  // namespace sma
