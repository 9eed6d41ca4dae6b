#pragma once

#include "sma/types.hpp"

#include <functional>

namespace sma {

struct NelderMeadResult {
  Vec x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Derivative-free simplex search minimizing f from x0.
NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& x0,
                             double init_step = 0.5, int max_iter = 0, double ftol = 1e-10);

/// Golden-section minimization of a univariate function on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol = 1e-6, int max_iter = 80);

/// Damped Newton for logistic regression of z on X with a fixed offset:
/// minimizes mean over i of -[z_i * eta_i - log(1 + exp(eta_i))],
/// eta_i = X.row(i) * beta + offset_i. Returns the coefficient vector.
struct LogisticFit {
  Vec beta;
  double nll = 0.0;
  bool converged = false;
};
LogisticFit logistic_newton_offset(const Mat& X, const IntVec& z, const Vec& offset,
                                   int max_iter = 100, double tol = 1e-10);

/// Stable log(1 + exp(x)).
inline double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

struct SubgradientResult {
  Vec w;
  double f = 0.0;
};

/// Deterministic preference among candidate simplex optima (scores to be
/// minimized): clearly better score wins; within tol, the smaller weighted
/// size wins; then the lexicographically larger weight vector.
bool prefer_simplex_point(const Vec& a, double fa, const Vec& b, double fb, const Vec& sizes,
                          double tol = 1e-8);

/// Projected subgradient descent over the probability simplex with
/// Polyak-style steps built from the running best value. fg must return the
/// objective and write a subgradient into g.
SubgradientResult projected_subgradient_simplex(
    const std::function<double(const Vec&, Vec&)>& fg, const Vec& w0, int iters = 2000);

}  // namespace sma
