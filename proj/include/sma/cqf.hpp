#pragma once

#include "sma/condlaw.hpp"
#include "sma/types.hpp"

#include <utility>
#include <vector>

namespace sma {

/// Candidate quantile coefficients; beta[0] is the intercept.
struct CqfParams {
  Vec beta;
};

struct CqfCandidateFit {
  CqfParams params;
  double objective = 0.0;  // value of the fitting criterion at the solution
  bool converged = false;
};

struct CqfOptions {
  double beta_cap = 100.0;
  double phi_n = 0.0;  // <= 0 picks log(n)
  int subgradient_iters = 2000;
  int threads = 1;
};

struct CqfFit {
  std::vector<CqfCandidateFit> per_candidate;
  std::vector<std::vector<int>> candidates;
  SimplexWeights weights{Vec::Ones(1)};
  double tau = 0.5;
  double phi_n = 0.0;
  double gamma_hat = 0.0;
  int p = 0;  // ambient covariate dimension, for prediction checks
};

double default_cqf_phi(int n);

/// Weighted check-loss minimization: min_beta sum_t w_t rho_tau(v_t - A_t beta).
/// Smoothed-Newton continuation with exact-objective polish (subgradient
/// steps and, in low dimension, active-set exchange on interpolating bases).
struct WeightedQrProblem {
  Mat A;
  Vec v;
  Vec w;
};
CqfCandidateFit weighted_qr_fit(const WeightedQrProblem& prob, const QuantileLevel& tau,
                                double beta_cap = 100.0);

/// Candidate design including intercept, restricted to the index set.
Mat cqf_design(const Dataset& data, const std::vector<int>& candidate);

/// MNAR-adjusted candidate fit: respondents carry their own check loss,
/// nonrespondents the tilted conditional expectation of it.
CqfCandidateFit fit_cqf_candidate(const Dataset& data, const TiltedLaw& law,
                                  const std::vector<int>& candidate, const QuantileLevel& tau,
                                  const CqfOptions& opts = {});

/// Candidate predictions mu_i^(m) for all units, one column per candidate.
Mat candidate_predictions(const Dataset& data, const std::vector<CqfCandidateFit>& fits,
                          const std::vector<std::vector<int>>& candidates);

/// Penalized MNAR-adjusted quantile criterion at the given weights.
double ql_criterion(const Dataset& data, const TiltedLaw& law, const Mat& mu,
                    const std::vector<std::vector<int>>& candidates,
                    const SimplexWeights& weights, const QuantileLevel& tau, double phi_n);

/// Minimizes the QL criterion over the simplex; sampled backends use
/// projected subgradients from the uniform start, kernel backends the same
/// multi-start derivative-free scheme as the mechanism stage.
SimplexWeights optimize_cqf_weights(const Dataset& data, const TiltedLaw& law, const Mat& mu,
                                    const std::vector<std::vector<int>>& candidates,
                                    const QuantileLevel& tau, double phi_n, Backend backend,
                                    int subgradient_iters = 2000);

/// Full CQF stage given the mechanism's mixed tilt.
CqfFit fit_cqf(const Dataset& data, const TiltedLaw& law,
               const std::vector<std::vector<int>>& candidates, double gamma_hat,
               const QuantileLevel& tau, Backend backend, const CqfOptions& opts = {});

/// Weighted conditional-quantile prediction at a new covariate vector.
double predict_cqf(const CqfFit& fit, const Vec& x_new);

/// Sample analogues of both sides of the moment identity linking the full
/// check risk to its respondent/nonrespondent decomposition; audit only.
std::pair<double, double> check_identity_diagnostic(const Dataset& data, const TiltedLaw& law,
                                                    const QuantileLevel& tau,
                                                    const Vec& mu_true, const Vec& eps_true);

}  // namespace sma
