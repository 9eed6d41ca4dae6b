#pragma once

#include "sma/condlaw.hpp"
#include "sma/types.hpp"

#include <vector>

namespace sma {

/// Logistic-MNAR propensity parameters: phi[0] is the intercept, the
/// remaining slots follow the candidate's index order; gamma tilts on y.
struct MechanismParams {
  Vec phi;
  double gamma = 0.0;
};

struct MechanismCandidateFit {
  MechanismParams params;
  bool converged = false;
  double nll = 0.0;  // mean negative log-likelihood at the fit
};

struct MechanismOptions {
  double gamma_cap = 5.0;  // box constraint on the tilt coefficient
  int gamma_grid = 41;
  double lambda_n = 0.0;  // <= 0 picks sqrt(n) * log(n)
  int threads = 1;
};

struct MechanismFit {
  std::vector<MechanismCandidateFit> per_candidate;
  std::vector<std::vector<int>> candidates;
  SimplexWeights weights{Vec::Ones(1)};
  MechanismParams combined;  // over the largest candidate, zero-padded mix
  double lambda_n = 0.0;
  bool instrument_warning = false;
};

double default_mechanism_lambda(int n);

/// Design matrix with intercept column followed by the candidate covariates.
Mat candidate_design(const Dataset& data, const std::vector<int>& candidate);

/// Mean negative log-likelihood of one candidate at the given parameters.
double candidate_nll(const Dataset& data, const ConditionalLaw& law,
                     const std::vector<int>& candidate, const MechanismParams& params);

/// Same likelihood with an externally supplied m1 vector (frozen offset).
double candidate_nll_with_offset(const Dataset& data, const Mat& design, const Vec& m1_values,
                                 const Vec& phi);

/// Profile fit: gamma on a grid refined by golden section, inner convex
/// logistic problem in phi solved by damped Newton with offset m1(.;gamma).
MechanismCandidateFit fit_mechanism_candidate(const Dataset& data, const ConditionalLaw& law,
                                              const std::vector<int>& candidate,
                                              const MechanismOptions& opts = {});

/// Penalized semiparametric likelihood of the weighted mechanism.
double sl_criterion(const Dataset& data, const ConditionalLaw& law,
                    const std::vector<MechanismCandidateFit>& fits,
                    const std::vector<std::vector<int>>& candidates,
                    const SimplexWeights& weights, double lambda_n);

/// Maximizes the SL criterion over the simplex (multi-start derivative-free
/// search in a softmax reparameterization, plus exact vertices).
SimplexWeights optimize_mechanism_weights(const Dataset& data, const ConditionalLaw& law,
                                          const std::vector<MechanismCandidateFit>& fits,
                                          const std::vector<std::vector<int>>& candidates,
                                          double lambda_n);

/// Zero-pads each candidate's phi to the largest candidate and mixes.
MechanismParams combine_theta(const std::vector<MechanismCandidateFit>& fits,
                              const std::vector<std::vector<int>>& candidates,
                              const SimplexWeights& weights);

/// Full stage: candidate fits, weight selection, combined estimate.
/// smoothing_columns, when given, drives the instrument heuristic warning.
MechanismFit fit_mechanism(const Dataset& data, const ConditionalLaw& law,
                           const std::vector<std::vector<int>>& candidates,
                           const MechanismOptions& opts = {},
                           const std::vector<int>* smoothing_columns = nullptr);

/// Sample KL divergence between two mechanism parameterizations, averaged
/// over units; probabilities are clipped before the logs.
double kl_diagnostic(const Dataset& data, const ConditionalLaw& law,
                     const MechanismParams& params, const std::vector<int>& indices,
                     const MechanismParams& reference, const std::vector<int>& ref_indices);

}  // namespace sma
