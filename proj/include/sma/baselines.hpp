#pragma once

#include "sma/cqf.hpp"
#include "sma/mechanism.hpp"
#include "sma/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace sma {

enum class IcKind { aic, bic };

enum class MnarMechanism { logistic, loglog };

/// Quantile information criteria 2n*log(G_m) + pen*|I_m| with G_m the
/// candidate's fitting objective (asymmetric-Laplace pseudo-likelihood form),
/// pen = 2 for AIC and log(n) for BIC.
Vec ic_scores(const std::vector<CqfCandidateFit>& fits,
              const std::vector<std::vector<int>>& candidates, int n, IcKind kind);

/// Vertex on the candidate minimizing the score (ties -> smaller index).
SimplexWeights ic_vertex_weights(const Vec& scores);

/// softmax(-scores / 2) with max subtraction.
SimplexWeights smoothed_ic_weights(const Vec& scores);

struct CvmaResult {
  SimplexWeights weights{Vec::Ones(1)};
  Vec fold_losses;  // pooled held-out loss at the chosen weights, per fold
  bool fold_merge_warning = false;
};

/// 5-fold cross-validation averaging without regularization: candidates are
/// refit on each training split, the held-out MNAR-adjusted quantile loss is
/// pooled and minimized over the simplex.
CvmaResult cvma_weights(const Dataset& data, const TiltedLaw& law,
                        const std::vector<std::vector<int>>& candidates,
                        const QuantileLevel& tau, int folds, std::uint64_t seed,
                        const CqfOptions& opts = {});

struct IpwResult {
  std::vector<CqfCandidateFit> refits;  // IPW candidate fits used for prediction
  SimplexWeights weights{Vec::Ones(1)};
  int clip_count = 0;
  bool warning = false;
};

/// Candidate refits by inverse-probability-weighted check loss (respondents
/// only, weights 1/pi clipped to [1, 100]) followed by the penalized simplex
/// weight problem.
IpwResult ipw_weights_from_propensity(const Dataset& data, const Vec& pihat,
                                      const std::vector<std::vector<int>>& candidates,
                                      const QuantileLevel& tau, double phi_n,
                                      const CqfOptions& opts = {});

/// Propensities from the fitted MNAR mechanism (needs observed y, so only
/// respondent entries are meaningful).
Vec mnar_propensity(const Dataset& data, const MechanismParams& combined,
                    const std::vector<int>& largest_candidate);

IpwResult ipw_mnar_weights(const Dataset& data, const MechanismParams& theta_hat,
                           const std::vector<int>& largest_candidate,
                           const std::vector<std::vector<int>>& candidates,
                           const QuantileLevel& tau, double phi_n, const CqfOptions& opts = {});

struct MarPropensityFit {
  Vec theta;          // intercept first, then screened covariates
  Vec pihat;          // fitted response probabilities
  double lambda = 0;  // selected penalty level
  bool ridge_fallback = false;
};

/// L1-penalized logistic propensity under a MAR specification on the
/// screened covariates, tuned by BIC over a 10-point ladder; falls back to
/// ridge under separation.
MarPropensityFit mar_propensity(const Dataset& data, const std::vector<int>& screened);

IpwResult ipw_mar_weights(const Dataset& data, const std::vector<int>& screened,
                          const std::vector<std::vector<int>>& candidates,
                          const QuantileLevel& tau, double phi_n, const CqfOptions& opts = {});

struct TrueMechanismFit {
  Vec theta;  // (coef x1, coef x2, intercept, coef on the y-term)
  bool converged = false;
};

/// Maximum likelihood for the true response-mechanism family on complete
/// simulated data (needs the pre-missingness responses).
TrueMechanismFit fit_true_mechanism(const Dataset& data, const Vec& y_complete,
                                    MnarMechanism kind);

/// log odds of nonresponse under the fitted true mechanism, used as the
/// conditional tilt for the oracle-mechanism averaging procedure.
std::function<double(int, double)> true_mechanism_log_tilt(const Dataset& data,
                                                           const TrueMechanismFit& fit,
                                                           MnarMechanism kind);

}  // namespace sma
