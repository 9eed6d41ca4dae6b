#pragma once

#include "sma/core.hpp"
#include "sma/screening.hpp"
#include "sma/types.hpp"

#include <span>

namespace sma {

struct SamplerConfig {
  int total_iterations = 500;
  int keep_last = 50;
  double proposal_sd_scale = 1.0;  // multiplies the smoothing bandwidth
  std::uint64_t seed = 0;
  int max_components = 256;  // per-unit mixture truncation for chain targets

  void validate() const {
    if (keep_last < 1 || keep_last > total_iterations)
      throw config_error("sampler: keep_last must lie in [1, total_iterations]");
    if (!(proposal_sd_scale > 0.0)) throw config_error("sampler: proposal sd scale must be positive");
  }
};

struct ConditionalDraws {
  Mat draws;             // n x L, row i approximates y | x_i, r=1
  Vec acceptance_rates;  // per unit, in [0,1]
  int fallback_count = 0;
};

/// Joint kernel density over (reduced predictor, y) built from respondents.
/// Evaluations are unnormalized; only ratios are consumed downstream.
class JointKde {
 public:
  JointKde(const Dataset& data, const ReductionBasis& basis, const KernelConfig& kcfg);

  /// log f(y, x, r=1) up to an additive constant, any x.
  double log_density(const Vec& x_full, double y) const;

  /// log f(y | x_i, r=1) up to a constant, for a dataset row.
  double log_conditional(int unit, double y) const;

  int respondent_count() const { return static_cast<int>(resp_y_.size()); }
  double bandwidth() const { return h_; }
  double y_sd() const { return y_sd_; }

  /// Mixture component log-weights (x-part kernels) at a reduced,
  /// standardized point; used by the conditional sampler.
  Vec component_logweights(const Vec& z_std) const;
  Vec unit_reduced_std(int unit) const { return z_std_.row(unit); }
  const Vec& respondent_y() const { return resp_y_vec_; }

 private:
  ReductionBasis basis_;
  Standardizer std_z_;
  Mat z_std_;          // all units, reduced & standardized
  Mat resp_z_;         // respondents only
  Vec resp_y_vec_;     // raw y for respondents
  std::vector<double> resp_y_;
  double h_ = 0.0;     // shared bandwidth in standardized coordinates
  double y_mean_ = 0.0, y_sd_ = 1.0;
};

/// Per-unit random-walk Metropolis chains in y targeting the KDE
/// conditional; deterministic given (seed, unit index).
ConditionalDraws sample_conditional(const Dataset& data, const ReductionBasis& basis,
                                    const SamplerConfig& cfg, const KernelConfig& kcfg,
                                    int threads = 1);

/// log of the tilted mean L^-1 sum exp(gamma * y_l), overflow-safe.
double m1_sampled(std::span<const double> draws_i, double gamma);

/// Exponentially tilted mean of check losses at residuals y_l - fitted.
double m0_sampled(std::span<const double> draws_i, double gamma, double fitted,
                  const QuantileLevel& tau);

}  // namespace sma
