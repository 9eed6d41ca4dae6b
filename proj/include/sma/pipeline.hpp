#pragma once

#include "sma/baselines.hpp"
#include "sma/condlaw.hpp"
#include "sma/cqf.hpp"
#include "sma/mechanism.hpp"
#include "sma/sampling.hpp"
#include "sma/screening.hpp"
#include "sma/types.hpp"

#include <memory>
#include <optional>

namespace sma {

enum class ScreeningMode { dcsis, ps, gps };

ScreeningMode screening_from_string(const std::string& s);
std::string to_string(ScreeningMode m);

/// Knobs for one end-to-end fit.
struct PipelineOptions {
  double tau = 0.5;
  Backend backend = Backend::sampled;
  ScreeningMode screening = ScreeningMode::dcsis;
  double gvi_threshold = std::numeric_limits<double>::quiet_NaN();  // NaN = auto
  KernelConfig kernel;
  SamplerConfig sampler;
  MechanismOptions mechanism;
  CqfOptions cqf;
  int sir_dimension = 1;
  int sir_slices = 0;  // 0 = auto
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Screened ordering, nested candidate chain, and the reduction basis.
struct PreparedCandidates {
  std::vector<int> screened;  // ordered by marginal dependence
  NestedCandidates nested;
  ReductionBasis basis;
  bool gps_hit_cap = false;
};

PreparedCandidates prepare_candidates(const Dataset& data, const PipelineOptions& opts);

/// Fitted two-stage model: mechanism averaging then CQF averaging.
struct SmaModel {
  PreparedCandidates prep;
  MechanismFit mechanism;
  CqfFit cqf;
  double mean_acceptance = 0.0;  // sampled backend diagnostics
  int sampler_fallbacks = 0;
};

/// Builds the conditional law for the chosen backend.
std::shared_ptr<ConditionalLaw> make_conditional_law(const Dataset& data,
                                                     const ReductionBasis& basis,
                                                     const PipelineOptions& opts,
                                                     double* mean_acceptance = nullptr,
                                                     int* fallbacks = nullptr);

SmaModel fit_sma(const Dataset& data, const PipelineOptions& opts);
SmaModel fit_sma(const Dataset& data, const PipelineOptions& opts,
                 const PreparedCandidates& prep, std::shared_ptr<ConditionalLaw> law);

double predict(const SmaModel& model, const Vec& x_new);

}  // namespace sma
