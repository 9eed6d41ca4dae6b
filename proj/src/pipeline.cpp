#include "sma/pipeline.hpp"

#include "sma/core.hpp"

#include <cmath>

namespace sma {

ScreeningMode screening_from_string(const std::string& s) {
  if (s == "dcsis") return ScreeningMode::dcsis;
  if (s == "ps") return ScreeningMode::ps;
  if (s == "gps") return ScreeningMode::gps;
  throw config_error("unknown screening mode '" + s + "' (expected dcsis, ps or gps)");
}

std::string to_string(ScreeningMode m) {
  switch (m) {
    case ScreeningMode::dcsis: return "dcsis";
    case ScreeningMode::ps: return "ps";
    default: return "gps";
  }
}

PreparedCandidates prepare_candidates(const Dataset& data, const PipelineOptions& opts) {
  PreparedCandidates prep;
  const int d_n = screen_budget(data.n());

  switch (opts.screening) {
    case ScreeningMode::dcsis: {
      const ScreeningResult sr = dcsis_screen(data, opts.threads);
      prep.screened = sr.ordered_indices;
      break;
    }
    case ScreeningMode::ps: {
      prep.screened = post_selection(data, d_n, opts.gvi_threshold).indices;
      break;
    }
    case ScreeningMode::gps: {
      const PostSelectResult gps = greedy_post_selection(data, d_n, opts.gvi_threshold);
      prep.screened = gps.indices;
      prep.gps_hit_cap = gps.hit_iteration_cap;
      break;
    }
  }
  prep.nested = nested_from_indices(prep.screened);
  prep.basis = sir_basis(data, prep.screened, opts.sir_dimension, opts.sir_slices);
  return prep;
}

std::shared_ptr<ConditionalLaw> make_conditional_law(const Dataset& data,
                                                     const ReductionBasis& basis,
                                                     const PipelineOptions& opts,
                                                     double* mean_acceptance, int* fallbacks) {
  if (opts.backend == Backend::kernel)
    return std::make_shared<KernelConditionalLaw>(data, basis, opts.kernel);
  SamplerConfig scfg = opts.sampler;
  scfg.seed = mix_seed(opts.seed, 0x5ead);
  const ConditionalDraws draws = sample_conditional(data, basis, scfg, opts.kernel, opts.threads);
  if (mean_acceptance != nullptr) *mean_acceptance = draws.acceptance_rates.mean();
  if (fallbacks != nullptr) *fallbacks = draws.fallback_count;
  return std::make_shared<SampledConditionalLaw>(draws);
}

SmaModel fit_sma(const Dataset& data, const PipelineOptions& opts,
                 const PreparedCandidates& prep, std::shared_ptr<ConditionalLaw> law) {
  SmaModel model;
  model.prep = prep;

  MechanismOptions mopts = opts.mechanism;
  mopts.threads = opts.threads;
  model.mechanism =
      fit_mechanism(data, *law, prep.nested.index_sets, mopts, &prep.screened);

  CqfOptions copts = opts.cqf;
  copts.threads = opts.threads;
  const QuantileLevel tau(opts.tau);
  const double gamma_hat = model.mechanism.combined.gamma;
  const TiltedLaw tilted = TiltedLaw::from_gamma(*law, gamma_hat);
  model.cqf =
      fit_cqf(data, tilted, prep.nested.index_sets, gamma_hat, tau, opts.backend, copts);
  return model;
}

SmaModel fit_sma(const Dataset& data, const PipelineOptions& opts) {
  data.validate();
  data.require_both_classes();
  const PreparedCandidates prep = prepare_candidates(data, opts);
  double accept = 0.0;
  int falls = 0;
  auto law = make_conditional_law(data, prep.basis, opts, &accept, &falls);
  SmaModel model = fit_sma(data, opts, prep, law);
  model.mean_acceptance = accept;
  model.sampler_fallbacks = falls;
  return model;
}

double predict(const SmaModel& model, const Vec& x_new) { return predict_cqf(model.cqf, x_new); }

}  // namespace sma
