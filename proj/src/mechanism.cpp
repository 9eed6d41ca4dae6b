#include "sma/mechanism.hpp"

#include "sma/core.hpp"
#include "sma/optim.hpp"
#include "sma/threads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace sma {

double default_mechanism_lambda(int n) { return std::sqrt(static_cast<double>(n)) * std::log(n); }

Mat candidate_design(const Dataset& data, const std::vector<int>& candidate) {
  Mat d(data.n(), candidate.size() + 1);
  d.col(0).setOnes();
  for (size_t j = 0; j < candidate.size(); ++j) d.col(j + 1) = data.X.col(candidate[j]);
  return d;
}

double candidate_nll_with_offset(const Dataset& data, const Mat& design, const Vec& m1_values,
                                 const Vec& phi) {
  const int n = data.n();
  const Vec eta = design * phi + m1_values;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += (data.r[i] - 1.0) * eta[i] + log1pexp(eta[i]);
  return s / n;
}

namespace {

Vec m1_vector(const ConditionalLaw& law, double gamma) {
  Vec m1(law.n_units());
  for (int i = 0; i < m1.size(); ++i) m1[i] = law.m1(i, gamma);
  return m1;
}

IntVec nonresponse(const Dataset& data) {
  IntVec z(data.n());
  for (int i = 0; i < data.n(); ++i) z[i] = 1 - data.r[i];
  return z;
}

}  // namespace

double candidate_nll(const Dataset& data, const ConditionalLaw& law,
                     const std::vector<int>& candidate, const MechanismParams& params) {
  return candidate_nll_with_offset(data, candidate_design(data, candidate),
                                   m1_vector(law, params.gamma), params.phi);
}

MechanismCandidateFit fit_mechanism_candidate(const Dataset& data, const ConditionalLaw& law,
                                              const std::vector<int>& candidate,
                                              const MechanismOptions& opts) {
  data.require_both_classes();
  const Mat design = candidate_design(data, candidate);
  const IntVec z = nonresponse(data);

  const auto profile = [&](double gamma) {
    const Vec m1 = m1_vector(law, gamma);
    return logistic_newton_offset(design, z, m1);
  };

  const int grid = std::max(3, opts.gamma_grid);
  double best_gamma = 0.0;
  double best_nll = std::numeric_limits<double>::infinity();
  for (int g = 0; g < grid; ++g) {
    const double gamma = -opts.gamma_cap + 2.0 * opts.gamma_cap * g / (grid - 1);
    const LogisticFit lf = profile(gamma);
    if (lf.nll < best_nll) {
      best_nll = lf.nll;
      best_gamma = gamma;
    }
  }

  const double step = 2.0 * opts.gamma_cap / (grid - 1);
  const double lo = std::max(-opts.gamma_cap, best_gamma - step);
  const double hi = std::min(opts.gamma_cap, best_gamma + step);
  const double refined = golden_section([&](double g) { return profile(g).nll; }, lo, hi,
                                        1e-4 * step + 1e-12, 60);

  MechanismCandidateFit fit;
  const LogisticFit at_refined = profile(refined);
  if (at_refined.nll <= best_nll) {
    fit.params = MechanismParams{at_refined.beta, refined};
    fit.nll = at_refined.nll;
    fit.converged = at_refined.converged;
  } else {
    const LogisticFit at_grid = profile(best_gamma);
    fit.params = MechanismParams{at_grid.beta, best_gamma};
    fit.nll = at_grid.nll;
    fit.converged = at_grid.converged;
  }
  return fit;
}

double sl_criterion(const Dataset& data, const ConditionalLaw& law,
                    const std::vector<MechanismCandidateFit>& fits,
                    const std::vector<std::vector<int>>& candidates,
                    const SimplexWeights& weights, double lambda_n) {
  const int n = data.n();
  const int S = static_cast<int>(fits.size());
  double gamma_mix = 0.0;
  for (int k = 0; k < S; ++k) gamma_mix += weights.w[k] * fits[k].params.gamma;

  Vec eta = Vec::Zero(n);
  for (int k = 0; k < S; ++k) {
    if (weights.w[k] == 0.0) continue;
    eta += weights.w[k] * (candidate_design(data, candidates[k]) * fits[k].params.phi);
  }
  double sl = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = eta[i] + law.m1(i, gamma_mix);
    sl += (1.0 - data.r[i]) * e - log1pexp(e);
  }
  double penalty = 0.0;
  for (int k = 0; k < S; ++k) penalty += weights.w[k] * candidates[k].size();
  return sl - lambda_n * penalty;
}

namespace {

Vec softmax(const Vec& s) {
  const double m = s.maxCoeff();
  Vec w = (s.array() - m).exp();
  return w / w.sum();
}

}  // namespace

SimplexWeights optimize_mechanism_weights(const Dataset& data, const ConditionalLaw& law,
                                          const std::vector<MechanismCandidateFit>& fits,
                                          const std::vector<std::vector<int>>& candidates,
                                          double lambda_n) {
  const int S = static_cast<int>(fits.size());
  if (S < 1) throw config_error("weight optimization needs at least one candidate");
  if (S == 1) return SimplexWeights::vertex(1, 0);

  // Precompute per-candidate linear predictors once; only the mixed gamma
  // changes the nonparametric part.
  const int n = data.n();
  Mat lin(n, S);
  for (int k = 0; k < S; ++k)
    lin.col(k) = candidate_design(data, candidates[k]) * fits[k].params.phi;
  Vec gammas(S), sizes(S);
  for (int k = 0; k < S; ++k) {
    gammas[k] = fits[k].params.gamma;
    sizes[k] = static_cast<double>(candidates[k].size());
  }

  const auto sl_of = [&](const Vec& w) {
    const double gamma_mix = w.dot(gammas);
    const Vec eta = lin * w;
    double sl = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = eta[i] + law.m1(i, gamma_mix);
      sl += (1.0 - data.r[i]) * e - log1pexp(e);
    }
    return sl - lambda_n * w.dot(sizes);
  };

  Vec best_w;
  double best_sl = -std::numeric_limits<double>::infinity();
  const auto consider = [&](const Vec& w) {
    const double sl = sl_of(w);
    if (best_w.size() == 0 || prefer_simplex_point(w, -sl, best_w, -best_sl, sizes)) {
      best_w = w;
      best_sl = sl;
    }
  };

  for (int k = 0; k < S; ++k) consider(SimplexWeights::vertex(S, k).w);

  std::vector<Vec> starts;
  starts.push_back(Vec::Zero(S));  // uniform
  for (int k = 0; k < S; ++k) {
    Vec s = Vec::Zero(S);
    s[k] = 8.0;  // near-vertex start
    starts.push_back(s);
  }
  const auto objective = [&](const Vec& s) { return -sl_of(softmax(s)); };
  for (const Vec& s0 : starts) {
    const NelderMeadResult r = nelder_mead(objective, s0, 1.0, 400 * S, 1e-12);
    consider(softmax(r.x));
  }
  return SimplexWeights::checked(best_w);
}

MechanismParams combine_theta(const std::vector<MechanismCandidateFit>& fits,
                              const std::vector<std::vector<int>>& candidates,
                              const SimplexWeights& weights) {
  const int S = static_cast<int>(fits.size());
  if (S == 0) throw config_error("combine_theta: no candidates");
  const int full = static_cast<int>(candidates.back().size());
  MechanismParams out;
  out.phi = Vec::Zero(full + 1);
  out.gamma = 0.0;
  for (int k = 0; k < S; ++k) {
    const Vec& phi = fits[k].params.phi;
    for (int j = 0; j < phi.size(); ++j) out.phi[j] += weights.w[k] * phi[j];
    out.gamma += weights.w[k] * fits[k].params.gamma;
  }
  return out;
}

MechanismFit fit_mechanism(const Dataset& data, const ConditionalLaw& law,
                           const std::vector<std::vector<int>>& candidates,
                           const MechanismOptions& opts,
                           const std::vector<int>* smoothing_columns) {
  MechanismFit fit;
  fit.candidates = candidates;
  fit.lambda_n = opts.lambda_n > 0.0 ? opts.lambda_n : default_mechanism_lambda(data.n());

  fit.per_candidate.resize(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), opts.threads, [&](int k) {
    fit.per_candidate[k] = fit_mechanism_candidate(data, law, candidates[k], opts);
  });

  fit.weights =
      optimize_mechanism_weights(data, law, fit.per_candidate, candidates, fit.lambda_n);
  fit.combined = combine_theta(fit.per_candidate, candidates, fit.weights);

  if (smoothing_columns != nullptr) {
    const std::set<int> largest(candidates.back().begin(), candidates.back().end());
    const std::set<int> smooth(smoothing_columns->begin(), smoothing_columns->end());
    fit.instrument_warning = largest == smooth;
  }
  return fit;
}

double kl_diagnostic(const Dataset& data, const ConditionalLaw& law,
                     const MechanismParams& params, const std::vector<int>& indices,
                     const MechanismParams& reference, const std::vector<int>& ref_indices) {
  const int n = data.n();
  const Mat d_par = candidate_design(data, indices);
  const Mat d_ref = candidate_design(data, ref_indices);
  const Vec eta_par = d_par * params.phi + m1_vector(law, params.gamma);
  const Vec eta_ref = d_ref * reference.phi + m1_vector(law, reference.gamma);

  const auto clip = [](double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); };
  double kl = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p_ref = clip(1.0 / (1.0 + std::exp(eta_ref[i])));  // Pr(r=1)
    const double p_par = clip(1.0 / (1.0 + std::exp(eta_par[i])));
    kl += p_ref * std::log(p_ref / p_par) + (1.0 - p_ref) * std::log((1.0 - p_ref) / (1.0 - p_par));
  }
  return kl / n;
}

}  // namespace sma
