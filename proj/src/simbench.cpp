#include "sma/simbench.hpp"

#include "sma/core.hpp"
#include "sma/rng.hpp"
#include "sma/threads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace sma {

Scenario scenario_from_string(const std::string& s) {
  if (s == "I" || s == "heteroskedastic") return Scenario::heteroskedastic;
  if (s == "II" || s == "homoscedastic") return Scenario::homoscedastic;
  throw config_error("unknown scenario '" + s + "'");
}

std::string to_string(Scenario s) {
  return s == Scenario::heteroskedastic ? "I" : "II";
}

MnarMechanism mechanism_from_string(const std::string& s) {
  if (s == "a" || s == "logistic") return MnarMechanism::logistic;
  if (s == "b" || s == "loglog") return MnarMechanism::loglog;
  throw config_error("unknown mechanism '" + s + "'");
}

std::string to_string(MnarMechanism m) {
  return m == MnarMechanism::logistic ? "a" : "b";
}

Method method_from_string(const std::string& s) {
  if (s == "sma") return Method::sma;
  if (s == "sma-s" || s == "sma_s") return Method::sma_s;
  if (s == "aic") return Method::aic;
  if (s == "bic") return Method::bic;
  if (s == "saic") return Method::saic;
  if (s == "sbic") return Method::sbic;
  if (s == "cvma") return Method::cvma;
  if (s == "ipw-mnar" || s == "ipw_mnar") return Method::ipw_mnar;
  if (s == "ipw-mar" || s == "ipw_mar") return Method::ipw_mar;
  if (s == "sma-t" || s == "sma_t") return Method::sma_t;
  throw config_error("unknown method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::sma: return "sma";
    case Method::sma_s: return "sma-s";
    case Method::aic: return "aic";
    case Method::bic: return "bic";
    case Method::saic: return "saic";
    case Method::sbic: return "sbic";
    case Method::cvma: return "cvma";
    case Method::ipw_mnar: return "ipw-mnar";
    case Method::ipw_mar: return "ipw-mar";
    default: return "sma-t";
  }
}

void SimConfig::validate() const {
  if (n < 20) throw config_error("simulation needs n >= 20");
  if (!(r_squared > 0.0 && r_squared < 1.0)) throw config_error("r_squared must lie in (0,1)");
  if (replications < 1) throw config_error("replications must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw config_error("tau must lie in (0,1)");
  if (appendix_dgp && !(rho >= 0.0 && rho < 1.0))
    throw config_error("appendix correlation must lie in [0,1)");
  if (test_size < 1) throw config_error("test_size must be >= 1");
}

namespace {

// Active coefficients of the main design: beta_j = (-1)^j j^{-1}, j <= p/10.
Vec main_beta(int p) {
  Vec beta = Vec::Zero(p);
  const int s0 = p / 10;
  for (int j = 1; j <= s0; ++j) beta[j - 1] = (j % 2 == 0 ? 1.0 : -1.0) / j;
  return beta;
}

// Sparse fixed coefficients of the correlated design; depends on tau.
Vec appendix_beta(int p, double tau) {
  Vec beta = Vec::Zero(p);
  const double b135 = std::sqrt(8.0) * std::abs(tau - 0.5);
  beta[0] = beta[2] = beta[4] = b135;
  beta[1] = beta[3] = 1.0;
  beta[5] = beta[6] = 2.0 * (tau - 0.05);
  return beta;
}

// Monte-Carlo noise variance of the heteroskedastic error e * S/8 with
// S a chi-square(10); cached, fixed internal seed.
double heteroskedastic_noise_variance() {
  static const double value = [] {
    Rng rng(0x9e3779b97f4a7c15ULL);
    const int draws = 1000000;
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < draws; ++t) {
      double s = 0.0;
      for (int j = 0; j < 10; ++j) {
        const double z = rng.normal();
        s += z * z;
      }
      const double eps = rng.normal() * s / 8.0;
      sum += eps;
      sumsq += eps * eps;
    }
    const double mean = sum / draws;
    return sumsq / draws - mean * mean;
  }();
  return value;
}

double calibrate_scale(const SimConfig& cfg, const Vec& beta) {
  const double b2 = beta.squaredNorm();
  if (b2 <= 0.0) throw numeric_error("cannot calibrate a zero signal");
  if (cfg.scenario == Scenario::homoscedastic)
    return std::sqrt(cfg.r_squared / ((1.0 - cfg.r_squared) * b2));

  const double nvar = heteroskedastic_noise_variance();
  // bisection on R2(c) = c^2 b2 / (c^2 b2 + nvar), increasing in c
  double lo = 1e-8, hi = 1e8;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r2 = mid * mid * b2 / (mid * mid * b2 + nvar);
    (r2 < cfg.r_squared ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);
  const double reached = c * c * b2 / (c * c * b2 + nvar);
  if (std::abs(reached - cfg.r_squared) > 1e-6)
    throw numeric_error("R^2 calibration failed");
  return c;
}

}  // namespace

std::pair<Dataset, TruthRecord> generate_dgp(const SimConfig& cfg, std::uint64_t rep_seed) {
  cfg.validate();
  const int n = cfg.n;
  const int p = cfg.effective_p();
  Rng rng(mix_seed(rep_seed, 0xd9e1));

  Dataset data;
  data.X.resize(n, p);
  TruthRecord truth;

  if (cfg.appendix_dgp) {
    const double sr = std::sqrt(cfg.rho), s1 = std::sqrt(1.0 - cfg.rho);
    for (int i = 0; i < n; ++i) {
      const double common = rng.normal();
      for (int j = 0; j < p; ++j) data.X(i, j) = sr * common + s1 * rng.normal();
    }
    const Vec beta = appendix_beta(p, cfg.tau);
    truth.beta = beta;
    truth.c = 1.0;
    truth.mu = data.X * beta;
    truth.eps.resize(n);
    for (int i = 0; i < n; ++i) truth.eps[i] = rng.normal();
    std::set<int> act;
    for (int j = 0; j < p; ++j)
      if (beta[j] != 0.0) act.insert(j);
    act.insert(1);  // mechanism depends on x2, x3, x4
    act.insert(2);
    act.insert(3);
    truth.active.assign(act.begin(), act.end());
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) data.X(i, j) = rng.normal();
    Vec beta = main_beta(p);
    truth.c = calibrate_scale(cfg, beta);
    beta *= truth.c;
    truth.beta = beta;
    truth.mu = data.X * beta;
    truth.eps.resize(n);
    if (cfg.scenario == Scenario::homoscedastic) {
      for (int i = 0; i < n; ++i) truth.eps[i] = rng.normal();
    } else {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = p - 10; j < p; ++j) s += data.X(i, j) * data.X(i, j);
        truth.eps[i] = rng.normal() * s / 8.0;
      }
    }
    const int s0 = p / 10;
    truth.active.resize(std::max(s0, 2));
    std::iota(truth.active.begin(), truth.active.end(), 0);
  }

  truth.y_complete = truth.mu + truth.eps;
  data.y = truth.y_complete;
  data.r = IntVec::Ones(n);
  return {std::move(data), std::move(truth)};
}

Vec true_mechanism_theta(const SimConfig& cfg) {
  Vec theta(4);
  if (cfg.appendix_dgp) {
    // response logit: x2 + 1.5 x3 - x4 - y + 1 (positive convention)
    theta << 1.0, 1.5, -1.0, -1.0;
    return theta;
  }
  if (cfg.mechanism == MnarMechanism::logistic) {
    if (cfg.scenario == Scenario::heteroskedastic)
      theta << 1.0, -1.0, -1.0, 0.7;
    else
      theta << 1.0, -1.0, -1.0, 1.0;
  } else {
    if (cfg.scenario == Scenario::heteroskedastic)
      theta << 1.0, -1.0, 0.3, 1.0;
    else
      theta << 1.0, -1.0, 0.3, 0.8;
  }
  return theta;
}

double response_probability(const SimConfig& cfg, const Vec& theta, const Vec& x, double y) {
  if (cfg.appendix_dgp) {
    const double eta = theta[0] * x[1] + theta[1] * x[2] + theta[2] * x[3] + theta[3] * y + 1.0;
    return 1.0 / (1.0 + std::exp(-std::clamp(eta, -35.0, 35.0)));
  }
  if (cfg.mechanism == MnarMechanism::logistic) {
    const double eta = theta[0] * x[0] + theta[1] * x[1] + theta[2] + theta[3] * y;
    return 1.0 / (1.0 + std::exp(std::clamp(eta, -35.0, 35.0)));
  }
  const double eta = theta[0] * x[0] + theta[1] * x[1] + theta[2] + theta[3] * x[0] * std::sin(y);
  const double t = std::exp(std::clamp(eta, -30.0, 30.0));
  return -std::expm1(-t);
}

double apply_missingness(Dataset& data, TruthRecord& truth, const SimConfig& cfg,
                         std::uint64_t rep_seed) {
  Rng rng(mix_seed(rep_seed, 0x311a));
  truth.theta_mech = true_mechanism_theta(cfg);
  int missing = 0;
  for (int i = 0; i < data.n(); ++i) {
    const double pi =
        response_probability(cfg, truth.theta_mech, data.X.row(i), truth.y_complete[i]);
    data.r[i] = rng.bernoulli(pi);
    if (data.r[i] == 0) {
      data.y[i] = std::numeric_limits<double>::quiet_NaN();
      ++missing;
    } else {
      data.y[i] = truth.y_complete[i];
    }
  }
  return static_cast<double>(missing) / data.n();
}

double fpr_evaluate(const std::function<double(const Vec&)>& predictor, const Mat& x_test,
                    const Vec& y_test, const QuantileLevel& tau) {
  double s = 0.0;
  for (int t = 0; t < x_test.rows(); ++t)
    s += check_loss(y_test[t] - predictor(x_test.row(t)), tau);
  return s / x_test.rows();
}

const MethodStats* FprReport::stats(Method m) const {
  for (const auto& pr : per_method)
    if (pr.first == m) return &pr.second;
  return nullptr;
}

namespace {

struct RepOutcome {
  bool ok = false;
  double missing_rate = 0.0;
  double normalizer = 0.0;
  double mean_acceptance = 0.0;
  int ms = 0, fp = 0, fn = 0;
  std::map<Method, double> fpr;
  std::map<Method, int> clips;
};

// weighted prediction from candidate fits at a new point
double predict_weighted(const std::vector<CqfCandidateFit>& fits,
                        const std::vector<std::vector<int>>& candidates, const Vec& w,
                        const Vec& x) {
  double q = 0.0;
  for (size_t m = 0; m < candidates.size(); ++m) {
    const Vec& beta = fits[m].params.beta;
    double mu = beta[0];
    for (size_t j = 0; j < candidates[m].size(); ++j)
      mu += beta[j + 1] * x[candidates[m][j]];
    q += w[m] * mu;
  }
  return q;
}

bool needs_sampled(const std::vector<Method>& ms) {
  for (Method m : ms)
    if (m != Method::sma) return true;
  return false;
}

RepOutcome run_one_rep(const BenchConfig& cfg, int rep) {
  const std::uint64_t rep_seed = mix_seed(cfg.sim.seed, 0xbe7c, static_cast<std::uint64_t>(rep));
  RepOutcome out;

  auto [train, truth] = generate_dgp(cfg.sim, rep_seed);
  out.missing_rate = apply_missingness(train, truth, cfg.sim, mix_seed(rep_seed, 1));
  if (train.respondent_count() < 20 || train.respondent_count() == train.n())
    throw data_error("degenerate missingness draw");

  // out-of-sample pairs are never subject to missingness
  SimConfig test_cfg = cfg.sim;
  test_cfg.n = std::max(cfg.sim.test_size, 20);
  auto [test, test_truth] = generate_dgp(test_cfg, mix_seed(rep_seed, 2));
  const Mat x_test = test.X.topRows(cfg.sim.test_size);
  const Vec y_test = test.y.head(cfg.sim.test_size);

  const QuantileLevel tau(cfg.sim.tau);

  PipelineOptions popts = cfg.pipeline;
  popts.tau = cfg.sim.tau;
  popts.seed = rep_seed;
  popts.threads = 1;  // replications already run in parallel

  const PreparedCandidates prep = prepare_candidates(train, popts);
  const auto& candidates = prep.nested.index_sets;

  // screening accounting against the truth record
  {
    const std::set<int> sel(prep.screened.begin(), prep.screened.end());
    const std::set<int> act(truth.active.begin(), truth.active.end());
    out.ms = static_cast<int>(sel.size());
    for (int j : sel)
      if (!act.count(j)) ++out.fp;
    for (int j : act)
      if (!sel.count(j)) ++out.fn;
  }

  // per-replication normalizer: best single full-data candidate on the test set
  {
    Dataset full = train;
    full.y = truth.y_complete;
    full.r = IntVec::Ones(full.n());
    double best = std::numeric_limits<double>::infinity();
    const TiltedLaw no_law;  // unused on full-response fits
    for (const auto& cand : candidates) {
      const CqfCandidateFit fit = fit_cqf_candidate(full, no_law, cand, tau, popts.cqf);
      const double fpr = fpr_evaluate(
          [&](const Vec& x) {
            double mu = fit.params.beta[0];
            for (size_t j = 0; j < cand.size(); ++j)
              mu += fit.params.beta[j + 1] * x[cand[j]];
            return mu;
          },
          x_test, y_test, tau);
      best = std::min(best, fpr);
    }
    out.normalizer = best;
  }

  const bool want_kernel =
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::sma) != cfg.methods.end();
  const bool want_sampled = needs_sampled(cfg.methods);

  std::shared_ptr<ConditionalLaw> law_kernel, law_sampled;
  if (want_kernel) {
    PipelineOptions k = popts;
    k.backend = Backend::kernel;
    law_kernel = make_conditional_law(train, prep.basis, k);
  }
  if (want_sampled) {
    PipelineOptions s = popts;
    s.backend = Backend::sampled;
    double accept = 0.0;
    int falls = 0;
    law_sampled = make_conditional_law(train, prep.basis, s, &accept, &falls);
    out.mean_acceptance = accept;
  }

  const auto eval_method = [&](const std::vector<CqfCandidateFit>& fits, const Vec& w) {
    return fpr_evaluate([&](const Vec& x) { return predict_weighted(fits, candidates, w, x); },
                        x_test, y_test, tau);
  };

  MechanismOptions mopts = popts.mechanism;
  CqfOptions copts = popts.cqf;

  // kernel-backend averaging
  if (want_kernel) {
    PipelineOptions k = popts;
    k.backend = Backend::kernel;
    const SmaModel model = fit_sma(train, k, prep, law_kernel);
    out.fpr[Method::sma] = eval_method(model.cqf.per_candidate, model.cqf.weights.w);
  }

  if (!want_sampled) {
    out.ok = true;
    return out;
  }

  // sampled-backend mechanism feeds every competitor
  const MechanismFit mech =
      fit_mechanism(train, *law_sampled, candidates, mopts, &prep.screened);
  const double gamma_hat = mech.combined.gamma;
  const TiltedLaw tilted = TiltedLaw::from_gamma(*law_sampled, gamma_hat);

  std::vector<CqfCandidateFit> cand_fits(candidates.size());
  for (size_t m = 0; m < candidates.size(); ++m)
    cand_fits[m] = fit_cqf_candidate(train, tilted, candidates[m], tau, copts);
  const Mat mu = candidate_predictions(train, cand_fits, candidates);
  const double phi_n = copts.phi_n > 0.0 ? copts.phi_n : default_cqf_phi(train.n());

  for (Method m : cfg.methods) {
    switch (m) {
      case Method::sma:
        break;  // handled above
      case Method::sma_s: {
        const SimplexWeights w = optimize_cqf_weights(train, tilted, mu, candidates, tau, phi_n,
                                                      Backend::sampled, copts.subgradient_iters);
        out.fpr[m] = eval_method(cand_fits, w.w);
        break;
      }
      case Method::aic:
      case Method::bic: {
        const Vec scores = ic_scores(cand_fits, candidates, train.n(),
                                     m == Method::aic ? IcKind::aic : IcKind::bic);
        out.fpr[m] = eval_method(cand_fits, ic_vertex_weights(scores).w);
        break;
      }
      case Method::saic:
      case Method::sbic: {
        const Vec scores = ic_scores(cand_fits, candidates, train.n(),
                                     m == Method::saic ? IcKind::aic : IcKind::bic);
        out.fpr[m] = eval_method(cand_fits, smoothed_ic_weights(scores).w);
        break;
      }
      case Method::cvma: {
        const CvmaResult cv = cvma_weights(train, tilted, candidates, tau, cfg.cv_folds,
                                           mix_seed(rep_seed, 3), copts);
        out.fpr[m] = eval_method(cand_fits, cv.weights.w);
        break;
      }
      case Method::ipw_mnar: {
        const IpwResult ipw = ipw_mnar_weights(train, mech.combined, candidates.back(),
                                               candidates, tau, phi_n, copts);
        out.fpr[m] = eval_method(ipw.refits, ipw.weights.w);
        out.clips[m] = ipw.clip_count;
        break;
      }
      case Method::ipw_mar: {
        const IpwResult ipw =
            ipw_mar_weights(train, prep.screened, candidates, tau, phi_n, copts);
        out.fpr[m] = eval_method(ipw.refits, ipw.weights.w);
        out.clips[m] = ipw.clip_count;
        break;
      }
      case Method::sma_t: {
        const TrueMechanismFit tm =
            fit_true_mechanism(train, truth.y_complete, cfg.sim.mechanism);
        const TiltedLaw truth_tilt = TiltedLaw::from_log_tilt(
            *law_sampled, true_mechanism_log_tilt(train, tm, cfg.sim.mechanism));
        std::vector<CqfCandidateFit> tfits(candidates.size());
        for (size_t k = 0; k < candidates.size(); ++k)
          tfits[k] = fit_cqf_candidate(train, truth_tilt, candidates[k], tau, copts);
        const Mat tmu = candidate_predictions(train, tfits, candidates);
        const SimplexWeights w = optimize_cqf_weights(train, truth_tilt, tmu, candidates, tau,
                                                      phi_n, Backend::sampled,
                                                      copts.subgradient_iters);
        out.fpr[m] = eval_method(tfits, w.w);
        break;
      }
    }
  }
  out.ok = true;
  return out;
}

}  // namespace

FprReport run_bench(const BenchConfig& cfg) {
  cfg.sim.validate();
  if (cfg.methods.empty()) throw config_error("bench needs at least one method");

  const int R = cfg.sim.replications;
  std::vector<RepOutcome> outcomes(R);
  parallel_for(R, cfg.threads, [&](int rep) {
    try {
      outcomes[rep] = run_one_rep(cfg, rep);
    } catch (const std::exception&) {
      outcomes[rep].ok = false;
    }
  });

  FprReport report;
  double miss_sum = 0.0, accept_sum = 0.0;
  for (int rep = 0; rep < R; ++rep) {
    const RepOutcome& o = outcomes[rep];
    if (!o.ok) {
      ++report.failures;
      continue;
    }
    ++report.reps_done;
    miss_sum += o.missing_rate;
    accept_sum += o.mean_acceptance;
    for (Method m : cfg.methods) {
      if (!o.fpr.count(m)) continue;
      PerRepRow row;
      row.rep = rep;
      row.method = to_string(m);
      row.fpr = o.fpr.at(m);
      row.normalizer = o.normalizer;
      row.missing_rate = o.missing_rate;
      row.ms = o.ms;
      row.fp = o.fp;
      row.fn = o.fn;
      row.mean_acceptance = o.mean_acceptance;
      row.clip_count = o.clips.count(m) ? o.clips.at(m) : 0;
      report.rows.push_back(row);
    }
  }
  if (report.reps_done == 0) throw numeric_error("all bench replications failed");
  report.missing_rate = miss_sum / report.reps_done;
  report.mean_acceptance = accept_sum / report.reps_done;

  for (Method m : cfg.methods) {
    MethodStats st;
    double sum = 0.0, sum2 = 0.0, norm_sum = 0.0, normalizer_sum = 0.0;
    double ms_sum = 0.0, fp_sum = 0.0, fn_sum = 0.0;
    int count = 0;
    for (const PerRepRow& row : report.rows) {
      if (row.method != to_string(m)) continue;
      ++count;
      sum += row.fpr;
      sum2 += row.fpr * row.fpr;
      norm_sum += row.fpr / row.normalizer;
      normalizer_sum += row.normalizer;
      ms_sum += row.ms;
      fp_sum += row.fp;
      fn_sum += row.fn;
      st.clip_count += row.clip_count;
    }
    if (count == 0) continue;
    st.mean_fpr = sum / count;
    st.sd_fpr = count > 1 ? std::sqrt(std::max(0.0, (sum2 - sum * sum / count) / (count - 1)))
                          : 0.0;
    st.mean_norm_fpr = norm_sum / count;
    st.norm_of_means = st.mean_fpr / (normalizer_sum / count);
    st.mean_ms = ms_sum / count;
    st.mean_fp = fp_sum / count;
    st.mean_fn = fn_sum / count;
    report.per_method.emplace_back(m, st);
  }
  return report;
}

}  // namespace sma
