#include "sma/baselines.hpp"

#include "sma/core.hpp"
#include "sma/optim.hpp"
#include "sma/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sma {

Vec ic_scores(const std::vector<CqfCandidateFit>& fits,
              const std::vector<std::vector<int>>& candidates, int n, IcKind kind) {
  const double pen = kind == IcKind::aic ? 2.0 : std::log(static_cast<double>(n));
  Vec scores(fits.size());
  for (size_t m = 0; m < fits.size(); ++m) {
    const double g = std::max(fits[m].objective, 1e-12);
    scores[m] = 2.0 * n * std::log(g) + pen * static_cast<double>(candidates[m].size());
  }
  return scores;
}

SimplexWeights ic_vertex_weights(const Vec& scores) {
  int best = 0;
  for (int m = 1; m < scores.size(); ++m)
    if (scores[m] < scores[best]) best = m;
  return SimplexWeights::vertex(static_cast<int>(scores.size()), best);
}

SimplexWeights smoothed_ic_weights(const Vec& scores) {
  for (int m = 0; m < scores.size(); ++m)
    if (!std::isfinite(scores[m])) throw numeric_error("nonfinite information criterion");
  const double mn = scores.minCoeff();
  Vec w = ((mn - scores.array()) / 2.0).exp();
  w /= w.sum();
  return SimplexWeights::checked(std::move(w));
}

namespace {

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.X.resize(rows.size(), data.p());
  out.y.resize(rows.size());
  out.r.resize(rows.size());
  for (size_t t = 0; t < rows.size(); ++t) {
    out.X.row(t) = data.X.row(rows[t]);
    out.y[t] = data.y[rows[t]];
    out.r[t] = data.r[rows[t]];
  }
  return out;
}

TiltedLaw subset_law(const TiltedLaw& law, const std::vector<int>& rows) {
  TiltedLaw out;
  out.y.reserve(rows.size());
  out.w.reserve(rows.size());
  for (int i : rows) {
    out.y.push_back(law.y[i]);
    out.w.push_back(law.w[i]);
  }
  return out;
}

/// Minimize a convex simplex criterion with value/subgradient closure,
/// considering all vertices plus a projected-subgradient run.
SimplexWeights minimize_simplex(const std::function<double(const Vec&, Vec&)>& fg, int S,
                                const Vec& sizes, int iters) {
  if (S == 1) return SimplexWeights::vertex(1, 0);
  Vec g(S);
  Vec best_w;
  double best_f = std::numeric_limits<double>::infinity();
  const auto consider = [&](const Vec& w) {
    const double f = fg(w, g);
    if (best_w.size() == 0 || prefer_simplex_point(w, f, best_w, best_f, sizes)) {
      best_w = w;
      best_f = f;
    }
  };
  for (int m = 0; m < S; ++m) consider(SimplexWeights::vertex(S, m).w);
  const SubgradientResult sr =
      projected_subgradient_simplex(fg, SimplexWeights::uniform(S).w, iters);
  consider(sr.w);
  return SimplexWeights::checked(best_w);
}

}  // namespace

CvmaResult cvma_weights(const Dataset& data, const TiltedLaw& law,
                        const std::vector<std::vector<int>>& candidates,
                        const QuantileLevel& tau, int folds, std::uint64_t seed,
                        const CqfOptions& opts) {
  const int n = data.n();
  const int S = static_cast<int>(candidates.size());
  if (n < 2 * folds) throw data_error("cvma needs n >= 2 * folds");

  CvmaResult res;
  if (S == 1) {
    res.weights = SimplexWeights::vertex(1, 0);
    return res;
  }

  // deterministic shuffled fold assignment
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0xcf0a));
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  std::vector<int> fold_of(n);
  for (int i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  // merge folds whose training complement would lose all respondents
  std::vector<int> resp_in_fold(folds, 0);
  for (int i = 0; i < n; ++i)
    if (data.r[i] == 1) ++resp_in_fold[fold_of[i]];
  const int total_resp = data.respondent_count();
  for (int f = 0; f < folds; ++f) {
    if (total_resp - resp_in_fold[f] == 0) {
      res.fold_merge_warning = true;
      const int target = (f + 1) % folds;
      for (int i = 0; i < n; ++i)
        if (fold_of[i] == f) fold_of[i] = target;
    }
  }

  Mat mu_heldout(n, S);
  res.fold_losses = Vec::Zero(folds);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    const Dataset dtrain = subset_rows(data, train);
    if (dtrain.respondent_count() == 0) continue;
    const TiltedLaw ltrain = subset_law(law, train);
    for (int m = 0; m < S; ++m) {
      const CqfCandidateFit fit = fit_cqf_candidate(dtrain, ltrain, candidates[m], tau, opts);
      for (int i : test) {
        double pred = fit.params.beta[0];
        for (size_t j = 0; j < candidates[m].size(); ++j)
          pred += fit.params.beta[j + 1] * data.X(i, candidates[m][j]);
        mu_heldout(i, m) = pred;
      }
    }
  }

  Vec sizes(S);
  for (int m = 0; m < S; ++m) sizes[m] = static_cast<double>(candidates[m].size());

  const auto fg = [&](const Vec& w, Vec& g) {
    const Vec q = mu_heldout * w;
    g.setZero();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      if (data.r[i] == 1) {
        const double u = data.y[i] - q[i];
        s += check_loss(u, tau);
        g.noalias() -= (check_loss_slope(u, tau) / n) * mu_heldout.row(i).transpose();
      } else {
        double slope_sum = 0.0;
        for (size_t l = 0; l < law.y[i].size(); ++l) {
          const double u = law.y[i][l] - q[i];
          s += law.w[i][l] * check_loss(u, tau);
          slope_sum += law.w[i][l] * check_loss_slope(u, tau);
        }
        g.noalias() -= (slope_sum / n) * mu_heldout.row(i).transpose();
      }
    }
    return s / n;
  };

  res.weights = minimize_simplex(fg, S, sizes, 2000);

  Vec g(S);
  const Vec q = mu_heldout * res.weights.w;
  for (int i = 0; i < n; ++i) {
    double li = 0.0;
    if (data.r[i] == 1)
      li = check_loss(data.y[i] - q[i], tau);
    else
      li = law.expected_check_loss(i, q[i], tau);
    res.fold_losses[fold_of[i]] += li;
  }
  return res;
}

Vec mnar_propensity(const Dataset& data, const MechanismParams& combined,
                    const std::vector<int>& largest_candidate) {
  const int n = data.n();
  Vec pihat(n);
  for (int i = 0; i < n; ++i) {
    if (data.r[i] != 1) {
      pihat[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double eta = combined.phi[0] + combined.gamma * data.y[i];
    for (size_t j = 0; j < largest_candidate.size(); ++j)
      eta += combined.phi[j + 1] * data.X(i, largest_candidate[j]);
    pihat[i] = 1.0 / (1.0 + std::exp(std::clamp(eta, -35.0, 35.0)));
  }
  return pihat;
}

IpwResult ipw_weights_from_propensity(const Dataset& data, const Vec& pihat,
                                      const std::vector<std::vector<int>>& candidates,
                                      const QuantileLevel& tau, double phi_n,
                                      const CqfOptions& opts) {
  const int n = data.n();
  const int S = static_cast<int>(candidates.size());
  IpwResult res;

  const std::vector<int> resp = data.respondents();
  Vec ipw(n);
  ipw.setZero();
  for (int i : resp) {
    double pi = pihat[i];
    if (!(pi > 0.0) || pi > 1.0) pi = std::min(std::max(pi, 0.01), 1.0);
    if (pi < 0.01) {
      pi = 0.01;
      ++res.clip_count;
    }
    ipw[i] = 1.0 / pi;
  }

  // candidate refits on respondents, check loss weighted by 1/pi
  res.refits.resize(S);
  for (int m = 0; m < S; ++m) {
    WeightedQrProblem prob;
    prob.A.resize(resp.size(), candidates[m].size() + 1);
    prob.v.resize(resp.size());
    prob.w.resize(resp.size());
    for (size_t t = 0; t < resp.size(); ++t) {
      const int i = resp[t];
      prob.A(t, 0) = 1.0;
      for (size_t j = 0; j < candidates[m].size(); ++j)
        prob.A(t, j + 1) = data.X(i, candidates[m][j]);
      prob.v[t] = data.y[i];
      prob.w[t] = ipw[i] / n;
    }
    res.refits[m] = weighted_qr_fit(prob, tau, opts.beta_cap);
  }

  Mat mu = candidate_predictions(data, res.refits, candidates);
  Vec sizes(S);
  for (int m = 0; m < S; ++m) sizes[m] = static_cast<double>(candidates[m].size());

  const auto fg = [&](const Vec& w, Vec& g) {
    const Vec q = mu * w;
    g = (phi_n / n) * sizes;
    double s = 0.0;
    for (int i : resp) {
      const double u = data.y[i] - q[i];
      s += ipw[i] * check_loss(u, tau);
      g.noalias() -= (ipw[i] * check_loss_slope(u, tau) / n) * mu.row(i).transpose();
    }
    return s / n + (phi_n / n) * w.dot(sizes);
  };
  res.weights = minimize_simplex(fg, S, sizes, 2000);
  return res;
}

IpwResult ipw_mnar_weights(const Dataset& data, const MechanismParams& theta_hat,
                           const std::vector<int>& largest_candidate,
                           const std::vector<std::vector<int>>& candidates,
                           const QuantileLevel& tau, double phi_n, const CqfOptions& opts) {
  return ipw_weights_from_propensity(data, mnar_propensity(data, theta_hat, largest_candidate),
                                     candidates, tau, phi_n, opts);
}

namespace {

double lasso_logistic_nll(const Mat& X, const IntVec& r, const Vec& theta) {
  double s = 0.0;
  const Vec eta = X * theta;
  for (int i = 0; i < r.size(); ++i) s += log1pexp(eta[i]) - r[i] * eta[i];
  return s / r.size();
}

// proximal gradient for the L1-penalized logistic likelihood,
// intercept unpenalized
Vec lasso_logistic(const Mat& X, const IntVec& r, double lambda, int iters) {
  const int n = static_cast<int>(X.rows());
  const int q = static_cast<int>(X.cols());
  Vec theta = Vec::Zero(q);
  double step = 4.0 / (X.squaredNorm() / n + 1e-12);  // 1/L bound for logistic
  double f = lasso_logistic_nll(X, r, theta);
  for (int it = 0; it < iters; ++it) {
    const Vec eta = X * theta;
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-std::clamp(eta[i], -35.0, 35.0)));
    const Vec grad = X.transpose() * (p - r.cast<double>()) / n;
    Vec cand = theta - step * grad;
    for (int j = 1; j < q; ++j) {  // soft threshold, skip intercept
      const double t = lambda * step;
      cand[j] = std::copysign(std::max(std::abs(cand[j]) - t, 0.0), cand[j]);
    }
    const double fc = lasso_logistic_nll(X, r, cand);
    if ((cand - theta).lpNorm<Eigen::Infinity>() < 1e-10) break;
    theta = cand;
    f = fc;
  }
  (void)f;
  return theta;
}

}  // namespace

MarPropensityFit mar_propensity(const Dataset& data, const std::vector<int>& screened) {
  const int n = data.n();
  const int q = static_cast<int>(screened.size());
  Mat X(n, q + 1);
  X.col(0).setOnes();
  for (int j = 0; j < q; ++j) X.col(j + 1) = data.X.col(screened[j]);

  // standardize penalized columns for the path
  Standardizer stdz = Standardizer::fit(X.rightCols(q));
  Mat Xs = X;
  Xs.rightCols(q) = stdz.apply(X.rightCols(q));

  const Vec score0 = Xs.transpose() * (data.r.cast<double>().array() - data.response_rate()).matrix() / n;
  double lambda_max = 0.0;
  for (int j = 1; j <= q; ++j) lambda_max = std::max(lambda_max, std::abs(score0[j]));
  lambda_max = std::max(lambda_max, 1e-6);

  MarPropensityFit best;
  double best_bic = std::numeric_limits<double>::infinity();
  bool separation = false;
  for (int t = 0; t < 10; ++t) {
    const double lambda = lambda_max * std::pow(10.0, -3.0 * t / 9.0);
    const Vec theta = lasso_logistic(Xs, data.r, lambda, 500);
    if (theta.lpNorm<Eigen::Infinity>() > 50.0) {
      separation = true;
      continue;
    }
    int nnz = 1;
    for (int j = 1; j <= q; ++j)
      if (theta[j] != 0.0) ++nnz;
    const double bic = 2.0 * n * lasso_logistic_nll(Xs, data.r, theta) + std::log(n) * nnz;
    if (bic < best_bic) {
      best_bic = bic;
      best.theta = theta;
      best.lambda = lambda;
    }
  }

  if (best.theta.size() == 0 || separation) {
    // ridge fallback: Newton with a small L2 penalty on the coefficients
    best.ridge_fallback = true;
    Vec theta = Vec::Zero(q + 1);
    for (int it = 0; it < 100; ++it) {
      const Vec eta = Xs * theta;
      Vec p(n), w(n);
      for (int i = 0; i < n; ++i) {
        p[i] = 1.0 / (1.0 + std::exp(-std::clamp(eta[i], -35.0, 35.0)));
        w[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
      }
      Vec grad = Xs.transpose() * (p - data.r.cast<double>()) / n;
      grad.tail(q) += 1e-3 * theta.tail(q);
      if (grad.lpNorm<Eigen::Infinity>() < 1e-10) break;
      Mat H = Xs.transpose() * w.asDiagonal() * Xs / n;
      H.diagonal().tail(q).array() += 1e-3;
      H.diagonal().array() += 1e-10;
      theta -= H.ldlt().solve(grad);
    }
    if (best.theta.size() == 0 || separation) best.theta = theta;
    best.lambda = 0.0;
  }

  // map back to the raw covariate scale
  Vec theta_raw = best.theta;
  for (int j = 1; j <= q; ++j) theta_raw[j] = best.theta[j] / stdz.sd[j - 1];
  for (int j = 1; j <= q; ++j) theta_raw[0] -= best.theta[j] * stdz.mean[j - 1] / stdz.sd[j - 1];
  best.theta = theta_raw;

  best.pihat.resize(n);
  const Vec eta = X * best.theta;
  for (int i = 0; i < n; ++i)
    best.pihat[i] = 1.0 / (1.0 + std::exp(-std::clamp(eta[i], -35.0, 35.0)));
  return best;
}

IpwResult ipw_mar_weights(const Dataset& data, const std::vector<int>& screened,
                          const std::vector<std::vector<int>>& candidates,
                          const QuantileLevel& tau, double phi_n, const CqfOptions& opts) {
  const MarPropensityFit prop = mar_propensity(data, screened);
  IpwResult res = ipw_weights_from_propensity(data, prop.pihat, candidates, tau, phi_n, opts);
  res.warning = prop.ridge_fallback;
  return res;
}

TrueMechanismFit fit_true_mechanism(const Dataset& data, const Vec& y_complete,
                                    MnarMechanism kind) {
  const int n = data.n();
  Mat F(n, 4);
  for (int i = 0; i < n; ++i) {
    F(i, 0) = data.X(i, 0);
    F(i, 1) = data.X(i, 1);
    F(i, 2) = 1.0;
    F(i, 3) = kind == MnarMechanism::logistic ? y_complete[i]
                                              : data.X(i, 0) * std::sin(y_complete[i]);
  }

  TrueMechanismFit fit;
  if (kind == MnarMechanism::logistic) {
    // Pr(r=1) = sigmoid(-theta'f): logistic regression of 1-r on f
    IntVec z(n);
    for (int i = 0; i < n; ++i) z[i] = 1 - data.r[i];
    const LogisticFit lf = logistic_newton_offset(F, z, Vec::Zero(n));
    fit.theta = lf.beta;
    fit.converged = lf.converged;
    return fit;
  }

  // complementary log-log: Pr(r=1) = 1 - exp(-exp(theta'f)); Fisher scoring
  Vec theta = Vec::Zero(4);
  const auto nll = [&](const Vec& th) {
    const Vec eta = F * th;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = std::exp(std::clamp(eta[i], -30.0, 30.0));
      const double log_pi = std::log(std::max(-std::expm1(-t), 1e-300));
      s -= data.r[i] == 1 ? log_pi : -t;
    }
    return s / n;
  };
  double f = nll(theta);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const Vec eta = F * theta;
    Vec grad = Vec::Zero(4);
    Mat info = Mat::Zero(4, 4);
    for (int i = 0; i < n; ++i) {
      const double t = std::exp(std::clamp(eta[i], -30.0, 30.0));
      const double pi = std::min(std::max(-std::expm1(-t), 1e-12), 1.0 - 1e-12);
      const double dpi = t * std::exp(-t);  // d pi / d eta
      const double u = (data.r[i] - pi) / (pi * (1.0 - pi)) * dpi;
      grad -= u * F.row(i).transpose() / n;
      info.noalias() += (dpi * dpi / (pi * (1.0 - pi))) * F.row(i).transpose() * F.row(i) / n;
    }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10) {
      converged = true;
      break;
    }
    info.diagonal().array() += 1e-10;
    const Vec step = info.ldlt().solve(grad);
    double tls = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec cand = theta - tls * step;
      const double fc = nll(cand);
      if (fc < f - 1e-14) {
        theta = cand;
        f = fc;
        improved = true;
        break;
      }
      tls *= 0.5;
    }
    if (!improved) {
      converged = grad.lpNorm<Eigen::Infinity>() < 1e-6;
      break;
    }
  }
  fit.theta = theta;
  fit.converged = converged;
  return fit;
}

std::function<double(int, double)> true_mechanism_log_tilt(const Dataset& data,
                                                           const TrueMechanismFit& fit,
                                                           MnarMechanism kind) {
  const Vec theta = fit.theta;
  if (kind == MnarMechanism::logistic) {
    return [&data, theta](int i, double yv) {
      return theta[0] * data.X(i, 0) + theta[1] * data.X(i, 1) + theta[2] + theta[3] * yv;
    };
  }
  return [&data, theta](int i, double yv) {
    const double eta = theta[0] * data.X(i, 0) + theta[1] * data.X(i, 1) + theta[2] +
                       theta[3] * data.X(i, 0) * std::sin(yv);
    const double t = std::exp(std::clamp(eta, -30.0, 30.0));
    // odds of nonresponse: exp(-t) / (1 - exp(-t))
    return -t - std::log(std::max(-std::expm1(-t), 1e-300));
  };
}

}  // namespace sma
