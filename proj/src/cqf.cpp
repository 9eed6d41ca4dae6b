#include "sma/cqf.hpp"

#include "sma/core.hpp"
#include "sma/optim.hpp"
#include "sma/threads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sma {

double default_cqf_phi(int n) { return std::log(static_cast<double>(n)); }

Mat cqf_design(const Dataset& data, const std::vector<int>& candidate) {
  Mat d(data.n(), candidate.size() + 1);
  d.col(0).setOnes();
  for (size_t j = 0; j < candidate.size(); ++j) d.col(j + 1) = data.X.col(candidate[j]);
  return d;
}

namespace {

double exact_objective(const WeightedQrProblem& prob, const QuantileLevel& tau, const Vec& beta) {
  double s = 0.0;
  const Vec u = prob.v - prob.A * beta;
  for (int t = 0; t < u.size(); ++t) s += prob.w[t] * check_loss(u[t], tau);
  return s;
}

// quadratic-kink smoothing of the check loss, half-width delta
double smooth_objective(const WeightedQrProblem& prob, const QuantileLevel& tau, const Vec& beta,
                        double delta) {
  const Vec u = prob.v - prob.A * beta;
  double s = 0.0;
  for (int t = 0; t < u.size(); ++t) {
    const double ut = u[t];
    double val;
    if (ut >= delta)
      val = tau.tau * ut;
    else if (ut <= -delta)
      val = (tau.tau - 1.0) * ut;
    else
      val = ut * ut / (4.0 * delta) + (tau.tau - 0.5) * ut + delta / 4.0;
    s += prob.w[t] * val;
  }
  return s;
}

Vec smooth_newton(const WeightedQrProblem& prob, const QuantileLevel& tau, Vec beta,
                  double delta, int max_iter, bool* converged) {
  const int q = static_cast<int>(prob.A.cols());
  double fcur = smooth_objective(prob, tau, beta, delta);
  if (converged) *converged = false;
  for (int it = 0; it < max_iter; ++it) {
    const Vec u = prob.v - prob.A * beta;
    Vec grad = Vec::Zero(q);
    Mat hess = Mat::Zero(q, q);
    for (int t = 0; t < u.size(); ++t) {
      const double ut = u[t];
      double slope;
      if (ut >= delta)
        slope = tau.tau;
      else if (ut <= -delta)
        slope = tau.tau - 1.0;
      else {
        slope = ut / (2.0 * delta) + (tau.tau - 0.5);
        hess.noalias() += (prob.w[t] / (2.0 * delta)) * prob.A.row(t).transpose() * prob.A.row(t);
      }
      grad.noalias() -= prob.w[t] * slope * prob.A.row(t).transpose();
    }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-12) {
      if (converged) *converged = true;
      break;
    }
    hess.diagonal().array() += 1e-8 * (hess.trace() / q + 1.0);
    Vec step = hess.ldlt().solve(grad);
    double t_ls = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec cand = beta - t_ls * step;
      const double fc = smooth_objective(prob, tau, cand, delta);
      if (fc < fcur - 1e-15) {
        beta = cand;
        fcur = fc;
        improved = true;
        break;
      }
      t_ls *= 0.5;
    }
    if (!improved) {
      if (converged) *converged = grad.lpNorm<Eigen::Infinity>() < 1e-6;
      break;
    }
  }
  return beta;
}

// Exact-objective polish: interpolate through the q rows nearest the kink
// and greedily exchange basis members against nearby rows.
void active_set_polish(const WeightedQrProblem& prob, const QuantileLevel& tau, Vec& best_beta,
                       double& best_obj) {
  const int q = static_cast<int>(prob.A.cols());
  const int T = static_cast<int>(prob.A.rows());
  if (q > 6 || T < q) return;

  const Vec u = prob.v - prob.A * best_beta;
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(u[a]) < std::abs(u[b]); });
  const int pool_size = std::min(T, 3 * q + 2);
  std::vector<int> pool(order.begin(), order.begin() + pool_size);

  const auto solve_basis = [&](const std::vector<int>& basis, Vec& out) {
    Mat Ab(q, q);
    Vec vb(q);
    for (int j = 0; j < q; ++j) {
      Ab.row(j) = prob.A.row(basis[j]);
      vb[j] = prob.v[basis[j]];
    }
    Eigen::FullPivLU<Mat> lu(Ab);
    if (!lu.isInvertible()) return false;
    out = lu.solve(vb);
    return true;
  };

  // initial basis: smallest residuals with linearly independent rows
  std::vector<int> basis;
  {
    Mat rows(q, q);
    int have = 0;
    for (int idx : order) {
      rows.row(have) = prob.A.row(idx);
      Eigen::FullPivLU<Mat> lu(rows.topRows(have + 1));
      if (lu.rank() == have + 1) {
        basis.push_back(idx);
        ++have;
        if (have == q) break;
      }
    }
    if (have < q) return;
  }

  Vec beta;
  if (solve_basis(basis, beta)) {
    const double obj = exact_objective(prob, tau, beta);
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
    }
  }

  for (int round = 0; round < 25; ++round) {
    bool improved = false;
    for (int b = 0; b < q; ++b) {
      for (int cand : pool) {
        if (std::find(basis.begin(), basis.end(), cand) != basis.end()) continue;
        std::vector<int> trial = basis;
        trial[b] = cand;
        Vec tb;
        if (!solve_basis(trial, tb)) continue;
        const double obj = exact_objective(prob, tau, tb);
        if (obj < best_obj - 1e-15) {
          best_obj = obj;
          best_beta = tb;
          basis = trial;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
}

void subgradient_polish(const WeightedQrProblem& prob, const QuantileLevel& tau, Vec& best_beta,
                        double& best_obj, int iters) {
  Vec beta = best_beta;
  const double scale = sample_sd(prob.v) + 1e-12;
  for (int k = 1; k <= iters; ++k) {
    const Vec u = prob.v - prob.A * beta;
    Vec g = Vec::Zero(beta.size());
    for (int t = 0; t < u.size(); ++t)
      g.noalias() -= prob.w[t] * check_loss_slope(u[t], tau) * prob.A.row(t).transpose();
    const double gn = g.norm();
    if (gn < 1e-14) break;
    beta -= (0.02 * scale / (k * gn)) * g;
    const double obj = exact_objective(prob, tau, beta);
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
    }
  }
}

}  // namespace

CqfCandidateFit weighted_qr_fit(const WeightedQrProblem& prob, const QuantileLevel& tau,
                                double beta_cap) {
  const int q = static_cast<int>(prob.A.cols());
  CqfCandidateFit fit;

  // weighted least-squares start
  Mat gram = prob.A.transpose() * prob.w.asDiagonal() * prob.A;
  gram.diagonal().array() += 1e-8 * (gram.trace() / q + 1.0);
  Vec beta = gram.ldlt().solve(prob.A.transpose() * (prob.w.asDiagonal() * prob.v));

  double spread = 1.0;
  {
    const double sd = prob.v.size() > 1 ? sample_sd(prob.v) : 1.0;
    spread = sd > 0.0 ? sd : 1.0;
  }
  const double delta_target = 1e-4 * spread;
  bool converged = false;
  for (double delta = 0.5 * spread;; delta *= 0.2) {
    delta = std::max(delta, delta_target);
    beta = smooth_newton(prob, tau, beta, delta, 60, &converged);
    if (delta == delta_target) break;
  }

  double obj = exact_objective(prob, tau, beta);
  subgradient_polish(prob, tau, beta, obj, 200);
  active_set_polish(prob, tau, beta, obj);

  if (beta.norm() > beta_cap) {
    beta *= beta_cap / beta.norm();
    obj = exact_objective(prob, tau, beta);
    converged = false;
  }

  fit.params.beta = beta;
  fit.objective = obj;
  fit.converged = converged;
  return fit;
}

namespace {

// Pseudo-observations of the MNAR-adjusted criterion: respondents keep their
// own row, each nonrespondent contributes its tilted support.
WeightedQrProblem build_problem(const Dataset& data, const TiltedLaw& law, const Mat& design) {
  const int n = data.n();
  int rows = 0;
  for (int i = 0; i < n; ++i)
    rows += data.r[i] == 1 ? 1 : static_cast<int>(law.y[i].size());

  WeightedQrProblem prob;
  prob.A.resize(rows, design.cols());
  prob.v.resize(rows);
  prob.w.resize(rows);
  int t = 0;
  for (int i = 0; i < n; ++i) {
    if (data.r[i] == 1) {
      prob.A.row(t) = design.row(i);
      prob.v[t] = data.y[i];
      prob.w[t] = 1.0 / n;
      ++t;
    } else {
      for (size_t l = 0; l < law.y[i].size(); ++l) {
        prob.A.row(t) = design.row(i);
        prob.v[t] = law.y[i][l];
        prob.w[t] = law.w[i][l] / n;
        ++t;
      }
    }
  }
  return prob;
}

}  // namespace

CqfCandidateFit fit_cqf_candidate(const Dataset& data, const TiltedLaw& law,
                                  const std::vector<int>& candidate, const QuantileLevel& tau,
                                  const CqfOptions& opts) {
  const Mat design = cqf_design(data, candidate);  // empty set = intercept only
  if (data.respondent_count() < data.n() && law.n_units() != data.n())
    throw data_error("conditional law does not cover the dataset");
  return weighted_qr_fit(build_problem(data, law, design), tau, opts.beta_cap);
}

Mat candidate_predictions(const Dataset& data, const std::vector<CqfCandidateFit>& fits,
                          const std::vector<std::vector<int>>& candidates) {
  const int S = static_cast<int>(fits.size());
  Mat mu(data.n(), S);
  for (int m = 0; m < S; ++m)
    mu.col(m) = cqf_design(data, candidates[m]) * fits[m].params.beta;
  return mu;
}

double ql_criterion(const Dataset& data, const TiltedLaw& law, const Mat& mu,
                    const std::vector<std::vector<int>>& candidates,
                    const SimplexWeights& weights, const QuantileLevel& tau, double phi_n) {
  const int n = data.n();
  const Vec q = mu * weights.w;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (data.r[i] == 1)
      s += check_loss(data.y[i] - q[i], tau);
    else
      s += law.expected_check_loss(i, q[i], tau);
  }
  double penalty = 0.0;
  for (size_t m = 0; m < candidates.size(); ++m)
    penalty += weights.w[m] * candidates[m].size();
  return s / n + phi_n / n * penalty;
}

SimplexWeights optimize_cqf_weights(const Dataset& data, const TiltedLaw& law, const Mat& mu,
                                    const std::vector<std::vector<int>>& candidates,
                                    const QuantileLevel& tau, double phi_n, Backend backend,
                                    int subgradient_iters) {
  const int S = static_cast<int>(candidates.size());
  if (S < 1) throw config_error("weight optimization needs at least one candidate");
  if (S == 1) return SimplexWeights::vertex(1, 0);

  const int n = data.n();
  Vec sizes(S);
  for (int m = 0; m < S; ++m) sizes[m] = static_cast<double>(candidates[m].size());

  const auto value = [&](const Vec& w) {
    return ql_criterion(data, law, mu, candidates,
                        SimplexWeights{w}, tau, phi_n);
  };

  Vec best_w;
  double best_f = std::numeric_limits<double>::infinity();
  const auto consider = [&](const Vec& w) {
    const double f = value(w);
    if (best_w.size() == 0 || prefer_simplex_point(w, f, best_w, best_f, sizes)) {
      best_w = w;
      best_f = f;
    }
  };

  for (int m = 0; m < S; ++m) consider(SimplexWeights::vertex(S, m).w);

  if (backend == Backend::sampled) {
    const auto fg = [&](const Vec& w, Vec& g) {
      const Vec q = mu * w;
      g = (phi_n / n) * sizes;
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        if (data.r[i] == 1) {
          const double u = data.y[i] - q[i];
          s += check_loss(u, tau);
          g.noalias() -= (check_loss_slope(u, tau) / n) * mu.row(i).transpose();
        } else {
          double slope_sum = 0.0;
          for (size_t l = 0; l < law.y[i].size(); ++l) {
            const double u = law.y[i][l] - q[i];
            s += law.w[i][l] * check_loss(u, tau);
            slope_sum += law.w[i][l] * check_loss_slope(u, tau);
          }
          g.noalias() -= (slope_sum / n) * mu.row(i).transpose();
        }
      }
      return s / n + (phi_n / n) * w.dot(sizes);
    };
    const SubgradientResult sr =
        projected_subgradient_simplex(fg, SimplexWeights::uniform(S).w, subgradient_iters);
    consider(sr.w);
  } else {
    const auto softmax = [](const Vec& s) {
      const double m = s.maxCoeff();
      Vec w = (s.array() - m).exp();
      w /= w.sum();
      return w;
    };
    const auto objective = [&](const Vec& s) { return value(softmax(s)); };
    std::vector<Vec> starts;
    starts.push_back(Vec::Zero(S));
    for (int k = 0; k < S; ++k) {
      Vec s = Vec::Zero(S);
      s[k] = 8.0;
      starts.push_back(s);
    }
    for (const Vec& s0 : starts) {
      const NelderMeadResult r = nelder_mead(objective, s0, 1.0, 400 * S, 1e-12);
      consider(softmax(r.x));
    }
  }
  return SimplexWeights::checked(best_w);
}

CqfFit fit_cqf(const Dataset& data, const TiltedLaw& law,
               const std::vector<std::vector<int>>& candidates, double gamma_hat,
               const QuantileLevel& tau, Backend backend, const CqfOptions& opts) {
  CqfFit fit;
  fit.candidates = candidates;
  fit.tau = tau.tau;
  fit.gamma_hat = gamma_hat;
  fit.phi_n = opts.phi_n > 0.0 ? opts.phi_n : default_cqf_phi(data.n());
  fit.p = data.p();

  fit.per_candidate.resize(candidates.size());
  parallel_for(static_cast<int>(candidates.size()), opts.threads, [&](int m) {
    fit.per_candidate[m] = fit_cqf_candidate(data, law, candidates[m], tau, opts);
  });

  const Mat mu = candidate_predictions(data, fit.per_candidate, candidates);
  fit.weights = optimize_cqf_weights(data, law, mu, candidates, tau, fit.phi_n, backend,
                                     opts.subgradient_iters);
  return fit;
}

double predict_cqf(const CqfFit& fit, const Vec& x_new) {
  if (fit.p > 0 && x_new.size() != fit.p)
    throw data_error("prediction input has wrong dimension");
  double q = 0.0;
  for (size_t m = 0; m < fit.candidates.size(); ++m) {
    const Vec& beta = fit.per_candidate[m].params.beta;
    double mu = beta[0];
    for (size_t j = 0; j < fit.candidates[m].size(); ++j)
      mu += beta[j + 1] * x_new[fit.candidates[m][j]];
    q += fit.weights.w[m] * mu;
  }
  return q;
}

std::pair<double, double> check_identity_diagnostic(const Dataset& data, const TiltedLaw& law,
                                                    const QuantileLevel& tau,
                                                    const Vec& mu_true, const Vec& eps_true) {
  const int n = data.n();
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < n; ++i) {
    lhs += check_loss(eps_true[i], tau);
    if (data.r[i] == 1)
      rhs += check_loss(eps_true[i], tau);
    else
      rhs += law.expected_check_loss(i, mu_true[i], tau);
  }
  return {lhs / n, rhs / n};
}

}  // namespace sma
