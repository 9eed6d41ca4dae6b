#include "sma/optim.hpp"

#include "sma/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sma {

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& x0,
                             double init_step, int max_iter, double ftol) {
  const int d = static_cast<int>(x0.size());
  if (max_iter <= 0) max_iter = 500 * std::max(1, d);

  NelderMeadResult res;
  if (d == 0) {
    res.x = x0;
    res.f = f(x0);
    res.evals = 1;
    res.converged = true;
    return res;
  }

  std::vector<Vec> xs(d + 1, x0);
  std::vector<double> fs(d + 1);
  for (int i = 1; i <= d; ++i) xs[i][i - 1] += init_step;
  for (int i = 0; i <= d; ++i) fs[i] = f(xs[i]);
  res.evals = d + 1;

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  std::vector<int> order(d + 1);

  for (int it = 0; it < max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    const int best = order[0], worst = order[d], second = order[d - 1];

    if (fs[worst] - fs[best] < ftol * (1.0 + std::abs(fs[best]))) {
      res.converged = true;
      break;
    }

    Vec centroid = Vec::Zero(d);
    for (int i = 0; i <= d; ++i)
      if (i != worst) centroid += xs[i];
    centroid /= d;

    Vec xr = centroid + alpha * (centroid - xs[worst]);
    double fr = f(xr);
    ++res.evals;

    if (fr < fs[order[0]]) {
      Vec xe = centroid + gamma * (centroid - xs[worst]);
      double fe = f(xe);
      ++res.evals;
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
    } else if (fr < fs[second]) {
      xs[worst] = xr;
      fs[worst] = fr;
    } else {
      Vec xc = centroid + rho * (xs[worst] - centroid);
      double fc = f(xc);
      ++res.evals;
      if (fc < fs[worst]) {
        xs[worst] = xc;
        fs[worst] = fc;
      } else {
        for (int i = 0; i <= d; ++i) {
          if (i == best) continue;
          xs[i] = xs[best] + sigma * (xs[i] - xs[best]);
          fs[i] = f(xs[i]);
          ++res.evals;
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= d; ++i)
    if (fs[i] < fs[best]) best = i;
  res.x = xs[best];
  res.f = fs[best];
  return res;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol, int max_iter) {
  const double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

namespace {

double logistic_nll(const Mat& X, const IntVec& z, const Vec& offset, const Vec& beta) {
  const int n = static_cast<int>(X.rows());
  double s = 0.0;
  const Vec eta = X * beta + offset;
  for (int i = 0; i < n; ++i) s += log1pexp(eta[i]) - z[i] * eta[i];
  return s / n;
}

}  // namespace

LogisticFit logistic_newton_offset(const Mat& X, const IntVec& z, const Vec& offset,
                                   int max_iter, double tol) {
  const int n = static_cast<int>(X.rows());
  const int q = static_cast<int>(X.cols());
  LogisticFit fit;
  fit.beta = Vec::Zero(q);
  fit.nll = logistic_nll(X, z, offset, fit.beta);

  for (int it = 0; it < max_iter; ++it) {
    const Vec eta = X * fit.beta + offset;
    Vec p(n), wdiag(n);
    for (int i = 0; i < n; ++i) {
      const double pi = 1.0 / (1.0 + std::exp(-std::clamp(eta[i], -35.0, 35.0)));
      p[i] = pi;
      wdiag[i] = std::max(pi * (1.0 - pi), 1e-10);
    }
    Vec grad = X.transpose() * (p - z.cast<double>()) / n;
    if (grad.lpNorm<Eigen::Infinity>() < tol) {
      fit.converged = true;
      break;
    }
    Mat H = X.transpose() * wdiag.asDiagonal() * X / n;
    H.diagonal().array() += 1e-10;
    Vec step = H.ldlt().solve(grad);

    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec cand = fit.beta - t * step;
      const double cnll = logistic_nll(X, z, offset, cand);
      if (cnll <= fit.nll - 1e-14) {
        fit.beta = cand;
        fit.nll = cnll;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      fit.converged = grad.lpNorm<Eigen::Infinity>() < 1e-6;
      break;
    }
  }
  return fit;
}

bool prefer_simplex_point(const Vec& a, double fa, const Vec& b, double fb, const Vec& sizes,
                          double tol) {
  if (fa < fb - tol) return true;
  if (fb < fa - tol) return false;
  const double sa = a.dot(sizes), sb = b.dot(sizes);
  if (std::abs(sa - sb) > 1e-12) return sa < sb;
  for (int k = 0; k < a.size(); ++k)
    if (a[k] != b[k]) return a[k] > b[k];
  return false;
}

SubgradientResult projected_subgradient_simplex(
    const std::function<double(const Vec&, Vec&)>& fg, const Vec& w0, int iters) {
  Vec w = project_to_simplex(w0).w;
  Vec g(w.size());
  SubgradientResult best;
  best.w = w;
  best.f = fg(w, g);

  for (int t = 1; t <= iters; ++t) {
    const double fw = fg(w, g);
    if (fw < best.f) {
      best.f = fw;
      best.w = w;
    }
    const double gn2 = g.squaredNorm();
    if (gn2 < 1e-24) break;
    // Polyak step against the running best, relaxed by a vanishing margin.
    const double margin = 0.1 * std::abs(best.f) / t + 1e-12;
    const double step = (fw - best.f + margin) / gn2;
    w = project_to_simplex(w - step * g).w;
  }
  Vec gtmp(w.size());
  const double fw = fg(w, gtmp);
  if (fw < best.f) {
    best.f = fw;
    best.w = w;
  }
  return best;
}

}  // namespace sma
