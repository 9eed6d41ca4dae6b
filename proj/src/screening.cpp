#include "sma/screening.hpp"

#include "sma/core.hpp"
#include "sma/threads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace sma {

int screen_budget(int n) {
  return static_cast<int>(std::floor(2.0 * n / (3.0 * std::log(static_cast<double>(n)))));
}

namespace {

Mat submatrix(const Mat& X, const std::vector<int>& cols) {
  Mat out(X.rows(), cols.size());
  for (size_t j = 0; j < cols.size(); ++j) out.col(j) = X.col(cols[j]);
  return out;
}

double group_dc(const Dataset& data, const std::vector<int>& cols, const Vec& ybar) {
  return distance_correlation(submatrix(data.X, cols), ybar);
}

}  // namespace

ScreeningResult dcsis_screen(const Dataset& data, int threads) {
  data.validate();
  const int n = data.n(), p = data.p();
  if (n < 10) throw data_error("screening needs n >= 10");
  const int d_n = screen_budget(n);
  if (d_n < 1) throw config_error("screening budget d_n < 1");

  const Vec ybar = data.ybar();
  Vec dc(p);
  parallel_for(p, threads, [&](int j) { dc[j] = distance_correlation(Vec(data.X.col(j)), ybar); });

  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dc[a] > dc[b]; });

  ScreeningResult sr;
  sr.d_n = std::min(d_n, p);
  sr.ordered_indices.assign(order.begin(), order.begin() + sr.d_n);
  sr.dc_values.resize(sr.d_n);
  for (int t = 0; t < sr.d_n; ++t) sr.dc_values[t] = dc[sr.ordered_indices[t]];
  return sr;
}

NestedCandidates nested_from_indices(const std::vector<int>& ordered) {
  const int d = static_cast<int>(ordered.size());
  if (d < 1) throw config_error("cannot build candidates from an empty index list");
  NestedCandidates nc;
  if (d == 1) {
    nc.index_sets.push_back(ordered);
    return nc;
  }
  for (int size = 2; size < d; size += 2)
    nc.index_sets.emplace_back(ordered.begin(), ordered.begin() + size);
  nc.index_sets.push_back(ordered);
  return nc;
}

NestedCandidates build_nested(const ScreeningResult& sr) {
  if (sr.d_n < 2) throw config_error("nested candidates need d_n >= 2");
  return nested_from_indices(sr.ordered_indices);
}

double gvi(const std::vector<int>& indices_small, const std::vector<int>& indices_large,
           const Dataset& data) {
  const std::set<int> large(indices_large.begin(), indices_large.end());
  for (int j : indices_small)
    if (!large.count(j)) throw config_error("gvi: small group is not contained in large group");
  const Vec ybar = data.ybar();
  const double d_large = group_dc(data, indices_large, ybar);
  if (indices_small.empty()) return d_large;
  if (indices_small.size() == indices_large.size()) return 0.0;
  return d_large - group_dc(data, indices_small, ybar);
}

double auto_gvi_threshold(const std::vector<double>& gvi_trace) {
  double m = std::numeric_limits<double>::infinity();
  for (double g : gvi_trace) m = std::min(m, std::abs(g));
  return m;
}

PostSelectResult post_selection(const Dataset& data, int d_n, double s_n) {
  if (d_n < 2) throw config_error("post-selection needs d_n >= 2");
  ScreeningResult sr = dcsis_screen(data);
  sr.d_n = std::min(d_n, static_cast<int>(sr.ordered_indices.size()));
  sr.ordered_indices.resize(sr.d_n);

  const Vec ybar = data.ybar();
  PostSelectResult res;
  res.cum_dc.resize(sr.d_n);
  res.gvi_trace.resize(sr.d_n);
  std::vector<int> prefix;
  for (int t = 0; t < sr.d_n; ++t) {
    prefix.push_back(sr.ordered_indices[t]);
    res.cum_dc[t] = group_dc(data, prefix, ybar);
    res.gvi_trace[t] = t == 0 ? res.cum_dc[0] : res.cum_dc[t] - res.cum_dc[t - 1];
  }

  res.threshold = std::isnan(s_n) ? auto_gvi_threshold(res.gvi_trace) : s_n;
  res.indices.push_back(sr.ordered_indices[0]);
  for (int t = 1; t < sr.d_n; ++t)
    if (res.gvi_trace[t] >= res.threshold) res.indices.push_back(sr.ordered_indices[t]);
  return res;
}

namespace {

std::vector<int> resort_by_marginal_dc(const Dataset& data, const std::vector<int>& set) {
  const Vec ybar = data.ybar();
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(set.size());
  for (int j : set) ranked.emplace_back(distance_correlation(Vec(data.X.col(j)), ybar), j);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(ranked.size());
  for (auto& pr : ranked) out.push_back(pr.second);
  return out;
}

}  // namespace

PostSelectResult greedy_post_selection_from(const Dataset& data,
                                            const std::vector<int>& screened,
                                            const std::vector<int>& start, int d_n) {
  const Vec ybar = data.ybar();
  std::vector<int> current = start;
  PostSelectResult res;

  const int cap = 10 * std::max(1, d_n);
  for (int pass = 0;; ++pass) {
    if (pass >= cap) {
      res.hit_iteration_cap = true;
      break;
    }
    const std::vector<int> before = current;
    const double dc_current = group_dc(data, current, ybar);

    // F-step: best single addition from the screened pool.
    int best_add = -1;
    double best_gain = 0.0;
    for (int k : screened) {
      if (std::find(current.begin(), current.end(), k) != current.end()) continue;
      std::vector<int> trial = current;
      trial.push_back(k);
      const double gain = group_dc(data, trial, ybar) - dc_current;
      if (gain > best_gain) {
        best_gain = gain;
        best_add = k;
      }
    }
    if (best_add >= 0) {
      current.push_back(best_add);
    } else {
      // E-step: repeatedly drop the member with the smallest grouped
      // importance while it is nonpositive.
      while (current.size() > 1) {
        const double dc_full = group_dc(data, current, ybar);
        int worst = -1;
        double worst_gvi = std::numeric_limits<double>::infinity();
        for (int k : current) {
          std::vector<int> without;
          for (int j : current)
            if (j != k) without.push_back(j);
          const double g = dc_full - group_dc(data, without, ybar);
          if (g < worst_gvi) {
            worst_gvi = g;
            worst = k;
          }
        }
        if (worst_gvi <= 0.0 && worst >= 0)
          current.erase(std::find(current.begin(), current.end(), worst));
        else
          break;
      }
    }
    if (current == before) break;
  }

  res.indices = resort_by_marginal_dc(data, current);
  return res;
}

PostSelectResult greedy_post_selection(const Dataset& data, int d_n, double s_n) {
  PostSelectResult ps = post_selection(data, d_n, s_n);
  ScreeningResult sr = dcsis_screen(data);
  sr.ordered_indices.resize(std::min<size_t>(d_n, sr.ordered_indices.size()));

  PostSelectResult res = greedy_post_selection_from(data, sr.ordered_indices, ps.indices, d_n);
  res.cum_dc = ps.cum_dc;
  res.gvi_trace = ps.gvi_trace;
  res.threshold = ps.threshold;
  return res;
}

Vec ReductionBasis::reduce(const Vec& x_full) const {
  Vec sub(columns.size());
  for (size_t j = 0; j < columns.size(); ++j) sub[j] = x_full[columns[j]];
  return B.transpose() * sub;
}

Mat ReductionBasis::reduce_all(const Mat& X) const {
  Mat sub(X.rows(), columns.size());
  for (size_t j = 0; j < columns.size(); ++j) sub.col(j) = X.col(columns[j]);
  return sub * B;
}

ReductionBasis ReductionBasis::identity(const std::vector<int>& columns) {
  ReductionBasis rb;
  rb.columns = columns;
  rb.d = static_cast<int>(columns.size());
  rb.B = Mat::Identity(rb.d, rb.d);
  rb.eigenvalues = Vec::Ones(rb.d);
  return rb;
}

ReductionBasis sir_basis(const Dataset& data, const std::vector<int>& columns, int d,
                         int slices) {
  const std::vector<int> resp = data.respondents();
  const int m = static_cast<int>(resp.size());
  const int q = static_cast<int>(columns.size());
  if (d < 1) throw config_error("reduction dimension must be >= 1");

  if (slices <= 0) slices = std::max(5, static_cast<int>(std::ceil(std::sqrt(m))));
  slices = std::min(slices, std::max(2, m / 5));  // keep >= 5 respondents per slice
  if (slices < d + 1) throw data_error("sir: too few respondents for requested dimension");

  Mat Xr(m, q);
  Vec yr(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < q; ++j) Xr(i, j) = data.X(resp[i], columns[j]);
    yr[i] = data.y[resp[i]];
  }

  const Vec mu = Xr.colwise().mean();
  Mat Xc = Xr.rowwise() - mu.transpose();
  Mat cov = Xc.transpose() * Xc / m;
  cov.diagonal().array() += 1e-10;

  Eigen::SelfAdjointEigenSolver<Mat> cov_eig(cov);
  const Vec ev = cov_eig.eigenvalues().cwiseMax(1e-12);
  const Mat U = cov_eig.eigenvectors();
  const Mat cov_inv_sqrt = U * ev.cwiseSqrt().cwiseInverse().asDiagonal() * U.transpose();

  Mat Z = Xc * cov_inv_sqrt;

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return yr[a] < yr[b]; });

  Mat between = Mat::Zero(q, q);
  int start = 0;
  for (int h = 0; h < slices; ++h) {
    const int count = m / slices + (h < m % slices ? 1 : 0);
    Vec zbar = Vec::Zero(q);
    for (int t = start; t < start + count; ++t) zbar += Z.row(order[t]).transpose();
    zbar /= count;
    between += (static_cast<double>(count) / m) * zbar * zbar.transpose();
    start += count;
  }

  Eigen::SelfAdjointEigenSolver<Mat> eig(between);
  ReductionBasis rb;
  rb.columns = columns;

  // Descending spectrum; keep directions with genuinely positive eigenvalues.
  int usable = 0;
  for (int j = 0; j < q; ++j)
    if (eig.eigenvalues()[q - 1 - j] > 1e-10) ++usable;
  rb.d = std::min(d, std::max(1, usable));

  rb.eigenvalues.resize(rb.d);
  Mat dirs(q, rb.d);
  for (int j = 0; j < rb.d; ++j) {
    rb.eigenvalues[j] = eig.eigenvalues()[q - 1 - j];
    dirs.col(j) = eig.eigenvectors().col(q - 1 - j);
  }

  Mat B = cov_inv_sqrt * dirs;  // back to original coordinates
  Eigen::HouseholderQR<Mat> qr(B);
  rb.B = qr.householderQ() * Mat::Identity(q, rb.d);
  return rb;
}

}  // namespace sma
