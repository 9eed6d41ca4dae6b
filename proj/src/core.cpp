#include "sma/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sma {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

double log_gaussian_kernel(const Vec& u) {
  return -0.5 * (u.size() * kLogTwoPi + u.squaredNorm());
}

double gaussian_kernel(const Vec& u) { return std::exp(log_gaussian_kernel(u)); }

double bandwidth(double data_sd, int n, const KernelConfig& cfg) {
  if (!(data_sd > 0.0)) throw data_error("bandwidth needs a positive data sd");
  if (n < 2) throw data_error("bandwidth needs n >= 2");
  if (!(cfg.bandwidth_scale > 0.0)) throw config_error("bandwidth scale must be positive");
  const double h = cfg.bandwidth_scale * std::pow(static_cast<double>(n), cfg.bandwidth_exponent) * data_sd;
  if (!(h > 0.0)) throw numeric_error("degenerate bandwidth");
  return h;
}

namespace {

// Pairwise Euclidean distance matrix of the rows of a.
Mat row_distances(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  Mat d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = (a.row(i) - a.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

struct CenteredStats {
  Vec row_mean;
  double grand_mean;
};

CenteredStats centering_stats(const Mat& d) {
  CenteredStats s;
  s.row_mean = d.rowwise().mean();
  s.grand_mean = s.row_mean.mean();
  return s;
}

}  // namespace

double distance_correlation(const Mat& a, const Vec& b) {
  const int n = static_cast<int>(a.rows());
  if (n < 2) throw data_error("distance correlation needs n >= 2");
  if (b.size() != n) throw data_error("distance correlation size mismatch");

  const Mat da = row_distances(a);
  const Mat db = row_distances(Mat(b));
  const CenteredStats sa = centering_stats(da);
  const CenteredStats sb = centering_stats(db);

  double vab = 0.0, vaa = 0.0, vbb = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double ca = da(i, j) - sa.row_mean[i] - sa.row_mean[j] + sa.grand_mean;
      const double cb = db(i, j) - sb.row_mean[i] - sb.row_mean[j] + sb.grand_mean;
      vab += ca * cb;
      vaa += ca * ca;
      vbb += cb * cb;
    }
  }
  const double n2 = static_cast<double>(n) * n;
  vab /= n2;
  vaa /= n2;
  vbb /= n2;
  if (vaa <= 0.0 || vbb <= 0.0)
    throw data_error("distance correlation undefined for constant input");
  const double r2 = vab / std::sqrt(vaa * vbb);
  return std::sqrt(std::max(0.0, r2));
}

double distance_correlation(const Vec& a, const Vec& b) {
  return distance_correlation(Mat(a), b);
}

SimplexWeights project_to_simplex(const Vec& v) {
  const int n = static_cast<int>(v.size());
  if (n == 0) throw config_error("cannot project an empty vector onto the simplex");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cssv = 0.0, theta = 0.0;
  for (int k = 0; k < n; ++k) {
    cssv += u[k];
    const double t = (cssv - 1.0) / (k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  Vec w(n);
  for (int i = 0; i < n; ++i) w[i] = std::max(v[i] - theta, 0.0);
  const double s = w.sum();
  if (s <= 0.0) throw numeric_error("simplex projection collapsed");
  if (s != 1.0) w /= s;  // absorb rounding so the sum invariant holds
  return SimplexWeights{std::move(w)};
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_mean_exp(std::span<const double> v) {
  if (v.empty()) throw data_error("log_mean_exp of empty range");
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

double sample_mean(const Vec& v) { return v.mean(); }

double sample_sd(const Vec& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) throw data_error("sample sd needs n >= 2");
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1));
}

Standardizer Standardizer::fit(const Mat& x) {
  Standardizer s;
  const int q = static_cast<int>(x.cols());
  s.mean.resize(q);
  s.sd.resize(q);
  for (int j = 0; j < q; ++j) {
    s.mean[j] = x.col(j).mean();
    double v = (x.col(j).array() - s.mean[j]).square().sum() / std::max<int>(1, x.rows() - 1);
    s.sd[j] = v > 0.0 ? std::sqrt(v) : 1.0;  // constant column: leave unscaled
  }
  return s;
}

Mat Standardizer::apply(const Mat& x) const {
  Mat out = x;
  for (int j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - mean[j]) / sd[j];
  return out;
}

Vec Standardizer::apply_row(const Vec& x) const {
  Vec out = x;
  for (int j = 0; j < out.size(); ++j) out[j] = (out[j] - mean[j]) / sd[j];
  return out;
}

}  // namespace sma
