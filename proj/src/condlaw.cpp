#include "sma/condlaw.hpp"

#include "sma/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sma {

Backend backend_from_string(const std::string& s) {
  if (s == "kernel") return Backend::kernel;
  if (s == "sampled") return Backend::sampled;
  throw config_error("unknown backend '" + s + "' (expected kernel or sampled)");
}

std::string to_string(Backend b) { return b == Backend::kernel ? "kernel" : "sampled"; }

std::vector<double> ConditionalLaw::tilt_weights(int i, double gamma) const {
  return tilt_weights(i, [gamma](double yv) { return gamma * yv; });
}

std::vector<double> ConditionalLaw::tilt_weights(
    int i, const std::function<double(double)>& log_tilt) const {
  const UnitSupport& u = unit(i);
  const size_t m = u.y.size();
  std::vector<double> lw(m);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < m; ++j) {
    lw[j] = u.base_lw[j] + log_tilt(u.y[j]);
    mx = std::max(mx, lw[j]);
  }
  std::vector<double> w(m);
  if (!std::isfinite(mx)) {
    // degenerate neighborhood: fall back to a flat average
    ++fallbacks_;
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(m));
    return w;
  }
  double s = 0.0;
  for (size_t j = 0; j < m; ++j) {
    w[j] = std::exp(lw[j] - mx);
    s += w[j];
  }
  for (auto& v : w) v /= s;
  return w;
}

double ConditionalLaw::m0(int i, double gamma, double fitted, const QuantileLevel& tau) const {
  const UnitSupport& u = unit(i);
  const std::vector<double> w = tilt_weights(i, gamma);
  double s = 0.0;
  for (size_t j = 0; j < u.y.size(); ++j) s += w[j] * check_loss(u.y[j] - fitted, tau);
  return s;
}

KernelConditionalLaw::KernelConditionalLaw(const Dataset& data, const ReductionBasis& basis,
                                           const KernelConfig& kcfg) {
  data.validate();
  const std::vector<int> resp = data.respondents();
  if (resp.empty()) throw data_error("kernel conditional law needs respondents");

  const Mat z_raw = basis.reduce_all(data.X);
  const Standardizer stdz = Standardizer::fit(z_raw);
  const Mat z = stdz.apply(z_raw);
  const double h = bandwidth(1.0, data.n(), kcfg);
  const double inv2h2 = 1.0 / (2.0 * h * h);

  const int n = data.n();
  units_.resize(n);
  log_denominator_.resize(n);
  log_response_rate_ = std::log(data.response_rate());

  for (int i = 0; i < n; ++i) {
    UnitSupport& u = units_[i];
    u.y.resize(resp.size());
    u.base_lw.resize(resp.size());
    for (size_t jj = 0; jj < resp.size(); ++jj) {
      const int j = resp[jj];
      u.y[jj] = data.y[j];
      u.base_lw[jj] = -(z.row(i) - z.row(j)).squaredNorm() * inv2h2;
    }
    std::vector<double> all(n);
    for (int j = 0; j < n; ++j) all[j] = -(z.row(i) - z.row(j)).squaredNorm() * inv2h2;
    log_denominator_[i] = log_sum_exp(all);
  }
}

double KernelConditionalLaw::m1(int i, double gamma) const {
  const UnitSupport& u = units_[i];
  std::vector<double> t(u.y.size());
  for (size_t j = 0; j < u.y.size(); ++j) t[j] = gamma * u.y[j] + u.base_lw[j];
  const double num = log_sum_exp(t);
  if (!std::isfinite(num) || !std::isfinite(log_denominator_[i])) {
    // empty effective neighborhood: global unkernelized tilted average
    ++fallbacks_;
    std::vector<double> g(u.y.size());
    for (size_t j = 0; j < u.y.size(); ++j) g[j] = gamma * u.y[j];
    return log_mean_exp(g);
  }
  return num - log_denominator_[i] - log_response_rate_;
}

SampledConditionalLaw::SampledConditionalLaw(const ConditionalDraws& draws) {
  const int n = static_cast<int>(draws.draws.rows());
  const int L = static_cast<int>(draws.draws.cols());
  if (n == 0 || L == 0) throw data_error("sampled conditional law needs draws");
  units_.resize(n);
  for (int i = 0; i < n; ++i) {
    units_[i].y.assign(draws.draws.row(i).begin(), draws.draws.row(i).end());
    units_[i].base_lw.assign(L, 0.0);
  }
}

double SampledConditionalLaw::m1(int i, double gamma) const {
  return m1_sampled(units_[i].y, gamma);
}

TiltedLaw TiltedLaw::from_gamma(const ConditionalLaw& law, double gamma) {
  TiltedLaw tl;
  const int n = law.n_units();
  tl.y.resize(n);
  tl.w.resize(n);
  for (int i = 0; i < n; ++i) {
    tl.y[i] = law.unit(i).y;
    tl.w[i] = law.tilt_weights(i, gamma);
  }
  return tl;
}

TiltedLaw TiltedLaw::from_log_tilt(const ConditionalLaw& law,
                                   const std::function<double(int, double)>& log_tilt) {
  TiltedLaw tl;
  const int n = law.n_units();
  tl.y.resize(n);
  tl.w.resize(n);
  for (int i = 0; i < n; ++i) {
    tl.y[i] = law.unit(i).y;
    tl.w[i] = law.tilt_weights(i, [&](double yv) { return log_tilt(i, yv); });
  }
  return tl;
}

double TiltedLaw::expected_check_loss(int i, double fitted, const QuantileLevel& tau) const {
  double s = 0.0;
  for (size_t j = 0; j < y[i].size(); ++j) s += w[i][j] * check_loss(y[i][j] - fitted, tau);
  return s;
}

}  // namespace sma
