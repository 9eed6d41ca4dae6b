#include "sma/sampling.hpp"

#include "sma/core.hpp"
#include "sma/rng.hpp"
#include "sma/threads.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

namespace sma {

JointKde::JointKde(const Dataset& data, const ReductionBasis& basis, const KernelConfig& kcfg)
    : basis_(basis) {
  data.validate();
  const std::vector<int> resp = data.respondents();
  if (static_cast<int>(resp.size()) < 1) throw data_error("kde needs at least one respondent");

  Mat z = basis.reduce_all(data.X);
  std_z_ = Standardizer::fit(z);
  z_std_ = std_z_.apply(z);

  Vec yresp(resp.size());
  for (size_t i = 0; i < resp.size(); ++i) yresp[i] = data.y[resp[i]];
  y_mean_ = yresp.mean();
  y_sd_ = resp.size() > 1 ? sample_sd(yresp) : 1.0;
  if (y_sd_ <= 0.0) y_sd_ = 1.0;

  resp_z_.resize(resp.size(), z_std_.cols());
  resp_y_vec_ = yresp;
  resp_y_.assign(yresp.data(), yresp.data() + yresp.size());
  for (size_t i = 0; i < resp.size(); ++i) resp_z_.row(i) = z_std_.row(resp[i]);

  h_ = bandwidth(1.0, data.n(), kcfg);
}

Vec JointKde::component_logweights(const Vec& z_std) const {
  const int m = static_cast<int>(resp_z_.rows());
  Vec lw(m);
  const double inv2h2 = 1.0 / (2.0 * h_ * h_);
  for (int j = 0; j < m; ++j)
    lw[j] = -(resp_z_.row(j).transpose() - z_std).squaredNorm() * inv2h2;
  return lw;
}

namespace {

double conditional_lse(const Vec& lw, const std::vector<double>& resp_y, double y,
                       double y_mean, double y_sd, double h) {
  const double ys = (y - y_mean) / y_sd;
  const double inv2h2 = 1.0 / (2.0 * h * h);
  std::vector<double> terms(lw.size());
  for (int j = 0; j < lw.size(); ++j) {
    const double dy = ys - (resp_y[j] - y_mean) / y_sd;
    terms[j] = lw[j] - dy * dy * inv2h2;
  }
  return log_sum_exp(terms);
}

}  // namespace

double JointKde::log_density(const Vec& x_full, double y) const {
  const Vec z = std_z_.apply_row(basis_.reduce(x_full));
  return conditional_lse(component_logweights(z), resp_y_, y, y_mean_, y_sd_, h_);
}

double JointKde::log_conditional(int unit, double y) const {
  return conditional_lse(component_logweights(z_std_.row(unit)), resp_y_, y, y_mean_, y_sd_, h_);
}

namespace {

struct UnitTarget {
  std::vector<double> comp_y;   // component centers, raw y scale
  std::vector<double> comp_lw;  // x-part log-weights, max-shifted
  double sd = 0.0;              // kernel sd in raw y units

  double log_density(double y) const {
    const double inv2s2 = 1.0 / (2.0 * sd * sd);
    double m = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < comp_y.size(); ++j) {
      const double d = y - comp_y[j];
      m = std::max(m, comp_lw[j] - d * d * inv2s2);
    }
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (size_t j = 0; j < comp_y.size(); ++j) {
      const double d = y - comp_y[j];
      s += std::exp(comp_lw[j] - d * d * inv2s2 - m);
    }
    return m + std::log(s);
  }
};

UnitTarget build_target(const JointKde& kde, const Vec& lw, int max_components) {
  UnitTarget t;
  const int m = static_cast<int>(lw.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lw[a] > lw[b]; });

  const double lw_max = lw[order[0]];
  const int keep = std::min(m, max_components);
  for (int t_i = 0; t_i < keep; ++t_i) {
    const int j = order[t_i];
    if (lw[j] < lw_max - 27.6) break;  // below 1e-12 relative weight
    t.comp_y.push_back(kde.respondent_y()[j]);
    t.comp_lw.push_back(lw[j] - lw_max);
  }
  t.sd = kde.bandwidth() * kde.y_sd();
  return t;
}

}  // namespace

ConditionalDraws sample_conditional(const Dataset& data, const ReductionBasis& basis,
                                    const SamplerConfig& cfg, const KernelConfig& kcfg,
                                    int threads) {
  cfg.validate();
  const JointKde kde(data, basis, kcfg);
  if (kde.respondent_count() < 1) throw data_error("sampler needs respondents");

  const int n = data.n();
  ConditionalDraws out;
  out.draws.resize(n, cfg.keep_last);
  out.acceptance_rates.resize(n);
  std::atomic<int> fallbacks{0};

  parallel_for(n, threads, [&](int i) {
    Rng rng(mix_seed(cfg.seed, 0x5a4d, static_cast<std::uint64_t>(i)));
    const Vec lw = kde.component_logweights(kde.unit_reduced_std(i));
    const UnitTarget target = build_target(kde, lw, cfg.max_components);

    const double prop_sd = cfg.proposal_sd_scale * target.sd;
    double y = target.comp_y[0];  // nearest respondent in reduced space
    double logf = target.log_density(y);
    int accepted = 0;
    const int burn = cfg.total_iterations - cfg.keep_last;

    if (!std::isfinite(logf)) {
      // Degenerate target: kernel-weighted draw over respondent values.
      fallbacks.fetch_add(1, std::memory_order_relaxed);
      for (int t = 0; t < cfg.keep_last; ++t)
        out.draws(i, t) = target.comp_y[rng.uniform_int(static_cast<int>(target.comp_y.size()))];
      out.acceptance_rates[i] = 0.0;
      return;
    }

    for (int t = 0; t < cfg.total_iterations; ++t) {
      const double prop = y + prop_sd * rng.normal();
      const double logf_prop = target.log_density(prop);
      const double logu = std::log(1.0 - rng.uniform());
      if (logf_prop - logf >= logu) {
        y = prop;
        logf = logf_prop;
        ++accepted;
      }
      if (t >= burn) out.draws(i, t - burn) = y;
    }
    out.acceptance_rates[i] = static_cast<double>(accepted) / cfg.total_iterations;
  });

  out.fallback_count = fallbacks.load();
  return out;
}

double m1_sampled(std::span<const double> draws_i, double gamma) {
  if (draws_i.empty()) throw data_error("m1_sampled: empty draws");
  std::vector<double> t(draws_i.size());
  for (size_t l = 0; l < draws_i.size(); ++l) t[l] = gamma * draws_i[l];
  return log_mean_exp(t);
}

double m0_sampled(std::span<const double> draws_i, double gamma, double fitted,
                  const QuantileLevel& tau) {
  if (draws_i.empty()) throw data_error("m0_sampled: empty draws");
  double m = -std::numeric_limits<double>::infinity();
  for (double yl : draws_i) m = std::max(m, gamma * yl);
  double num = 0.0, den = 0.0;
  for (double yl : draws_i) {
    const double w = std::exp(gamma * yl - m);
    num += w * check_loss(yl - fitted, tau);
    den += w;
  }
  return num / den;
}

}  // namespace sma
