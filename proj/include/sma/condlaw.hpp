#pragma once

#include "sma/sampling.hpp"
#include "sma/screening.hpp"
#include "sma/types.hpp"

#include <functional>
#include <memory>

namespace sma {

enum class Backend { kernel, sampled };

Backend backend_from_string(const std::string& s);
std::string to_string(Backend b);

/// Support points approximating y | x_i, r=1 for one unit: values plus base
/// log-weights (kernel smoother weights, or zeros for Metropolis draws).
struct UnitSupport {
  std::vector<double> y;
  std::vector<double> base_lw;
};

/// Backend-agnostic access to respondents' conditional law. Both the
/// mechanism and CQF stages consume only this interface.
class ConditionalLaw {
 public:
  virtual ~ConditionalLaw() = default;
  virtual Backend backend() const = 0;
  virtual int n_units() const = 0;
  virtual const UnitSupport& unit(int i) const = 0;

  /// log of the tilted conditional mean used in the mechanism linear
  /// predictor; each backend carries its own estimator form.
  virtual double m1(int i, double gamma) const = 0;

  /// Tilted expected check loss at the fitted value (the M0 building block).
  double m0(int i, double gamma, double fitted, const QuantileLevel& tau) const;

  /// Normalized exponential-tilt weights over the unit support.
  std::vector<double> tilt_weights(int i, double gamma) const;
  std::vector<double> tilt_weights(int i, const std::function<double(double)>& log_tilt) const;

  int fallback_count() const { return fallbacks_; }

 protected:
  mutable int fallbacks_ = 0;
};

/// Nadaraya-Watson machinery over reduced predictors: per-unit support is
/// the respondent set with Gaussian kernel log-weights.
class KernelConditionalLaw : public ConditionalLaw {
 public:
  KernelConditionalLaw(const Dataset& data, const ReductionBasis& basis,
                       const KernelConfig& kcfg = KernelConfig{});

  Backend backend() const override { return Backend::kernel; }
  int n_units() const override { return static_cast<int>(units_.size()); }
  const UnitSupport& unit(int i) const override { return units_[i]; }
  double m1(int i, double gamma) const override;

 private:
  std::vector<UnitSupport> units_;
  Vec log_denominator_;  // log sum over all rows of kernel weights, per unit
  double log_response_rate_ = 0.0;
};

/// Support built from Metropolis draws; m1 is the log-mean-exp form.
class SampledConditionalLaw : public ConditionalLaw {
 public:
  explicit SampledConditionalLaw(const ConditionalDraws& draws);

  Backend backend() const override { return Backend::sampled; }
  int n_units() const override { return static_cast<int>(units_.size()); }
  const UnitSupport& unit(int i) const override { return units_[i]; }
  double m1(int i, double gamma) const override;

 private:
  std::vector<UnitSupport> units_;
};

/// A conditional law frozen at a fixed tilt: per-unit support values with
/// normalized weights. This is what the CQF objectives consume.
struct TiltedLaw {
  std::vector<std::vector<double>> y;
  std::vector<std::vector<double>> w;

  static TiltedLaw from_gamma(const ConditionalLaw& law, double gamma);
  /// log_tilt(i, y) is the log odds weight attached to a support value; any
  /// x-only factor cancels in the per-unit normalization.
  static TiltedLaw from_log_tilt(const ConditionalLaw& law,
                                 const std::function<double(int, double)>& log_tilt);

  int n_units() const { return static_cast<int>(y.size()); }
  double expected_check_loss(int i, double fitted, const QuantileLevel& tau) const;
};

}  // namespace sma
