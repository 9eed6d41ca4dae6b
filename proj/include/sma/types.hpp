#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sma {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IntVec = Eigen::VectorXi;

// Error taxonomy mirrored by CLI exit codes: config/usage -> 2,
// data -> 3, numerical failure -> 4.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& m) : std::runtime_error(m) {}
};
struct data_error : std::runtime_error {
  explicit data_error(const std::string& m) : std::runtime_error(m) {}
};
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& m) : std::runtime_error(m) {}
};

/// Probability level of the target conditional quantile.
struct QuantileLevel {
  double tau;
  explicit QuantileLevel(double t) : tau(t) {
    if (!(t > 0.0 && t < 1.0)) throw config_error("quantile level must lie in (0,1)");
  }
};

enum class KernelFamily { gaussian };

/// Bandwidth rule h = scale * n^exponent * sd.
struct KernelConfig {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth_scale = 1.5;
  double bandwidth_exponent = -1.0 / 3.0;
};

/// Covariates, partially observed responses, and response indicators.
/// y is meaningful only where r == 1; missing entries may be NaN.
struct Dataset {
  Mat X;     // n x p, fully observed
  Vec y;     // n
  IntVec r;  // n, each 0 or 1

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (y.size() != X.rows() || r.size() != X.rows())
      throw data_error("dataset row counts disagree");
    if (X.rows() == 0) throw data_error("empty dataset");
    for (int i = 0; i < r.size(); ++i) {
      if (r[i] != 0 && r[i] != 1) throw data_error("response indicator must be 0 or 1");
      if (r[i] == 1 && !std::isfinite(y[i]))
        throw data_error("observed response is not finite at row " + std::to_string(i + 1));
    }
  }

  int respondent_count() const { return r.sum(); }

  std::vector<int> respondents() const {
    std::vector<int> out;
    for (int i = 0; i < r.size(); ++i)
      if (r[i] == 1) out.push_back(i);
    return out;
  }

  std::vector<int> nonrespondents() const {
    std::vector<int> out;
    for (int i = 0; i < r.size(); ++i)
      if (r[i] == 0) out.push_back(i);
    return out;
  }

  double response_rate() const { return static_cast<double>(r.sum()) / n(); }

  /// Working response r*y with missing entries as exact zeros.
  Vec ybar() const {
    Vec out(n());
    for (int i = 0; i < n(); ++i) out[i] = (r[i] == 1) ? y[i] : 0.0;
    return out;
  }

  /// Missing-data estimation paths need both response classes present.
  void require_both_classes() const {
    const int nr = respondent_count();
    if (nr == 0 || nr == n())
      throw data_error("need at least one respondent and one nonrespondent");
  }
};

/// A point on the probability simplex.
struct SimplexWeights {
  Vec w;

  int size() const { return static_cast<int>(w.size()); }

  static SimplexWeights checked(Vec v) {
    if (v.size() == 0) throw config_error("empty weight vector");
    double s = 0.0;
    for (int k = 0; k < v.size(); ++k) {
      if (v[k] < 0.0) {
        if (v[k] < -1e-10) throw numeric_error("negative simplex weight");
        v[k] = 0.0;
      }
      s += v[k];
    }
    if (std::abs(s - 1.0) > 1e-10) throw numeric_error("simplex weights do not sum to one");
    return SimplexWeights{std::move(v)};
  }

  static SimplexWeights vertex(int size, int k) {
    Vec v = Vec::Zero(size);
    v[k] = 1.0;
    return SimplexWeights{std::move(v)};
  }

  static SimplexWeights uniform(int size) {
    return SimplexWeights{Vec::Constant(size, 1.0 / size)};
  }
};

}  // namespace sma
