#pragma once

#include "sma/baselines.hpp"
#include "sma/pipeline.hpp"
#include "sma/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace sma {

enum class Scenario { heteroskedastic, homoscedastic };  // I / II

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);
MnarMechanism mechanism_from_string(const std::string& s);
std::string to_string(MnarMechanism m);

enum class Method { sma, sma_s, aic, bic, saic, sbic, cvma, ipw_mnar, ipw_mar, sma_t };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct SimConfig {
  int n = 150;
  int p = 0;  // 0 picks 5n
  Scenario scenario = Scenario::homoscedastic;
  MnarMechanism mechanism = MnarMechanism::logistic;
  double r_squared = 0.5;
  double tau = 0.5;
  int replications = 50;
  int test_size = 100;
  std::uint64_t seed = 1;
  bool appendix_dgp = false;  // sparse fixed-coefficient design
  double rho = 0.0;           // compound-symmetric correlation (appendix mode)

  int effective_p() const { return p > 0 ? p : 5 * n; }
  void validate() const;
};

struct TruthRecord {
  Vec beta;                 // full coefficient vector including the scale c
  double c = 1.0;
  Vec mu;                   // linear predictors
  Vec eps;                  // realized errors
  Vec y_complete;           // responses before missingness
  std::vector<int> active;  // CQF-active union mechanism-active indices
  Vec theta_mech;           // true mechanism parameters (set on missingness)
};

/// Complete-data draw from the configured generating process.
std::pair<Dataset, TruthRecord> generate_dgp(const SimConfig& cfg, std::uint64_t rep_seed);

/// True response probability at (x, y) for the configured mechanism.
double response_probability(const SimConfig& cfg, const Vec& theta, const Vec& x, double y);

/// True mechanism parameters for the (mechanism, scenario) cell.
Vec true_mechanism_theta(const SimConfig& cfg);

/// Draws response indicators and hides the affected responses (NaN).
/// Returns the realized missing rate.
double apply_missingness(Dataset& data, TruthRecord& truth, const SimConfig& cfg,
                         std::uint64_t rep_seed);

/// Mean check loss of a predictor over a test set.
double fpr_evaluate(const std::function<double(const Vec&)>& predictor, const Mat& x_test,
                    const Vec& y_test, const QuantileLevel& tau);

struct MethodStats {
  double mean_fpr = 0.0;
  double sd_fpr = 0.0;
  double mean_norm_fpr = 0.0;   // per-replication normalization
  double norm_of_means = 0.0;   // config-level normalization
  double mean_ms = 0.0, mean_fp = 0.0, mean_fn = 0.0;
  int clip_count = 0;
};

struct PerRepRow {
  int rep = 0;
  std::string method;
  double fpr = 0.0;
  double normalizer = 0.0;
  double missing_rate = 0.0;
  int ms = 0, fp = 0, fn = 0;
  double mean_acceptance = 0.0;
  int clip_count = 0;
};

struct FprReport {
  std::vector<std::pair<Method, MethodStats>> per_method;
  double missing_rate = 0.0;
  int failures = 0;
  int reps_done = 0;
  double mean_acceptance = 0.0;
  std::vector<PerRepRow> rows;

  const MethodStats* stats(Method m) const;
};

struct BenchConfig {
  SimConfig sim;
  std::vector<Method> methods{Method::sma_s};
  PipelineOptions pipeline;  // backend is per-method; remaining knobs shared
  int cv_folds = 5;
  int threads = 1;
};

/// Full per-replication pipeline: generate, inject missingness, screen,
/// fit every requested method, evaluate on a fresh complete test set.
FprReport run_bench(const BenchConfig& cfg);

}  // namespace sma
