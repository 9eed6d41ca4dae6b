#pragma once

#include "sma/types.hpp"

#include <vector>

namespace sma {

/// Screening budget d_n = floor(2n / (3 log n)).
int screen_budget(int n);

struct ScreeningResult {
  std::vector<int> ordered_indices;  // decreasing distance correlation with r*y
  Vec dc_values;                     // matching, nonincreasing
  int d_n = 0;
};

struct NestedCandidates {
  std::vector<std::vector<int>> index_sets;  // strictly nested, sizes increasing
  int count() const { return static_cast<int>(index_sets.size()); }
};

/// Ranks all p covariates by sample distance correlation with the working
/// response r*y and keeps the top d_n.
ScreeningResult dcsis_screen(const Dataset& data, int threads = 1);

/// Nested sets of sizes 2, 4, ..., d_n over the screened ordering.
NestedCandidates build_nested(const ScreeningResult& sr);

/// Same construction over an arbitrary ordered index list (post-selection
/// output): step-2 sizes with a final all-inclusive set.
NestedCandidates nested_from_indices(const std::vector<int>& ordered);

/// Grouped variable importance: dc(X[large], r*y) - dc(X[small], r*y).
double gvi(const std::vector<int>& indices_small, const std::vector<int>& indices_large,
           const Dataset& data);

struct PostSelectResult {
  std::vector<int> indices;       // selected, ordered by marginal dc
  std::vector<double> cum_dc;     // cumulative group dc over the screened ordering
  std::vector<double> gvi_trace;  // per-variable increments, gvi_trace[0] = cum_dc[0]
  double threshold = 0.0;
  bool hit_iteration_cap = false;
};

/// Default GVI cutoff: the smallest absolute per-variable increment over the
/// screened ordering. The literal minimum never binds (every increment is
/// >= its own minimum), so magnitudes are compared instead.
double auto_gvi_threshold(const std::vector<double>& gvi_trace);

/// Post-selection over the screened ordering: keep the top variable plus
/// every variable whose GVI increment reaches s_n (NaN -> auto threshold).
PostSelectResult post_selection(const Dataset& data, int d_n, double s_n);

/// Greedy refinement of post-selection: forward additions by best positive
/// grouped-importance gain, otherwise backward elimination of nonpositive
/// contributors, until a full pass changes nothing (capped at 10*d_n passes).
PostSelectResult greedy_post_selection(const Dataset& data, int d_n, double s_n);

/// GPS inner loop from an explicit starting set (exposed for fixed-point and
/// planted-noise checks).
PostSelectResult greedy_post_selection_from(const Dataset& data,
                                            const std::vector<int>& screened,
                                            const std::vector<int>& start, int d_n);

struct ReductionBasis {
  Mat B;                     // |columns| x d, orthonormal columns
  std::vector<int> columns;  // dataset column indices the rows refer to
  int d = 0;
  Vec eigenvalues;           // between-slice spectrum, descending

  /// Reduced predictor B' x[columns] for one dataset row.
  Vec reduce(const Vec& x_full) const;
  Mat reduce_all(const Mat& X) const;

  static ReductionBasis identity(const std::vector<int>& columns);
};

/// Sliced inverse regression on respondents over the given columns.
/// slices = 0 picks max(5, ceil(sqrt(respondent count))), clamped so each
/// slice keeps at least 5 respondents.
ReductionBasis sir_basis(const Dataset& data, const std::vector<int>& columns, int d = 1,
                         int slices = 0);

}  // namespace sma
