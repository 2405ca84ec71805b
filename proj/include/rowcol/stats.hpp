#pragma once

#include <vector>

namespace rowcol {

// One-sided Wilcoxon rank-sum (Mann-Whitney) p-value for the alternative
// "a is stochastically smaller than b", using the normal approximation with
// tie correction and continuity correction.  Returns 0.5 when the variance
// degenerates (e.g. every value tied).  Throws ConfigError on empty input.
double rank_sum_p_smaller(const std::vector<double>& a,
                          const std::vector<double>& b);

}  // namespace rowcol
