#include "rowcol/stats.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "rowcol/errors.hpp"

namespace rowcol {

double rank_sum_p_smaller(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.empty() || b.empty())
    throw ConfigError("rank_sum: both samples must be non-empty");
  const std::size_t n = a.size(), m = b.size(), total = n + m;
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(total);
  for (double v : a) {
    if (!std::isfinite(v)) throw ConfigError("rank_sum: non-finite value");
    pooled.emplace_back(v, 1);
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw ConfigError("rank_sum: non-finite value");
    pooled.emplace_back(v, 0);
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  // Average ranks across tie groups; accumulate the tie correction term.
  double rank_sum_a = 0.0, tie_term = 0.0;
  std::size_t i = 0;
  while (i < total) {
    std::size_t j = i;
    while (j < total && pooled[j].first == pooled[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].second) rank_sum_a += avg_rank;
    tie_term += t * t * t - t;
    i = j;
  }

  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double nt = static_cast<double>(total);
  const double u = rank_sum_a - 0.5 * nn * (nn + 1.0);
  const double mu = 0.5 * nn * mm;
  const double var =
      nn * mm / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
  if (!(var > 0.0)) return 0.5;  // everything tied: no evidence either way
  const double z = (u + 0.5 - mu) / std::sqrt(var);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace rowcol
