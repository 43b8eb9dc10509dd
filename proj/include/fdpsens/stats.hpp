#ifndef FDPSENS_STATS_HPP
#define FDPSENS_STATS_HPP

namespace fdpsens {

// Standard normal distribution.
double normal_cdf(double x);
double normal_sf(double x);
// Inverse CDF, valid for p in (0,1). Accurate to ~1e-15 relative.
double normal_quantile(double p);

// Chi-squared with one degree of freedom.
// Upper tail P(X >= x) for x >= 0.
double chi2_sf1(double x);
// Quantile: x such that P(X <= x) = q, q in (0,1).
double chi2_quantile1(double q);

}  // namespace fdpsens

#endif
