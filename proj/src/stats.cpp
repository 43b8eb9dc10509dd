#include "fdpsens/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdpsens {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;

// Rational initial guess for the inverse normal CDF (Acklam's method),
// refined below with Halley steps against the erfc-based CDF.
double acklam_guess(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    const double phigh = 1.0 - plow;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}
}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: p must lie in (0,1)");
    }
    double x = acklam_guess(p);
    // Two Halley refinements push the initial guess to full double precision.
    for (int it = 0; it < 2; ++it) {
        double e = normal_cdf(x) - p;
        double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double chi2_sf1(double x) {
    if (x < 0.0) return 1.0;
    return std::erfc(std::sqrt(0.5 * x));
}

double chi2_quantile1(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::domain_error("chi2_quantile1: q must lie in (0,1)");
    }
    double z = normal_quantile(0.5 * (1.0 + q));
    return z * z;
}

}  // namespace fdpsens
