#include "mdm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mdm/error.hpp"

namespace mdm {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ValidationError("normal_quantile: p must lie in [0,1]");
  }
  // Acklam's rational approximation, then two Halley steps on the erfc form.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  const double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - lo) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    x -= u / (1 + x * u / 2);
  }
  return x;
}

// Shifted by the first value, so constant input gives exact results.
double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v - x[0];
  return x[0] + acc / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x) - x[0];
  double acc = 0.0;
  for (double v : x) acc += (v - x[0] - m) * (v - x[0] - m);
  return acc / static_cast<double>(x.size() - 1);
}

double mean_stderr(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(variance_of(x) / static_cast<double>(x.size()));
}

double variance_stderr(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 3) return 0.0;
  const double m = mean_of(x);
  double s2 = 0.0;
  for (double v : x) s2 += (v - m) * (v - m);
  // leave-one-out variances in O(n)
  std::vector<double> loo(n);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - m;
    loo[i] = (s2 - d * d * dn / (dn - 1)) / (dn - 2);
  }
  const double lm = mean_of(loo);
  double acc = 0.0;
  for (double v : loo) acc += (v - lm) * (v - lm);
  return std::sqrt(acc * (dn - 1) / dn);
}

double ks_statistic(std::span<const double> samples, Standardization mode) {
  const std::size_t n = samples.size();
  if (n < 8) throw DegenerateError("ks_statistic: need at least 8 samples, got " + std::to_string(n));
  std::vector<double> z(samples.begin(), samples.end());
  double m = 0.0, sd = 1.0;
  const double var = variance_of(samples);
  if (!(var > 0.0)) throw DegenerateError("ks_statistic: sample variance is zero");
  if (mode == Standardization::sample) {
    m = mean_of(samples);
    sd = std::sqrt(var);
  }
  for (double& v : z) v = (v - m) / sd;
  std::sort(z.begin(), z.end());
  double d = 0.0;
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = normal_cdf(z[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / dn - phi, phi - static_cast<double>(i) / dn});
  }
  return d;
}

ExpFit exp_fit(std::span<const double> r, std::span<const double> values, double floor) {
  if (r.size() != values.size()) throw ValidationError("exp_fit: R and value lists differ in length");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (values[i] > floor) {
      xs.push_back(r[i]);
      ys.push_back(std::log(values[i]));
    }
  if (xs.size() < 3)
    throw DegenerateError("exp_fit: need 3 points above " + std::to_string(floor) + ", got " + std::to_string(xs.size()));
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateError("exp_fit: all R values coincide");
  ExpFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  fit.points = static_cast<int>(xs.size());
  return fit;
}

StatSummary summarize(std::span<const double> samples) {
  StatSummary s;
  s.n = samples.size();
  s.mean = mean_of(samples);
  s.variance = variance_of(samples);
  if (!(s.variance > 0.0)) {
    s.variance = 0.0;
    s.degenerate = true;
    return s;
  }
  const double sd = std::sqrt(s.variance);
  s.standardized_samples.reserve(s.n);
  for (double v : samples) s.standardized_samples.push_back((v - s.mean) / sd);
  if (s.n >= 8) s.ks_distance = ks_statistic(samples, Standardization::sample);
  return s;
}

nlohmann::json to_json(const StatSummary& s, bool with_samples) {
  nlohmann::json j{{"n", s.n}, {"mean", s.mean}, {"variance", s.variance}, {"degenerate", s.degenerate}};
  j["centering"] = "sample mean (Lilliefors)";
  if (s.ks_distance) j["ks_distance"] = *s.ks_distance;
  if (s.fit_slope) j["fit_slope"] = *s.fit_slope;
  if (s.fit_intercept) j["fit_intercept"] = *s.fit_intercept;
  if (s.fit_r2) j["fit_r2"] = *s.fit_r2;
  if (with_samples) j["standardized_samples"] = s.standardized_samples;
  return j;
}

}  // namespace mdm
