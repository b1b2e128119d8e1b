#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace mdm {

double normal_cdf(double x);
/// Inverse of normal_cdf on (0,1).
double normal_quantile(double p);

double mean_of(std::span<const double> x);
/// Unbiased sample variance (n - 1 denominator); 0 for n < 2.
double variance_of(std::span<const double> x);
/// Standard error of the mean.
double mean_stderr(std::span<const double> x);
/// Jackknife standard error of the sample variance.
double variance_stderr(std::span<const double> x);

enum class Standardization {
  none,    // compare the raw values with Phi
  sample,  // standardize by sample mean and sd first (Lilliefors form)
};

/// Two-sided Kolmogorov distance between the empirical CDF and Phi, evaluated
/// on both sides of every step. Throws DegenerateError for n < 8 or a
/// zero-variance sample.
double ks_statistic(std::span<const double> samples, Standardization mode = Standardization::sample);

struct ExpFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int points = 0;
};

/// Least squares of log(value) on R over points with value > floor. Throws
/// DegenerateError with fewer than 3 usable points.
ExpFit exp_fit(std::span<const double> r, std::span<const double> values, double floor = 1e-12);

struct StatSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  /// Set when the sample variance is zero; standardization and KS are skipped.
  bool degenerate = false;
  std::vector<double> standardized_samples;
  std::optional<double> ks_distance;
  std::optional<double> fit_slope;
  std::optional<double> fit_intercept;
  std::optional<double> fit_r2;
};

/// Mean, variance, standardized samples and (for n >= 8) KS distance to Phi.
StatSummary summarize(std::span<const double> samples);

nlohmann::json to_json(const StatSummary& s, bool with_samples = false);

}  // namespace mdm
