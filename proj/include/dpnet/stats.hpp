#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dpnet::stats {

double median(std::vector<double> values);  // by value: partially sorts

// Robust sigma: 1.4826 * median(|x - median(x)|).
double mad_sigma(std::span<const double> values);

double mean(std::span<const double> values);
double sample_variance(std::span<const double> values);

// Fisher-Pearson g1 skewness.
double skewness(std::span<const double> values);

// Quantile of a sample (linear interpolation between order statistics).
double quantile(std::vector<double> values, double q);

// Inverse standard-normal CDF (Acklam rational approximation plus one
// Halley refinement; |error| < 1e-13 over (0, 1)).
double inverse_normal_cdf(double p);

// Unbiasing constant c4(n) with E[s] = c4 * sigma for Gaussian samples.
double c4_correction(size_t n);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace dpnet::stats
