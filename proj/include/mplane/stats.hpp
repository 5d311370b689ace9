#pragma once

#include <span>

namespace mplane::stats {

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);
/// Upper-tail probability of the chi-square distribution.
double chi_square_sf(double x, double dof);

double mean(std::span<const double> xs);
/// Population standard deviation.
double stddev(std::span<const double> xs);

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of observed counts against expected probabilities.
ChiSquareResult chi_square_test(std::span<const double> observed, std::span<const double> probabilities);

}  // namespace mplane::stats
