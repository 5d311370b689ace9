#include "mplane/stats.hpp"

#include "mplane/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>

namespace mplane::stats {

double student_t_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double chi_square_sf(double x, double dof) {
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, x));
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw InsufficientDataError("mean of empty sequence");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

ChiSquareResult chi_square_test(std::span<const double> observed, std::span<const double> probabilities) {
  if (observed.size() != probabilities.size() || observed.size() < 2)
    throw ShapeMismatchError("chi-square needs matching observed/probability vectors of length >= 2");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  ChiSquareResult r;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = n * probabilities[i];
    r.statistic += (observed[i] - e) * (observed[i] - e) / e;
  }
  r.dof = static_cast<double>(observed.size() - 1);
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

}  // namespace mplane::stats
