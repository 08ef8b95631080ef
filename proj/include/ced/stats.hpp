//------------------------------------------------------------------------------
//
//   Copyright 2026 The CED Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ced/errors.hpp"

namespace ced {

inline double mean(const std::vector<double> &xs) {
  if (xs.empty()) throw DataError("mean of empty list");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_stddev(const std::vector<double> &xs) {
  if (xs.empty()) throw DataError("stddev of empty list");
  if (xs.size() == 1) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

namespace detail {

/// Continued fraction for the regularized incomplete beta, evaluated with the
/// modified Lentz method.
inline double inc_beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 300; ++m) {
    const double dm = static_cast<double>(m);
    // even step
    double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    // odd step
    num = -(a + dm) * (a + b + dm) * x /
          ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return f;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0))
    throw NumericError("incomplete beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) -
                           std::log(a) -
                           (std::lgamma(a) + std::lgamma(b) -
                            std::lgamma(a + b));
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::inc_beta_cf(a, b, x);
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - std::log(b) -
                        (std::lgamma(a) + std::lgamma(b) -
                         std::lgamma(a + b))) *
                   detail::inc_beta_cf(b, a, 1.0 - x);
}

/// Two-sided tail probability of Student's t: P(|T| >= t) with df degrees of
/// freedom, via I_x(df/2, 1/2) at x = df / (df + t^2).
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw NumericError("t-test: non-positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

struct PearsonResult {
  double rho = 0.0;
  double p = 1.0;
  double t = 0.0;
  std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided t-based p-value
/// (t = r sqrt((n-2)/(1-r^2)), n-2 degrees of freedom).
///
/// The denominator is written sqrt(sxx * syy) so that ys == xs and
/// ys == -xs produce exactly +1 and -1: the centered sums coincide bitwise
/// and sqrt(s * s) == s in round-to-nearest arithmetic.
inline PearsonResult pearson(const std::vector<double> &xs,
                             const std::vector<double> &ys) {
  if (xs.size() != ys.size())
    throw DataError("pearson: length mismatch (" + std::to_string(xs.size()) +
                    " vs " + std::to_string(ys.size()) + ")");
  const std::size_t n = xs.size();
  if (n < 3)
    throw DataError("pearson: insufficient data, need n >= 3, got " +
                    std::to_string(n));

  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DataError("pearson: undefined correlation, zero variance input");

  double rho = sxy / std::sqrt(sxx * syy);
  if (rho > 1.0) rho = 1.0;
  if (rho < -1.0) rho = -1.0;

  PearsonResult r;
  r.n = n;
  r.rho = rho;
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - rho * rho;
  if (denom <= 0.0) {
    r.t = rho > 0 ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.t = rho * std::sqrt(df / denom);
    r.p = student_t_two_sided_p(r.t, df);
  }
  return r;
}

}  // namespace ced
