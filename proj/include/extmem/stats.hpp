#pragma once

// Welch's unequal-variance t-test, one-sided.

#include <cmath>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "extmem/errors.hpp"

namespace extmem {

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error() const { return n > 0 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

/// Two-pass mean and unbiased variance.
inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / static_cast<double>(xs.size() - 1);
  }
  return s;
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 0.5;
};

/// H0: mean(p) <= mean(q) against mean(p) > mean(q). Returns the upper-tail p-value
/// of Welch's t with Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_one_sided(std::span<const double> p, std::span<const double> q) {
  expects(p.size() >= 2 && q.size() >= 2, "Welch test needs at least two samples per group");
  const auto a = summarize(p);
  const auto b = summarize(q);
  const double va = a.variance / static_cast<double>(a.n);
  const double vb = b.variance / static_cast<double>(b.n);
  const double se2 = va + vb;
  WelchResult r;
  if (se2 <= 0.0) {
    // Both samples constant.
    r.t = a.mean == b.mean ? 0.0 : (a.mean > b.mean ? INFINITY : -INFINITY);
    r.df = static_cast<double>(a.n + b.n - 2);
    r.p_value = a.mean == b.mean ? 0.5 : (a.mean > b.mean ? 0.0 : 1.0);
    return r;
  }
  r.t = (a.mean - b.mean) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
  const boost::math::students_t dist(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

inline double one_sided_test(std::span<const double> p, std::span<const double> q) {
  return welch_one_sided(p, q).p_value;
}

}  // namespace extmem
