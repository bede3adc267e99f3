#pragma once

// Small statistical helpers: moments, two-sample Kolmogorov-Smirnov,
// chi-square goodness of fit, least squares.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "fragtree/errors.hpp"

namespace fragtree::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
};

inline MeanSe mean_se(std::span<const double> x) {
  if (x.empty()) throw ValidationError("mean of an empty sample");
  const double n = static_cast<double>(x.size());
  // Shifted by the first value, so constant samples give their value exactly.
  double shift = 0.0;
  for (double v : x) shift += v - x[0];
  const double m = x[0] + shift / n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return MeanSe{m, sd / std::sqrt(n), sd};
}

/// Kolmogorov limiting survival function Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) <= 1e-12 * std::abs(sum) || std::abs(term) <= 1e-300) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the Stephens small-sample
/// correction of the asymptotic p-value.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("KS test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  return KsResult{d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)};
}

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of counts against cell probabilities.
inline ChiSquareResult chi_square(std::span<const double> counts, std::span<const double> probs) {
  if (counts.size() != probs.size() || counts.size() < 2)
    throw ValidationError("chi-square needs matching cell vectors of length >= 2");
  double n = 0.0;
  for (double c : counts) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    if (!(e > 0.0)) throw ValidationError("chi-square cell with zero expectation");
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  const double dof = static_cast<double>(counts.size() - 1);
  boost::math::chi_squared dist(dof);
  return ChiSquareResult{stat, dof, boost::math::cdf(boost::math::complement(dist, stat))};
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("least squares needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("degenerate regression window");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return f;
}

inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace fragtree::stats
