#pragma once

// Estimators linking simulated trees and traces to the quantities the
// theory predicts: covering-number dimension, Hoelder exponent of the
// height function, Laplace-transform checks, dislocation tail slopes and
// mass-loss profiles.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "fragtree/engine.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/genealogy.hpp"
#include "fragtree/height.hpp"
#include "fragtree/stats.hpp"

namespace fragtree {

struct RegressionReport {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points = 0;
  bool infinite = false;  ///< degenerate input whose exponent is +infinity
};

// ---------------------------------------------------------------------------
// Covering numbers and dimension

struct CoveringRow {
  double eps = 0.0;
  std::size_t count = 0;
};

/// Greedy cover of a point set given by its distance matrix: take the first
/// uncovered point, cover everything within 2 eps, repeat.
inline std::size_t greedy_cover(const std::vector<std::vector<double>>& d, double eps) {
  const std::size_t k = d.size();
  std::vector<char> covered(k, 0);
  std::size_t balls = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (covered[c]) continue;
    ++balls;
    for (std::size_t j = 0; j < k; ++j)
      if (!covered[j] && d[c][j] <= 2.0 * eps) covered[j] = 1;
  }
  return balls;
}

/// Greedy covering numbers of the leaf set under the tree metric. Each
/// count lies between the minimal number of radius-2eps balls and the
/// minimal number of radius-eps balls centred at leaves.
inline std::vector<CoveringRow> covering_numbers(const EdgeTree& t, const std::vector<double>& eps_grid) {
  if (t.leaf_count() < 1) throw ValidationError("covering needs leaves");
  for (double e : eps_grid)
    if (!(e > 0.0)) throw ValidationError("covering scales must be positive");
  const auto d = t.distance_matrix();
  std::vector<CoveringRow> out;
  out.reserve(eps_grid.size());
  for (double e : eps_grid) out.push_back(CoveringRow{e, greedy_cover(d, e)});
  return out;
}

/// Log-spaced grid from hi down to lo.
inline std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi > lo) || points < 2) throw ValidationError("bad log grid");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = hi * std::pow(lo / hi, static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

/// Slope of log N against log(1/eps) over rows with eps in [lo, hi].
inline RegressionReport dimension_estimate(const std::vector<CoveringRow>& table, double lo, double hi) {
  std::vector<double> x, y;
  for (const auto& r : table)
    if (r.eps >= lo && r.eps <= hi && r.count > 0) {
      x.push_back(std::log(1.0 / r.eps));
      y.push_back(std::log(static_cast<double>(r.count)));
    }
  if (x.size() < 4) throw ValidationError("dimension window holds fewer than 4 points");
  const auto f = stats::least_squares(x, y);
  return RegressionReport{f.slope, f.intercept, f.slope_se, lo, hi, x.size(), false};
}

struct ScaleWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// Default regression band: from the 5% quantile of pairwise leaf distances
/// up to a quarter of the diameter.
inline ScaleWindow resolution_window(const EdgeTree& t) {
  const auto d = t.distance_matrix();
  std::vector<double> all;
  double diam = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      all.push_back(d[i][j]);
      diam = std::max(diam, d[i][j]);
    }
  if (all.empty()) throw ValidationError("resolution window needs two leaves");
  return ScaleWindow{stats::quantile(std::move(all), 0.05), diam / 4.0};
}

// ---------------------------------------------------------------------------
// Hoelder exponent

/// M(delta): largest oscillation of h over u-windows of width delta.
inline double max_oscillation(const std::vector<std::pair<double, double>>& path, double delta) {
  std::deque<std::size_t> mx, mn;
  double best = 0.0;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    while (!mx.empty() && path[mx.back()].second <= path[i].second) mx.pop_back();
    while (!mn.empty() && path[mn.back()].second >= path[i].second) mn.pop_back();
    mx.push_back(i);
    mn.push_back(i);
    while (path[i].first - path[lo].first > delta) {
      ++lo;
      if (mx.front() < lo) mx.pop_front();
      if (mn.front() < lo) mn.pop_front();
    }
    best = std::max(best, path[mx.front()].second - path[mn.front()].second);
  }
  return best;
}

/// Structure-function estimate: slope of log M(delta) against log delta.
inline RegressionReport holder_estimate(const std::vector<std::pair<double, double>>& path,
                                        const std::vector<double>& scales) {
  if (path.size() < 100) throw ValidationError("Hoelder estimate needs at least 100 points");
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!(path[i].first > path[i - 1].first)) throw ValidationError("positions must increase strictly");
  std::vector<double> x, y;
  bool all_zero = true;
  for (double s : scales) {
    if (!(s > 0.0)) throw ValidationError("scales must be positive");
    const double m = max_oscillation(path, s);
    if (m > 0.0) {
      all_zero = false;
      x.push_back(std::log(s));
      y.push_back(std::log(m));
    }
  }
  RegressionReport r;
  if (!scales.empty()) {
    r.window_lo = *std::min_element(scales.begin(), scales.end());
    r.window_hi = *std::max_element(scales.begin(), scales.end());
  }
  if (all_zero) {
    r.slope = kInf;
    r.infinite = true;
    return r;
  }
  if (x.size() < 4) throw ValidationError("Hoelder window holds fewer than 4 points");
  const auto f = stats::least_squares(x, y);
  r.slope = f.slope;
  r.intercept = f.intercept;
  r.stderr_slope = f.slope_se;
  r.points = x.size();
  return r;
}

inline RegressionReport holder_estimate(const HeightSample& hs, const std::vector<double>& scales,
                                        bool pin_endpoints = false) {
  if (hs.points.size() < 100) throw ValidationError("Hoelder estimate needs at least 100 points");
  return holder_estimate(height_profile(hs, pin_endpoints), scales);
}

// ---------------------------------------------------------------------------
// Laplace transforms

struct LaplaceCell {
  double q = 0.0;
  double t = 0.0;
  double mean = 0.0;
  double target = 0.0;
  double se = 0.0;
  double z = 0.0;
};

struct LaplaceReport {
  std::vector<LaplaceCell> cells;
  double max_abs_z = 0.0;
};

/// z-scores of the empirical mean of exp(-q xi_t) against exp(-t Phi(q)).
/// `xi[b]` holds the replica values of xi at time ts[b].
inline LaplaceReport laplace_check(const std::vector<std::vector<double>>& xi,
                                   const std::function<double(double)>& phi,
                                   const std::vector<double>& qs, const std::vector<double>& ts) {
  if (xi.size() != ts.size()) throw ValidationError("one replica vector per time point");
  LaplaceReport rep;
  for (std::size_t b = 0; b < ts.size(); ++b) {
    if (xi[b].size() < 2) throw ValidationError("Laplace check needs replicas");
    for (double q : qs) {
      std::vector<double> v(xi[b].size());
      for (std::size_t r = 0; r < v.size(); ++r) v[r] = std::exp(-q * xi[b][r]);
      const auto ms = stats::mean_se(v);
      LaplaceCell c{q, ts[b], ms.mean, std::exp(-ts[b] * phi(q)), ms.se, 0.0};
      const double diff = c.mean - c.target;
      // Differences at the rounding level of the mean carry no signal.
      if (std::abs(diff) <= 64 * std::numeric_limits<double>::epsilon() * std::max(c.target, c.mean)) c.z = 0.0;
      else if (c.se > 0.0) c.z = diff / c.se;
      else c.z = std::copysign(kInf, diff);
      rep.max_abs_z = std::max(rep.max_abs_z, std::abs(c.z));
      rep.cells.push_back(c);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dislocation tails

/// Log-log slope of the weighted empirical tail x -> sum_i w_i 1{x_i > x}
/// on log-spaced x in [lo, hi].
inline RegressionReport tail_exponent(const std::vector<double>& x, const std::vector<double>& w,
                                      double lo, double hi, std::size_t grid_points = 20) {
  if (x.size() != w.size()) throw ValidationError("one weight per sample");
  if (x.size() < 10000) throw ValidationError("tail regression needs at least 1e4 samples");
  if (!(lo > 0.0 && hi > lo)) throw ValidationError("bad tail window");
  const double xmin = *std::min_element(x.begin(), x.end());
  const double xmax = *std::max_element(x.begin(), x.end());
  if (lo < xmin || hi > xmax) throw ValidationError("tail window outside the sample range");
  std::vector<std::pair<double, double>> sorted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sorted[i] = {x[i], w[i]};
  std::sort(sorted.begin(), sorted.end());
  // Suffix sums of weights.
  std::vector<double> suffix(sorted.size() + 1, 0.0);
  for (std::size_t i = sorted.size(); i-- > 0;) suffix[i] = suffix[i + 1] + sorted[i].second;
  std::vector<double> lx, ly;
  for (double g : log_grid(lo, hi, grid_points)) {
    auto it = std::upper_bound(sorted.begin(), sorted.end(), g,
                               [](double v, const std::pair<double, double>& p) { return v < p.first; });
    const double tail = suffix[static_cast<std::size_t>(it - sorted.begin())] / static_cast<double>(x.size());
    if (tail > 0.0) {
      lx.push_back(std::log(g));
      ly.push_back(std::log(tail));
    }
  }
  if (lx.size() < 4) throw ValidationError("tail window holds fewer than 4 points");
  const auto f = stats::least_squares(lx, ly);
  return RegressionReport{f.slope, f.intercept, f.slope_se, lo, hi, lx.size(), false};
}

// ---------------------------------------------------------------------------
// Mass loss

struct MassLossRow {
  double t = 0.0;
  double lower = 0.0;
  double lower_se = 0.0;
  double upper = 0.0;
  double upper_se = 0.0;
};

inline std::vector<MassLossRow> mass_loss_profile(const std::vector<FragmentationTrace>& traces,
                                                  const std::vector<double>& ts) {
  if (traces.empty()) throw ValidationError("mass-loss profile needs traces");
  std::vector<MassLossRow> out;
  for (double t : ts) {
    std::vector<double> lo, up;
    for (const auto& tr : traces) {
      const auto d = dust_mass(tr, t);
      lo.push_back(d.lower);
      up.push_back(d.upper);
    }
    const auto a = stats::mean_se(lo), b = stats::mean_se(up);
    out.push_back(MassLossRow{t, a.mean, a.se, b.mean, b.se});
  }
  return out;
}

}  // namespace fragtree
