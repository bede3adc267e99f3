#pragma once

// Dislocation measures on ranked mass sequences.
//
// Families:
//   discrete-atoms   finite sum of weighted point masses
//   binary-density   nu(1 - s1 in du) = u^{-1-theta} du on (0, 1/2], split (1-u, u)
//   stable-tree      E[T1; jumps(T on [0,1]) / T1 in ds] for a stable(1/beta)
//                    subordinator T with Levy density u^{-1-1/beta}; normalising
//                    constant taken as 1
//   truncated        image of a base measure under grind(N, eps)
//
// Infinite families are only ever sampled through an eps-restriction
// {s1 <= 1 - eps}; the dislocations that are dropped are replaced by a
// deterministic mass decay at rate c_eps = int_{s1 > 1-eps} (1 - s1) nu(ds).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fragtree/errors.hpp"
#include "fragtree/partitions.hpp"
#include "fragtree/rng.hpp"

namespace fragtree {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Stable subordinator jumps

/// One draw of the normalised jump sequence of a stable(1/beta) subordinator
/// on [0,1], jumps below `delta` replaced by one pseudo-jump carrying their
/// expected total mass.
struct StableSplitSample {
  RankedMassSequence split;
  double weight = 0.0;       ///< T1 (size-biasing weight, unit Levy constant)
  double pseudo_jump = 0.0;  ///< expected sub-delta mass added before normalising
  std::size_t jumps = 0;     ///< number of simulated jumps above delta
};

/// Expected total size of the jumps below delta on [0,1].
inline double stable_small_jump_mass(double beta, double delta) {
  const double a = 1.0 / beta;
  return std::pow(delta, 1.0 - a) / (1.0 - a);
}

inline StableSplitSample sample_stable_split(double beta, double delta, Rng& rng) {
  if (!(beta > 1.0 && beta < 2.0)) throw ValidationError("stable index beta must lie in (1,2)");
  if (!(delta > 0.0)) throw ValidationError("stable cutoff delta must be positive");
  // Ranked jumps by inversion of the Levy tail bar-Pi(v) = beta v^{-1/beta}
  // at the arrival times of a unit Poisson process.
  const double gamma_stop = beta * std::pow(delta, -1.0 / beta);
  std::vector<double> jumps;
  double gamma = rng.exponential();
  while (gamma < gamma_stop) {
    jumps.push_back(std::pow(gamma / beta, -beta));
    gamma += rng.exponential();
  }
  const double pseudo = stable_small_jump_mass(beta, delta);
  double total = pseudo;
  for (double j : jumps) total += j;
  std::vector<double> s;
  s.reserve(jumps.size() + 1);
  bool placed = false;
  for (double j : jumps) {
    if (!placed && pseudo > j) {
      s.push_back(pseudo / total);
      placed = true;
    }
    s.push_back(j / total);
  }
  if (!placed) s.push_back(pseudo / total);
  // Renormalise against rounding so the sequence is conservative.
  double sum = 0.0;
  for (double x : s) sum += x;
  if (sum > 1.0) {
    for (double& x : s) x /= sum;
  }
  StableSplitSample out{RankedMassSequence(std::move(s)), total, pseudo, jumps.size()};
  return out;
}

// ---------------------------------------------------------------------------
// Measure families

struct Atom {
  double weight = 0.0;
  RankedMassSequence split;
  friend bool operator==(const Atom&, const Atom&) = default;
};

struct DiscreteAtoms {
  std::vector<Atom> atoms;
};

struct BinaryDensity {
  double theta = 0.5;
};

/// Weighted proposal pool used to sample the restricted stable measure by
/// sampling-importance-resampling. Samples are regenerated from their
/// stream id on demand, so only weights are stored.
struct StablePool {
  double beta = 1.5;
  double delta = 1e-4;
  std::uint64_t seed = 0;
  std::size_t size = 0;
  std::vector<double> weight;        // T1 per proposal
  std::vector<double> one_minus_s1;  // per proposal
  std::vector<double> restricted_cumulative;  // cumulative T1 over restricted proposals
  std::vector<std::uint32_t> restricted_index;

  StableSplitSample regenerate(std::size_t i) const {
    Rng rng(seed, i);
    return sample_stable_split(beta, delta, rng);
  }
};

struct StableTree {
  double beta = 1.5;
  double delta = 1e-4;
  std::size_t pool_size = 20000;
  std::uint64_t pool_seed = 0x5eed;
  std::shared_ptr<const StablePool> pool;
};

class DislocationMeasure;

struct Truncated {
  std::shared_ptr<const DislocationMeasure> base;
  std::size_t n_blocks = 1;
  double eps = 0.1;
};

enum class Family { DiscreteAtoms, BinaryDensity, StableTree, Truncated };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::DiscreteAtoms: return "discrete-atoms";
    case Family::BinaryDensity: return "binary-density";
    case Family::StableTree: return "stable-tree";
    case Family::Truncated: return "truncated";
  }
  return "unknown";
}

/// Image of s under grind(N, eps): keep the N largest masses when
/// s1 <= 1 - eps, only s1 otherwise. The rest becomes dust, so the result
/// may be non-conservative.
inline RankedMassSequence grind(const RankedMassSequence& s, std::size_t n_blocks, double eps) {
  if (n_blocks < 1) throw ValidationError("grind needs N >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("grind needs eps in (0,1)");
  const auto& m = s.masses();
  if (m.empty()) return s;
  const std::size_t keep = (m[0] > 1.0 - eps) ? 1 : std::min(n_blocks, m.size());
  return RankedMassSequence(std::vector<double>(m.begin(), m.begin() + keep));
}

/// Masses of a split together with their logarithms (for accurate 1 - s^q
/// evaluation close to s = 1).
struct SplitView {
  std::span<const double> s;
  std::span<const double> log_s;
};

using Integrand = std::function<double(const SplitView&)>;

struct Integral {
  double value = 0.0;
  double error = 0.0;
  bool divergent = false;
};

class DislocationMeasure {
 public:
  using Variant = std::variant<DiscreteAtoms, BinaryDensity, StableTree, Truncated>;

  static DislocationMeasure discrete(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ValidationError("discrete measure needs at least one atom");
    for (const auto& a : atoms) {
      if (!(a.weight > 0.0) || !std::isfinite(a.weight))
        throw ValidationError("atom weights must be positive and finite");
      if (!a.split.is_conservative())
        throw ValidationError("atoms must be conservative (masses summing to 1)");
    }
    return DislocationMeasure(DiscreteAtoms{std::move(atoms)}, 0.0);
  }

  static DislocationMeasure dirac(std::vector<double> masses, double weight = 1.0) {
    return discrete({Atom{weight, RankedMassSequence(std::move(masses))}});
  }

  /// `restriction_eps` is the eps-policy used when the engine samples; 0
  /// leaves the measure unrestricted (exponents only, no sampling).
  static DislocationMeasure binary_density(double theta, double restriction_eps) {
    if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("binary density needs theta in (0,1)");
    if (!(restriction_eps >= 0.0 && restriction_eps < 0.5))
      throw ValidationError("binary density needs a restriction eps in [0,1/2)");
    return DislocationMeasure(BinaryDensity{theta}, restriction_eps);
  }

  static DislocationMeasure stable_tree(double beta, double delta, double restriction_eps,
                                        std::size_t pool_size = 20000,
                                        std::uint64_t pool_seed = 0x5eed) {
    if (!(beta > 1.0 && beta < 2.0)) throw ValidationError("stable index beta must lie in (1,2)");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("stable cutoff delta must lie in (0,1)");
    if (!(restriction_eps > 0.0 && restriction_eps < 1.0))
      throw ValidationError("stable measure needs a restriction eps in (0,1)");
    if (pool_size < 100) throw ValidationError("stable proposal pool too small");
    StableTree st{beta, delta, pool_size, pool_seed, nullptr};
    auto pool = std::make_shared<StablePool>();
    pool->beta = beta;
    pool->delta = delta;
    pool->seed = pool_seed;
    pool->size = pool_size;
    pool->weight.resize(pool_size);
    pool->one_minus_s1.resize(pool_size);
    double acc = 0.0;
    for (std::size_t i = 0; i < pool_size; ++i) {
      auto smp = pool->regenerate(i);
      pool->weight[i] = smp.weight;
      pool->one_minus_s1[i] = 1.0 - smp.split[0];
      if (smp.split[0] <= 1.0 - restriction_eps) {
        acc += smp.weight;
        pool->restricted_cumulative.push_back(acc);
        pool->restricted_index.push_back(static_cast<std::uint32_t>(i));
      }
    }
    if (pool->restricted_index.empty())
      throw ConfigurationError("stable pool has no proposal inside the eps-restriction");
    st.pool = std::move(pool);
    return DislocationMeasure(std::move(st), restriction_eps);
  }

  static DislocationMeasure truncated(DislocationMeasure base, std::size_t n_blocks, double eps) {
    if (n_blocks < 1) throw ValidationError("truncation needs N >= 1");
    if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("truncation needs eps in (0,1)");
    const double r = base.restriction_eps();
    auto ptr = std::make_shared<const DislocationMeasure>(std::move(base));
    return DislocationMeasure(Truncated{std::move(ptr), n_blocks, eps}, r);
  }

  Family family() const noexcept { return static_cast<Family>(family_.index()); }
  const Variant& variant() const noexcept { return family_; }
  double restriction_eps() const noexcept { return restriction_eps_; }

  bool is_finite() const {
    switch (family()) {
      case Family::DiscreteAtoms: return true;
      case Family::Truncated: return std::get<Truncated>(family_).base->is_finite();
      default: return false;
    }
  }

  /// Samples are conservative for every family except the truncated wrapper.
  bool is_conservative() const noexcept { return family() != Family::Truncated; }

  double total_mass() const {
    if (!is_finite()) return kInf;
    return integrate(0.0, one, one).value;
  }

  /// nu(s1 <= 1 - eps).
  Integral restricted_mass(double eps) const {
    return integrate(eps, [](const SplitView&) { return 0.0; }, one);
  }

  /// int (1 - s1) nu(ds); finite for every supported family.
  Integral first_moment_defect() const {
    return integrate(0.0, one_minus_s1, one_minus_s1);
  }

  /// nu(s1 < 1 - x), the tail governing Holder thresholds.
  double tail(double x) const {
    if (auto* b = std::get_if<BinaryDensity>(&family_)) {
      if (x >= 0.5) return 0.0;
      return (std::pow(x, -b->theta) - std::pow(0.5, -b->theta)) / b->theta;
    }
    return integrate(x, [](const SplitView&) { return 0.0; }, one).value;
  }

  /// int [big(s) 1{s1 > 1-eps} + small(s) 1{s1 <= 1-eps}] nu(ds).
  /// eps = 0 routes every split to `small`.
  Integral integrate(double eps, const Integrand& big, const Integrand& small) const;

  friend bool operator==(const DislocationMeasure& a, const DislocationMeasure& b);

 private:
  DislocationMeasure(Variant v, double restriction_eps)
      : family_(std::move(v)), restriction_eps_(restriction_eps) {}

  static double one(const SplitView&) { return 1.0; }
  static double one_minus_s1(const SplitView& v) {
    return v.s.empty() ? 0.0 : -std::expm1(v.log_s[0]);
  }

  Variant family_;
  double restriction_eps_ = 0.0;
};

inline bool operator==(const DislocationMeasure& a, const DislocationMeasure& b) {
  if (a.family() != b.family() || a.restriction_eps_ != b.restriction_eps_) return false;
  switch (a.family()) {
    case Family::DiscreteAtoms:
      return std::get<DiscreteAtoms>(a.family_).atoms == std::get<DiscreteAtoms>(b.family_).atoms;
    case Family::BinaryDensity:
      return std::get<BinaryDensity>(a.family_).theta == std::get<BinaryDensity>(b.family_).theta;
    case Family::StableTree: {
      const auto& x = std::get<StableTree>(a.family_);
      const auto& y = std::get<StableTree>(b.family_);
      return x.beta == y.beta && x.delta == y.delta && x.pool_size == y.pool_size &&
             x.pool_seed == y.pool_seed;
    }
    case Family::Truncated: {
      const auto& x = std::get<Truncated>(a.family_);
      const auto& y = std::get<Truncated>(b.family_);
      return x.n_blocks == y.n_blocks && x.eps == y.eps && *x.base == *y.base;
    }
  }
  return false;
}

namespace detail {

// Integral over y in [y0, inf) of f(y) where f decays like exp(-kappa y).
// The range is cut at y_cut and the remainder added from the fitted decay.
inline Integral integrate_to_infinity(const std::function<double(double)>& f, double y0) {
  constexpr double y_cut = 600.0;
  Integral out;
  const double f_far = f(y_cut);
  const double f_mid = f(y_cut - 100.0);
  double tail = 0.0;
  if (f_far != 0.0) {
    if (f_mid == 0.0 || (f_mid > 0.0) != (f_far > 0.0)) {
      out.divergent = true;
    } else {
      const double kappa = std::log(std::abs(f_mid) / std::abs(f_far)) / 100.0;
      if (!(kappa > 1e-3)) {
        out.divergent = true;
      } else {
        tail = f_far / kappa;
      }
    }
    if (out.divergent) {
      out.value = f_far > 0.0 ? kInf : -kInf;
      out.error = 0.0;
      return out;
    }
  }
  double err = 0.0;
  // Split the finite range so the adaptive rule sees the decaying head.
  double value = 0.0;
  double lo = y0;
  for (double hi : {y0 + 2.0, y0 + 10.0, y0 + 40.0, y0 + 150.0, y_cut}) {
    if (hi <= lo) continue;
    double e = 0.0;
    value += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-14, &e);
    err += e;
    lo = hi;
  }
  out.value = value + tail;
  out.error = err + 1e-6 * std::abs(tail);
  return out;
}

inline Integral integrate_finite(const std::function<double(double)>& f, double a, double b) {
  Integral out;
  if (!(b > a)) return out;
  double e = 0.0;
  out.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-14, &e);
  out.error = e;
  return out;
}

inline Integral add(Integral a, const Integral& b) {
  a.divergent = a.divergent || b.divergent;
  a.value += b.value;
  a.error += b.error;
  return a;
}

}  // namespace detail

inline Integral DislocationMeasure::integrate(double eps, const Integrand& big,
                                              const Integrand& small) const {
  if (eps < 0.0 || eps >= 1.0) throw ValidationError("integration split eps must lie in [0,1)");
  switch (family()) {
    case Family::DiscreteAtoms: {
      Integral out;
      std::vector<double> logs;
      for (const auto& a : std::get<DiscreteAtoms>(family_).atoms) {
        const auto& m = a.split.masses();
        logs.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) logs[i] = std::log(m[i]);
        const SplitView v{m, logs};
        const bool is_big = !m.empty() && m[0] > 1.0 - eps;
        out.value += a.weight * (is_big ? big(v) : small(v));
      }
      return out;
    }
    case Family::BinaryDensity: {
      const double theta = std::get<BinaryDensity>(family_).theta;
      // y = -log u, u = 1 - s1 in (0, 1/2]; nu(du) du-density u^{-1-theta}
      // becomes u^{-theta} dy.
      auto make = [theta](const Integrand& g) {
        return [theta, &g](double y) {
          const double u = std::exp(-y);
          if (u == 0.0) return 0.0;
          const double s[2] = {1.0 - u, u};
          const double ls[2] = {std::log1p(-u), -y};
          const double val = g(SplitView{std::span<const double>(s, 2), std::span<const double>(ls, 2)});
          if (val == 0.0) return 0.0;
          return val * std::exp(theta * y);
        };
      };
      const double y_half = std::log(2.0);
      if (eps == 0.0) {
        auto f = make(small);
        return detail::integrate_to_infinity(f, y_half);
      }
      const double e = std::min(eps, 0.5);
      const double y_eps = -std::log(e);
      auto fb = make(big);
      auto fs = make(small);
      Integral out = detail::integrate_to_infinity(fb, std::max(y_eps, y_half));
      if (e < 0.5) out = detail::add(out, detail::integrate_finite(fs, y_half, y_eps));
      return out;
    }
    case Family::StableTree: {
      const auto& pool = *std::get<StableTree>(family_).pool;
      double sum = 0.0, sum2 = 0.0;
      std::vector<double> logs;
      for (std::size_t i = 0; i < pool.size; ++i) {
        const auto smp = pool.regenerate(i);
        const auto& m = smp.split.masses();
        logs.resize(m.size());
        for (std::size_t j = 0; j < m.size(); ++j) logs[j] = std::log(m[j]);
        const SplitView v{m, logs};
        const double x = smp.weight * (m[0] > 1.0 - eps ? big(v) : small(v));
        sum += x;
        sum2 += x * x;
      }
      const double n = static_cast<double>(pool.size);
      const double mean = sum / n;
      const double var = std::max(0.0, sum2 / n - mean * mean);
      return Integral{mean, std::sqrt(var / n), false};
    }
    case Family::Truncated: {
      const auto& t = std::get<Truncated>(family_);
      auto wrap = [&t](const Integrand& g) -> Integrand {
        return [&t, &g](const SplitView& v) {
          if (v.s.empty()) return g(v);
          const std::size_t keep =
              (v.s[0] > 1.0 - t.eps) ? 1 : std::min(t.n_blocks, v.s.size());
          return g(SplitView{v.s.first(keep), v.log_s.first(keep)});
        };
      };
      return t.base->integrate(eps, wrap(big), wrap(small));
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Characteristic exponents

struct ExponentReport {
  double q = 0.0;
  double value = 0.0;
  double error = 0.0;
  bool divergent = false;
};

namespace detail {

inline ExponentReport report(double q, const Integral& i) {
  return ExponentReport{q, i.value, i.error, i.divergent};
}

// 1 - s^q from log s, accurate for s close to 1.
inline double one_minus_pow(double log_s, double q) { return -std::expm1(q * log_s); }

inline double partial_sum(const SplitView& v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(n, v.s.size()); ++i) s += v.s[i];
  return s;
}

}  // namespace detail

/// Laplace exponent of -log(tagged fragment mass):
/// Phi(q) = int (1 - sum_i s_i^{q+1}) nu(ds).
inline ExponentReport tagged_exponent(const DislocationMeasure& m, double q) {
  if (q == 0.0 && m.is_conservative()) return ExponentReport{0.0, 0.0, 0.0, false};
  auto f = [q](const SplitView& v) {
    if (v.s.empty()) return 1.0;
    double r = detail::one_minus_pow(v.log_s[0], q + 1.0);
    for (std::size_t i = 1; i < v.s.size(); ++i) r -= std::exp((q + 1.0) * v.log_s[i]);
    return r;
  };
  return detail::report(q, m.integrate(0.0, f, f));
}

/// Laplace exponent of the subordinator driving the grind(N, eps) tagged
/// fragment: size-biased choice among the N kept blocks, or s1 alone when
/// s1 > 1 - eps.
inline ExponentReport phi_xi(const DislocationMeasure& m, std::size_t n_blocks, double eps,
                             double q) {
  if (n_blocks < 1) throw ValidationError("phi_xi needs N >= 1");
  if (!(eps >= 0.0 && eps < 1.0)) throw ValidationError("phi_xi needs eps in [0,1)");
  if (q == 0.0) return ExponentReport{0.0, 0.0, 0.0, false};
  auto big = [q](const SplitView& v) {
    return v.s.empty() ? 0.0 : detail::one_minus_pow(v.log_s[0], q);
  };
  auto small = [q, n_blocks](const SplitView& v) {
    const std::size_t n = std::min(n_blocks, v.s.size());
    const double total = detail::partial_sum(v, n);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += detail::one_minus_pow(v.log_s[i], q) * v.s[i] / total;
    return r;
  };
  return detail::report(q, m.integrate(eps, big, small));
}

struct KilledExponent {
  ExponentReport exponent;
  double killing_rate = 0.0;
};

/// Laplace exponent and killing rate of -log of the mass shared by two tagged
/// leaves of the grind(N, eps) process.
inline KilledExponent phi_sigma(const DislocationMeasure& m, std::size_t n_blocks, double eps,
                                double q) {
  if (n_blocks < 1) throw ValidationError("phi_sigma needs N >= 1");
  if (!(eps >= 0.0 && eps < 1.0)) throw ValidationError("phi_sigma needs eps in [0,1)");
  auto zero = [](const SplitView&) { return 0.0; };
  auto kill = [n_blocks](const SplitView& v) {
    const std::size_t n = std::min(n_blocks, v.s.size());
    const double total = detail::partial_sum(v, n);
    // sum_{i != j} s_i s_j = 2 sum_i s_i * (sum_{j > i} s_j), all terms positive.
    double suffix = 0.0, r = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      r += v.s[i] * suffix;
      suffix += v.s[i];
    }
    return 2.0 * r / (total * total);
  };
  const Integral k = m.integrate(eps, zero, kill);
  KilledExponent out;
  out.killing_rate = k.value;
  if (q == 0.0) {
    out.exponent = ExponentReport{0.0, k.value, k.error, k.divergent};
    return out;
  }
  auto big = [q](const SplitView& v) {
    return v.s.empty() ? 0.0 : detail::one_minus_pow(v.log_s[0], q);
  };
  auto small = [q, n_blocks](const SplitView& v) {
    const std::size_t n = std::min(n_blocks, v.s.size());
    const double total = detail::partial_sum(v, n);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      r += detail::one_minus_pow(v.log_s[i], q) * v.s[i] * v.s[i] / (total * total);
    return r;
  };
  Integral body = m.integrate(eps, big, small);
  out.exponent = detail::report(q, detail::add(body, k));
  return out;
}

// ---------------------------------------------------------------------------
// Constants

struct TailIndices {
  double low = 0.0;
  double up = 0.0;
};

/// Classifies lim_{x->0} x^b tail(x) on log-spaced x in [1e-6, 1e-1] for a
/// grid of b: "-> infinity" when the value grows by a factor of 10 or more
/// towards small x, "-> 0" when it shrinks by that factor. Resolution is
/// limited by the factor-10 threshold over five decades (about 0.2 in b).
inline TailIndices scan_tail_indices(const std::function<double(double)>& tail,
                                     double b_step = 0.01) {
  constexpr int points = 26;
  std::vector<double> xs(points), logt(points);
  for (int i = 0; i < points; ++i) {
    xs[i] = std::pow(10.0, -1.0 - 5.0 * i / (points - 1));
    logt[i] = std::log(std::max(tail(xs[i]), 1e-300));
  }
  TailIndices out{0.0, kInf};
  bool any_up = false;
  for (double b = b_step; b <= 2.0 + 1e-12; b += b_step) {
    // log of x^b tail(x) at the small and large ends, plus monotone trend
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i) g[i] = b * std::log(xs[i]) + logt[i];
    const double rise = g[points - 1] - g[0];
    bool increasing = true, decreasing = true;
    for (int i = 1; i < points; ++i) {
      if (g[i] < g[i - 1] - 1e-12) increasing = false;
      if (g[i] > g[i - 1] + 1e-12) decreasing = false;
    }
    if (increasing && rise >= std::log(10.0)) out.low = b;
    if (decreasing && -rise >= std::log(10.0) && !any_up) {
      out.up = b;
      any_up = true;
    }
  }
  if (!any_up) out.up = 0.0;
  return out;
}

struct MeasureConstants {
  double varrho = 1.0;
  double p_lower = 1.0;
  double A = 1.0;
  double theta_low = 0.0;
  double theta_up = 0.0;
  bool finite_measure_convention = false;  ///< theta_* set to 0 because nu(S) < inf
  std::string method;
};

inline MeasureConstants constants(const DislocationMeasure& m) {
  MeasureConstants c;
  switch (m.family()) {
    case Family::DiscreteAtoms:
      // Finite measure with finitely many fragments: every defining integral
      // converges for every exponent.
      c = {1.0, 1.0, 1.0, 0.0, 0.0, true, "closed form (finite measure)"};
      break;
    case Family::BinaryDensity: {
      const double th = std::get<BinaryDensity>(m.variant()).theta;
      // 1 - (1-u)^{q+1} - u^{q+1} ~ -u^{q+1}: integrable against u^{-1-theta}
      // iff q > theta - 1. nu(s1 < 1 - x) ~ x^{-theta} / theta.
      c = {1.0, 1.0 - th, 1.0, th, th, false, "closed form"};
      break;
    }
    case Family::StableTree: {
      const double b = std::get<StableTree>(m.variant()).beta;
      // Small jumps have intensity u^{-1-1/b}: sum s_i^{q+1} < inf iff
      // q + 1 > 1/b, and sum_{i<j} s_i^{1-a} s_j < inf iff a < 2 - 2/b.
      // Tail nu(1 - s1 > x) ~ C x^{1/b - 1}.
      c = {1.0, 1.0 - 1.0 / b, 2.0 - 2.0 / b, 1.0 - 1.0 / b, 1.0 - 1.0 / b, false,
           "closed form (stable jump asymptotics)"};
      break;
    }
    case Family::Truncated: {
      const auto& t = std::get<Truncated>(m.variant());
      MeasureConstants base = constants(*t.base);
      // s1 and nu(s1 < 1 - x) are unchanged by grind; finitely many blocks
      // remain, so A = 1 and the defining integral of p_lower converges for
      // every q.
      c = {base.varrho, 1.0, 1.0, base.theta_low, base.theta_up,
           base.finite_measure_convention, "closed form (image of base measure)"};
      break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draw from the normalised jump law nu(. | s1 <= 1 - eps) (or nu / nu(S)
/// for finite families), eps being the measure's restriction level.
inline RankedMassSequence sample_split(const DislocationMeasure& m, Rng& rng) {
  switch (m.family()) {
    case Family::DiscreteAtoms: {
      const auto& atoms = std::get<DiscreteAtoms>(m.variant()).atoms;
      if (atoms.size() == 1) return atoms[0].split;
      std::vector<double> w;
      w.reserve(atoms.size());
      for (const auto& a : atoms) w.push_back(a.weight);
      return atoms[size_biased_block(w, rng)].split;
    }
    case Family::BinaryDensity: {
      const double th = std::get<BinaryDensity>(m.variant()).theta;
      const double eps = m.restriction_eps();
      if (!(eps > 0.0)) throw ConfigurationError("cannot sample an unrestricted infinite measure");
      const double a = std::pow(eps, -th);
      const double b = std::pow(0.5, -th);
      const double u = std::pow(a - rng.uniform() * (a - b), -1.0 / th);
      const double small = std::min(u, 0.5);
      return RankedMassSequence({1.0 - small, small});
    }
    case Family::StableTree: {
      const auto& pool = *std::get<StableTree>(m.variant()).pool;
      const double total = pool.restricted_cumulative.back();
      const double x = rng.uniform() * total;
      auto it = std::upper_bound(pool.restricted_cumulative.begin(),
                                 pool.restricted_cumulative.end(), x);
      if (it == pool.restricted_cumulative.end()) --it;
      const auto k = static_cast<std::size_t>(it - pool.restricted_cumulative.begin());
      return pool.regenerate(pool.restricted_index[k]).split;
    }
    case Family::Truncated: {
      const auto& t = std::get<Truncated>(m.variant());
      if (!t.base->is_finite() && !(t.base->restriction_eps() > 0.0))
        throw ConfigurationError("cannot sample an unrestricted infinite measure");
      return grind(sample_split(*t.base, rng), t.n_blocks, t.eps);
    }
  }
  throw ConfigurationError("unknown measure family");
}

/// The jump law the engine actually simulates: finite rate, sampler, and
/// the compensating mass-decay drift for the discarded small dislocations.
class RestrictedMeasure {
 public:
  explicit RestrictedMeasure(std::shared_ptr<const DislocationMeasure> m) : measure_(std::move(m)) {
    const auto& mm = *measure_;
    const DislocationMeasure& base =
        mm.family() == Family::Truncated ? *std::get<Truncated>(mm.variant()).base : mm;
    if (base.is_finite()) {
      rate_ = mm.total_mass();
      drift_ = 0.0;
      eps_ = 0.0;
    } else {
      eps_ = mm.restriction_eps();
      if (!(eps_ > 0.0)) throw ConfigurationError("infinite measure used without eps-restriction");
      rate_ = base.restricted_mass(eps_).value;
      drift_ = base.integrate(
                       eps_, [](const SplitView& v) { return -std::expm1(v.log_s[0]); },
                       [](const SplitView&) { return 0.0; })
                   .value;
    }
    if (!(rate_ > 0.0) || !std::isfinite(rate_))
      throw ConfigurationError("restricted measure has no finite positive rate");
  }

  explicit RestrictedMeasure(const DislocationMeasure& m)
      : RestrictedMeasure(std::make_shared<const DislocationMeasure>(m)) {}

  const DislocationMeasure& measure() const noexcept { return *measure_; }
  std::shared_ptr<const DislocationMeasure> shared() const noexcept { return measure_; }
  double rate() const noexcept { return rate_; }
  /// Deterministic decay rate of masses in homogeneous time.
  double drift() const noexcept { return drift_; }
  double eps() const noexcept { return eps_; }

  RankedMassSequence sample(Rng& rng) const { return sample_split(*measure_, rng); }

  /// Laplace exponent of the simulated tagged subordinator:
  /// drift * q + int_{s1 <= 1-eps} (1 - sum s_i^{q+1}) nu(ds).
  ExponentReport tagged_exponent(double q) const {
    if (eps_ == 0.0) return fragtree::tagged_exponent(*measure_, q);
    auto f = [q](const SplitView& v) {
      double r = detail::one_minus_pow(v.log_s[0], q + 1.0);
      for (std::size_t i = 1; i < v.s.size(); ++i) r -= std::exp((q + 1.0) * v.log_s[i]);
      return r;
    };
    auto zero = [](const SplitView&) { return 0.0; };
    Integral i = measure_->integrate(eps_, zero, f);
    i.value += drift_ * q;
    return detail::report(q, i);
  }

 private:
  std::shared_ptr<const DislocationMeasure> measure_;
  double rate_ = 0.0;
  double drift_ = 0.0;
  double eps_ = 0.0;
};

}  // namespace fragtree
