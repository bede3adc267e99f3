#pragma once

// Event-driven simulation of partition-valued fragmentations restricted to
// n tagged integers.
//
// Every fragment carries its own exponential clock. In homogeneous time a
// fragment splits at rate nu_eps(S); with self-similarity index alpha < 0 a
// fragment of mass m runs its homogeneous clock at speed m^alpha, so the
// real duration of homogeneous time tau is m^{|alpha|} tau (or the closed
// form below when the small-dislocation drift is active). Splits are drawn
// from the restricted measure and tagged labels are painted onto the
// children. Fragments are processed in global time order through a single
// priority queue. Every fragment draws from its own stream (seed, stream id),
// where the stream id is derived from the parent's id and the child's index
// in the split. Realizations are therefore coupled across mass floors,
// tracking modes and label counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "fragtree/dislocation.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/partitions.hpp"
#include "fragtree/rng.hpp"

namespace fragtree {

using Label = std::uint32_t;
inline constexpr std::int64_t kNoFragment = -1;

enum class EndKind : std::uint8_t {
  Split = 0,      ///< dislocated at end_time (see split_event)
  Truncated = 1,  ///< single-label chain stopped; remainder folded into the death time
  BelowFloor = 2, ///< untagged fragment below the mass floor (full mode only)
  Horizon = 3,    ///< still alive at the simulation horizon
};

struct FragmentRecord {
  std::int64_t parent = kNoFragment;
  std::uint64_t stream = 0;  ///< RNG stream id, derived from the genealogical path
  double birth_time = 0.0;
  double birth_mass = 1.0;
  double end_time = kInf;
  EndKind end = EndKind::Horizon;
  std::int64_t split_event = -1;
  std::vector<Label> labels;  ///< tagged labels carried, ascending
  /// Upper bound on time from end_time until extinction (Truncated only).
  double lifetime_bound = 0.0;

  friend bool operator==(const FragmentRecord&, const FragmentRecord&) = default;
};

struct SplitEvent {
  double time = 0.0;
  std::int64_t parent = kNoFragment;
  RankedMassSequence split;
  std::vector<std::int64_t> children;  ///< fragment id per split index, or kNoFragment
  std::vector<std::pair<Label, std::uint32_t>> assignment;  ///< label -> split index
  double dropped_mass = 0.0;   ///< untagged sub-floor mass discarded here
  double dropped_until = 0.0;  ///< all of it is extinct by this time

  friend bool operator==(const SplitEvent&, const SplitEvent&) = default;
};

struct DeathTime {
  double value = kInf;
  double error = 0.0;
  friend bool operator==(const DeathTime&, const DeathTime&) = default;
};

struct SimulationOptions {
  double horizon = kInf;
  double death_tol = 1e-6;
  double mass_floor = 1e-6;
  bool full_mode = false;
  std::size_t pilot_runs = 100;
  double pilot_floor = 1e-3;
};

/// Mass at time t of a fragment born at t0 with mass m0 whose mass decays at
/// rate `drift` in homogeneous time (self-similar clock m^alpha).
inline double decayed_mass(double alpha, double drift, double t0, double m0, double t) {
  if (drift == 0.0) return m0;
  const double dt = std::max(0.0, t - t0);
  if (alpha == 0.0) return m0 * std::exp(-drift * dt);
  const double a = -alpha;
  const double base = 1.0 - drift * a * dt / std::pow(m0, a);
  return base <= 0.0 ? 0.0 : m0 * std::pow(base, 1.0 / a);
}

struct FragmentationTrace {
  double alpha = 0.0;  ///< 0 for homogeneous traces
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::shared_ptr<const DislocationMeasure> measure;
  SimulationOptions options;
  double drift = 0.0;                ///< compensating decay rate (homogeneous time)
  double phi_abs_alpha = 0.0;        ///< tagged exponent at |alpha| (self-similar)
  double extinction_quantile = 0.0;  ///< unit-mass extinction time bound (full mode)

  std::vector<FragmentRecord> fragments;
  std::vector<SplitEvent> events;
  std::vector<DeathTime> death_times;  ///< index label - 1

  bool homogeneous() const noexcept { return alpha == 0.0; }

  /// Mass of fragment f at time t (f alive at t).
  double mass_at(const FragmentRecord& f, double t) const {
    return decayed_mass(alpha, drift, f.birth_time, f.birth_mass, t);
  }

  const DeathTime& death(Label i) const {
    if (i < 1 || i > n) throw ValidationError("label out of range");
    return death_times[i - 1];
  }

  /// Split index that label i received at event e (assignments are sorted
  /// by label), or nullopt if i was not carried by the parent.
  static std::optional<std::uint32_t> assigned_index(const SplitEvent& e, Label i) {
    auto it = std::lower_bound(e.assignment.begin(), e.assignment.end(), i,
                               [](const auto& p, Label v) { return p.first < v; });
    if (it == e.assignment.end() || it->first != i) return std::nullopt;
    return it->second;
  }

  /// Last fragment that carries label i.
  std::int64_t terminal_fragment(Label i) const {
    if (i < 1 || i > n) throw ValidationError("label out of range");
    std::int64_t f = 0;
    for (;;) {
      const auto& rec = fragments[static_cast<std::size_t>(f)];
      if (rec.end != EndKind::Split) return f;
      const auto idx = assigned_index(events[static_cast<std::size_t>(rec.split_event)], i);
      if (!idx) return f;
      f = events[static_cast<std::size_t>(rec.split_event)].children[*idx];
    }
  }

  /// D_{i,j}: time of the split separating i and j (D_i when i == j).
  double pair_death(Label i, Label j) const {
    if (i == j) return death(i).value;
    if (i < 1 || i > n || j < 1 || j > n) throw ValidationError("label out of range");
    std::int64_t f = 0;
    for (;;) {
      const auto& rec = fragments[static_cast<std::size_t>(f)];
      if (rec.end != EndKind::Split)
        throw ValidationError("labels not separated within the simulated horizon");
      const auto& ev = events[static_cast<std::size_t>(rec.split_event)];
      const auto ii = assigned_index(ev, i);
      const auto ij = assigned_index(ev, j);
      if (!ii || !ij) throw ValidationError("label not carried by the trace");
      if (*ii != *ij) return ev.time;
      f = ev.children[*ii];
    }
  }

  /// Full matrix of D_{i,j} for labels 1..n (diagonal D_i).
  std::vector<std::vector<double>> pair_death_times() const {
    std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
    for (Label i = 1; i <= n; ++i)
      for (Label j = i; j <= n; ++j) out[i - 1][j - 1] = out[j - 1][i - 1] = pair_death(i, j);
    return out;
  }

  friend bool operator==(const FragmentationTrace& a, const FragmentationTrace& b) {
    return a.alpha == b.alpha && a.n == b.n && a.seed == b.seed &&
           *a.measure == *b.measure && a.options.horizon == b.options.horizon &&
           a.options.death_tol == b.options.death_tol &&
           a.options.mass_floor == b.options.mass_floor &&
           a.options.full_mode == b.options.full_mode && a.drift == b.drift &&
           a.phi_abs_alpha == b.phi_abs_alpha &&
           a.extinction_quantile == b.extinction_quantile && a.fragments == b.fragments &&
           a.events == b.events && a.death_times == b.death_times;
  }
};

/// Simulates traces for one (measure, alpha, options) configuration. The
/// tagged exponent at |alpha| and, in full mode, the extinction-time quantile
/// are computed once at construction.
class FragmentationSimulator {
 public:
  FragmentationSimulator(std::shared_ptr<const DislocationMeasure> measure, double alpha,
                         SimulationOptions opts = {})
      : restricted_(std::move(measure)), alpha_(alpha), opts_(opts) {
    if (alpha_ > 0.0) throw ValidationError("only alpha <= 0 is supported");
    if (!restricted_.measure().is_conservative())
      throw ConfigurationError("dust-producing measures cannot drive the engine");
    if (!(opts_.horizon > 0.0)) throw ValidationError("horizon must be positive");
    if (opts_.full_mode && !(opts_.mass_floor > 0.0))
      throw ValidationError("mass floor must be positive");
    if (alpha_ < 0.0) {
      if (!(opts_.death_tol > 0.0)) throw ValidationError("death tolerance must be positive");
      const auto phi = restricted_.tagged_exponent(-alpha_);
      if (phi.divergent || !(phi.value > 0.0) || !std::isfinite(phi.value))
        throw ConfigurationError("tagged exponent at |alpha| is zero or divergent");
      phi_abs_alpha_ = phi.value;
      if (opts_.full_mode) extinction_quantile_ = pilot_extinction_quantile();
    }
  }

  FragmentationSimulator(const DislocationMeasure& measure, double alpha, SimulationOptions opts = {})
      : FragmentationSimulator(std::make_shared<const DislocationMeasure>(measure), alpha, opts) {}

  double alpha() const noexcept { return alpha_; }
  const SimulationOptions& options() const noexcept { return opts_; }
  const RestrictedMeasure& restricted() const noexcept { return restricted_; }
  double phi_abs_alpha() const noexcept { return phi_abs_alpha_; }
  double extinction_quantile() const noexcept { return extinction_quantile_; }

  FragmentationTrace run(std::size_t n, std::uint64_t seed) const {
    return simulate(n, seed, opts_.full_mode, opts_.mass_floor);
  }

  /// Re-times a homogeneous trace with per-fragment clocks m^{|alpha|}: the
  /// partition sequence is unchanged, single-label chains are truncated with
  /// the same rule as direct simulation.
  FragmentationTrace time_change(const FragmentationTrace& hom) const;

 private:
  // Real-time duration of homogeneous time tau for a fragment of birth mass m.
  double duration(double m, double tau) const {
    if (alpha_ == 0.0) return tau;
    const double a = -alpha_;
    const double c = restricted_.drift();
    if (c == 0.0) return std::pow(m, a) * tau;
    return std::pow(m, a) * (-std::expm1(-c * a * tau)) / (c * a);
  }

  double mass_after(double m, double tau) const {
    const double c = restricted_.drift();
    return c == 0.0 ? m : m * std::exp(-c * tau);
  }

  double remainder(double m) const { return std::pow(m, -alpha_) / phi_abs_alpha_; }

  FragmentationTrace simulate(std::size_t n, std::uint64_t seed, bool full_mode, double floor) const;
  double pilot_extinction_quantile() const;

  RestrictedMeasure restricted_;
  double alpha_;
  SimulationOptions opts_;
  double phi_abs_alpha_ = 0.0;
  double extinction_quantile_ = 0.0;
};

inline FragmentationTrace FragmentationSimulator::simulate(std::size_t n, std::uint64_t seed,
                                                           bool full_mode, double floor) const {
  FragmentationTrace tr;
  tr.alpha = alpha_;
  tr.n = n;
  tr.seed = seed;
  tr.measure = restricted_.shared();
  tr.options = opts_;
  tr.options.full_mode = full_mode;
  tr.options.mass_floor = floor;
  tr.drift = restricted_.drift();
  tr.phi_abs_alpha = phi_abs_alpha_;
  tr.extinction_quantile = extinction_quantile_;
  tr.death_times.assign(n, DeathTime{});

  const double rate = restricted_.rate();
  const double a = -alpha_;

  struct Pending {
    double time;
    std::int64_t id;
    bool operator>(const Pending& o) const { return time > o.time || (time == o.time && id > o.id); }
  };
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;

  // Creates a fragment, applies the single-label truncation rule, and
  // schedules its split.
  auto spawn = [&](std::int64_t parent, std::uint64_t stream, double t, double mass,
                   std::vector<Label> labels) {
    const auto id = static_cast<std::int64_t>(tr.fragments.size());
    FragmentRecord rec;
    rec.parent = parent;
    rec.stream = stream;
    rec.birth_time = t;
    rec.birth_mass = mass;
    rec.labels = std::move(labels);
    if (alpha_ < 0.0 && rec.labels.size() == 1 && remainder(mass) < opts_.death_tol) {
      const double r = remainder(mass);
      rec.end = EndKind::Truncated;
      rec.end_time = t;
      rec.lifetime_bound = std::pow(mass, a) * extinction_quantile_;
      tr.death_times[rec.labels[0] - 1] = DeathTime{t + r, r};
      tr.fragments.push_back(std::move(rec));
      return;
    }
    Rng rng(seed, stream);
    const double tau = rng.exponential(rate);
    const double end = t + duration(mass, tau);
    rec.end_time = end;
    tr.fragments.push_back(std::move(rec));
    queue.push(Pending{end, id});
  };

  std::vector<Label> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<Label>(i + 1);
  spawn(kNoFragment, 0, 0.0, 1.0, std::move(all));

  std::vector<std::vector<Label>> groups;
  while (!queue.empty()) {
    const Pending p = queue.top();
    queue.pop();
    auto& rec0 = tr.fragments[static_cast<std::size_t>(p.id)];
    if (p.time > opts_.horizon) {
      rec0.end = EndKind::Horizon;
      rec0.end_time = opts_.horizon;
      continue;
    }
    Rng rng(seed, rec0.stream);
    const double tau = rng.exponential(rate);
    const double m_before = mass_after(rec0.birth_mass, tau);
    RankedMassSequence s = restricted_.sample(rng);
    if (!s.is_conservative())
      throw ConfigurationError("dust-producing dislocation sampled; erosion-free conservative measures only");
    const auto& masses = s.masses();

    SplitEvent ev;
    ev.time = p.time;
    ev.parent = p.id;
    groups.assign(masses.size(), {});
    const std::vector<Label> labels = rec0.labels;
    ev.assignment.reserve(labels.size());
    for (Label lab : labels) {
      const auto j = static_cast<std::uint32_t>(*paint(masses, rng, true));
      ev.assignment.emplace_back(lab, j);
      groups[j].push_back(lab);
    }
    ev.children.assign(masses.size(), kNoFragment);
    const auto event_index = static_cast<std::int64_t>(tr.events.size());
    {
      auto& rec = tr.fragments[static_cast<std::size_t>(p.id)];
      rec.end = EndKind::Split;
      rec.end_time = p.time;
      rec.split_event = event_index;
    }
    double dropped_max = 0.0;
    for (std::size_t j = 0; j < masses.size(); ++j) {
      const double mc = m_before * masses[j];
      if (!groups[j].empty() || (full_mode && mc >= floor)) {
        ev.children[j] = static_cast<std::int64_t>(tr.fragments.size());
        spawn(p.id, mix_pair(tr.fragments[static_cast<std::size_t>(p.id)].stream, j + 1), p.time, mc,
              std::move(groups[j]));
      } else if (full_mode) {
        ev.dropped_mass += mc;
        dropped_max = std::max(dropped_max, mc);
      }
    }
    if (ev.dropped_mass > 0.0)
      ev.dropped_until = alpha_ == 0.0 ? kInf : p.time + std::pow(dropped_max, a) * extinction_quantile_;
    ev.split = std::move(s);
    tr.events.push_back(std::move(ev));
  }
  return tr;
}

inline double FragmentationSimulator::pilot_extinction_quantile() const {
  // Unit-mass runs down to the pilot floor; the last split time plus the
  // scaled remainder of the floor-level pieces estimates the extinction time.
  std::vector<double> tau;
  tau.reserve(opts_.pilot_runs);
  const double a = -alpha_;
  for (std::size_t r = 0; r < opts_.pilot_runs; ++r) {
    const auto tr = simulate(0, 0x9110700000000000ULL + r, true, opts_.pilot_floor);
    double last = 0.0;
    for (const auto& e : tr.events) last = std::max(last, e.time);
    tau.push_back(last);
  }
  std::sort(tau.begin(), tau.end());
  const double q = tau[std::min(tau.size() - 1, static_cast<std::size_t>(0.999 * tau.size()))];
  return q / (1.0 - std::pow(opts_.pilot_floor, a));
}

inline FragmentationTrace FragmentationSimulator::time_change(const FragmentationTrace& hom) const {
  if (!hom.homogeneous()) throw ValidationError("time_change expects a homogeneous trace");
  if (alpha_ >= 0.0) throw ValidationError("time_change needs alpha < 0");
  if (!(*hom.measure == restricted_.measure()))
    throw ValidationError("trace and simulator use different measures");
  const double a = -alpha_;
  FragmentationTrace tr;
  tr.alpha = alpha_;
  tr.n = hom.n;
  tr.seed = hom.seed;
  tr.measure = hom.measure;
  tr.options = hom.options;
  tr.options.death_tol = opts_.death_tol;
  tr.options.horizon = kInf;
  tr.drift = hom.drift;
  tr.phi_abs_alpha = phi_abs_alpha_;
  tr.extinction_quantile = extinction_quantile_;
  tr.death_times.assign(hom.n, DeathTime{});

  // Depth-first replay keeps parents before children; the event list is
  // sorted by the new times afterwards.
  std::vector<std::int64_t> new_id(hom.fragments.size(), kNoFragment);
  struct Item {
    std::int64_t old_id;
    std::int64_t new_parent;
    double birth;
  };
  std::vector<Item> stack{{0, kNoFragment, 0.0}};
  std::vector<std::pair<double, SplitEvent>> timed;
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const auto& old = hom.fragments[static_cast<std::size_t>(it.old_id)];
    const auto id = static_cast<std::int64_t>(tr.fragments.size());
    new_id[static_cast<std::size_t>(it.old_id)] = id;
    FragmentRecord rec;
    rec.parent = it.new_parent;
    rec.stream = old.stream;
    rec.birth_time = it.birth;
    rec.birth_mass = old.birth_mass;
    rec.labels = old.labels;
    if (rec.labels.size() == 1 && remainder(rec.birth_mass) < opts_.death_tol) {
      const double r = remainder(rec.birth_mass);
      rec.end = EndKind::Truncated;
      rec.end_time = it.birth;
      rec.lifetime_bound = std::pow(rec.birth_mass, a) * extinction_quantile_;
      tr.death_times[rec.labels[0] - 1] = DeathTime{it.birth + r, r};
      tr.fragments.push_back(std::move(rec));
      continue;
    }
    const double hom_life = old.end_time - old.birth_time;
    const double end = it.birth + duration(old.birth_mass, hom_life);
    rec.end_time = end;
    if (old.end == EndKind::Split) {
      const auto& ev_old = hom.events[static_cast<std::size_t>(old.split_event)];
      SplitEvent ev = ev_old;
      ev.time = end;
      ev.parent = id;
      if (ev.dropped_mass > 0.0) {
        double dropped_max = 0.0;
        const double m_before = mass_after(old.birth_mass, hom_life);
        for (std::size_t j = 0; j < ev.split.size(); ++j)
          if (ev.children[j] == kNoFragment) dropped_max = std::max(dropped_max, m_before * ev.split[j]);
        ev.dropped_until = end + std::pow(dropped_max, a) * extinction_quantile_;
      }
      rec.end = EndKind::Split;
      rec.split_event = static_cast<std::int64_t>(timed.size());
      timed.emplace_back(end, std::move(ev));
      for (std::size_t j = ev_old.children.size(); j-- > 0;)
        if (ev_old.children[j] != kNoFragment) stack.push_back({ev_old.children[j], id, end});
    } else {
      // Homogeneous horizon reached: fold in the expected remainder.
      const double m_end = mass_after(old.birth_mass, hom_life);
      rec.end = EndKind::Truncated;
      rec.lifetime_bound = std::pow(m_end, a) * extinction_quantile_;
      if (rec.labels.size() == 1) {
        const double r = remainder(m_end);
        tr.death_times[rec.labels[0] - 1] = DeathTime{end + r, r};
      }
    }
    tr.fragments.push_back(std::move(rec));
  }
  // Map children to new ids and order events by time.
  std::vector<std::size_t> order(timed.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return timed[x].first < timed[y].first || (timed[x].first == timed[y].first && x < y);
  });
  std::vector<std::int64_t> event_slot(timed.size());
  for (std::size_t k = 0; k < order.size(); ++k) event_slot[order[k]] = static_cast<std::int64_t>(k);
  tr.events.reserve(timed.size());
  for (std::size_t k : order) {
    SplitEvent ev = std::move(timed[k].second);
    for (auto& c : ev.children)
      if (c != kNoFragment) c = new_id[static_cast<std::size_t>(c)];
    tr.events.push_back(std::move(ev));
  }
  for (auto& rec : tr.fragments)
    if (rec.end == EndKind::Split) rec.split_event = event_slot[static_cast<std::size_t>(rec.split_event)];
  return tr;
}

// ---------------------------------------------------------------------------
// Free-function entry points

inline FragmentationTrace simulate_homogeneous(const DislocationMeasure& m, std::size_t n,
                                               double horizon, std::uint64_t seed,
                                               SimulationOptions opts = {}) {
  if (n < 1 && !opts.full_mode) throw ValidationError("need at least one tagged label");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ValidationError("homogeneous simulation needs a finite positive horizon");
  opts.horizon = horizon;
  return FragmentationSimulator(m, 0.0, opts).run(n, seed);
}

inline FragmentationTrace simulate_self_similar(const DislocationMeasure& m, double alpha,
                                                std::size_t n, std::uint64_t seed,
                                                SimulationOptions opts = {}) {
  if (!(alpha < 0.0)) throw ValidationError("self-similar simulation needs alpha < 0");
  return FragmentationSimulator(m, alpha, opts).run(n, seed);
}

inline FragmentationTrace time_change(const FragmentationTrace& hom, double alpha,
                                      double death_tol = 1e-6) {
  if (!hom.homogeneous()) throw ValidationError("time_change expects a homogeneous trace");
  if (!(alpha < 0.0)) throw ValidationError("time_change needs alpha < 0");
  SimulationOptions opts = hom.options;
  opts.death_tol = death_tol;
  opts.horizon = kInf;
  return FragmentationSimulator(hom.measure, alpha, opts).time_change(hom);
}

// ---------------------------------------------------------------------------
// Mass views

struct RankedMassView {
  RankedMassSequence masses;   ///< tracked live masses >= the view floor, ranked
  double unaccounted = 0.0;    ///< mass that may still be alive but is not listed
};

namespace detail {

inline bool alive_at(const FragmentRecord& f, double t) {
  if (f.birth_time > t) return false;
  switch (f.end) {
    case EndKind::Split: return t < f.end_time;
    case EndKind::Horizon: return true;
    default: return false;
  }
}

// Mass that may be alive at t but is not tracked: truncated chains and
// discarded sub-floor pieces whose extinction bound has not passed.
inline double possibly_alive(const FragmentationTrace& tr, double t) {
  double total = 0.0;
  for (const auto& f : tr.fragments)
    if (f.end == EndKind::Truncated && f.end_time <= t && t < f.end_time + f.lifetime_bound)
      total += tr.mass_at(f, f.end_time);
  for (const auto& e : tr.events)
    if (e.dropped_mass > 0.0 && e.time <= t && t < e.dropped_until) total += e.dropped_mass;
  return total;
}

}  // namespace detail

inline RankedMassView ranked_masses(const FragmentationTrace& tr, double t, double view_floor = 0.0) {
  if (!tr.options.full_mode) throw ValidationError("ranked masses need a full-mode trace");
  if (t < 0.0 || t > tr.options.horizon) throw ValidationError("time outside the simulated range");
  std::vector<double> live;
  double below = 0.0;
  for (const auto& f : tr.fragments) {
    if (!detail::alive_at(f, t)) continue;
    const double m = tr.mass_at(f, t);
    if (m >= view_floor && m > 0.0) live.push_back(m);
    else below += m;
  }
  std::sort(live.begin(), live.end(), std::greater<>());
  return RankedMassView{RankedMassSequence(std::move(live)), below + detail::possibly_alive(tr, t)};
}

struct DustInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Bracket on the mass lost to dust by time t.
inline DustInterval dust_mass(const FragmentationTrace& tr, double t) {
  if (!tr.options.full_mode) throw ValidationError("dust bracketing needs a full-mode trace");
  if (t < 0.0) throw ValidationError("negative time");
  double live = 0.0;
  for (const auto& f : tr.fragments)
    if (detail::alive_at(f, t)) live += tr.mass_at(f, t);
  const double upper = std::clamp(1.0 - live, 0.0, 1.0);
  const double lower = std::clamp(upper - detail::possibly_alive(tr, t), 0.0, upper);
  return DustInterval{lower, upper};
}

/// Masses at t of the fragments carrying a tagged label <= k (all labels
/// when k == 0). A truncated single-label chain counts as alive until its
/// reported death time, with its mass frozen at the truncation point.
inline std::vector<double> tagged_masses_at(const FragmentationTrace& tr, double t, std::size_t k = 0) {
  std::vector<double> out;
  for (const auto& f : tr.fragments) {
    if (f.labels.empty() || f.birth_time > t) continue;
    if (k != 0 && f.labels.front() > k) continue;
    bool alive = false;
    double at = t;
    if (f.end == EndKind::Truncated) {
      alive = f.labels.size() == 1 && t < tr.death_times[f.labels[0] - 1].value;
      at = std::min(t, f.end_time);
    } else {
      alive = detail::alive_at(f, t);
    }
    if (alive) out.push_back(tr.mass_at(f, at));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tagged subordinator

/// Piecewise path of xi_t = -log(tagged mass) in homogeneous time: a drift
/// plus jumps at the recorded times.
struct SubordinatorPath {
  double horizon = 0.0;
  double drift = 0.0;
  std::vector<double> jump_times;
  std::vector<double> jump_sizes;

  double value_at(double t) const {
    double x = drift * t;
    for (std::size_t k = 0; k < jump_times.size() && jump_times[k] <= t; ++k) x += jump_sizes[k];
    return x;
  }
};

/// The tagged block follows a size-biased pick among the kept blocks of
/// each split (all blocks for conservative measures; the grind-kept blocks
/// for truncated measures).
inline SubordinatorPath tagged_subordinator_path(const RestrictedMeasure& m, double horizon, Rng& rng) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and positive");
  SubordinatorPath path;
  path.horizon = horizon;
  path.drift = m.drift();
  double t = rng.exponential(m.rate());
  while (t <= horizon) {
    const RankedMassSequence s = m.sample(rng);
    const std::size_t k = size_biased_block(s.view(), rng);
    path.jump_times.push_back(t);
    path.jump_sizes.push_back(-std::log(s[k]));
    t += rng.exponential(m.rate());
  }
  return path;
}

inline SubordinatorPath tagged_subordinator_path(const DislocationMeasure& m, double horizon, Rng& rng) {
  return tagged_subordinator_path(RestrictedMeasure(m), horizon, rng);
}

}  // namespace fragtree
