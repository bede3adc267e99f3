#pragma once

// Planar orderings of marginal trees, sampled height functions and the
// interval fragmentation read off a planar tree.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "fragtree/engine.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/genealogy.hpp"
#include "fragtree/rng.hpp"

namespace fragtree {

/// An EdgeTree whose stored child order is the planar order.
struct PlanarTree {
  EdgeTree tree;

  /// Mass of leaf L_i: the fragment mass at the start of its leaf edge.
  double leaf_mass(Label i) const {
    const std::size_t u = tree.leaf(i);
    return tree.mass_at(u, tree.vertex(tree.vertex(u).parent).height);
  }
};

/// Independent uniform order on the children of every vertex.
inline PlanarTree randomize_orders(const EdgeTree& t, Rng& rng) {
  PlanarTree p{t};
  for (std::size_t u = 0; u < p.tree.size(); ++u) {
    auto& ch = p.tree.vertex_mut(u).children;
    for (std::size_t i = ch.size(); i > 1; --i) std::swap(ch[i - 1], ch[rng.below(i)]);
  }
  return p;
}

/// Planar tree with every child order reversed.
inline PlanarTree reverse_orders(const PlanarTree& t) {
  PlanarTree p = t;
  for (std::size_t u = 0; u < p.tree.size(); ++u) {
    auto& ch = p.tree.vertex_mut(u).children;
    std::reverse(ch.begin(), ch.end());
  }
  return p;
}

struct HeightPoint {
  double u = 0.0;
  double h = 0.0;
  double mass = 0.0;
  Label label = 0;
};

/// Leaves in planar order with positions, heights and masses. `gaps[r]` is
/// the branchpoint height between planar leaves r and r+1, the infimum of H
/// between them.
struct HeightSample {
  std::vector<HeightPoint> points;
  std::vector<double> gaps;
  std::size_t resolution = 0;  ///< number of leaves k
  bool mass_weighted = false;
};

enum class PositionMode { MidpointRank, MassWeighted };

inline HeightSample leaf_positions(const PlanarTree& t, PositionMode mode = PositionMode::MidpointRank) {
  const auto order = t.tree.planar_leaves();
  const std::size_t k = order.size();
  if (k < 1) throw ValidationError("height sample needs at least one leaf");
  HeightSample hs;
  hs.resolution = k;
  hs.mass_weighted = mode == PositionMode::MassWeighted;
  hs.points.reserve(k);
  const bool have_mass = !t.tree.vertex(t.tree.leaf(order[0])).mass.empty();
  std::vector<double> masses(k, 0.0);
  if (have_mass)
    for (std::size_t r = 0; r < k; ++r) masses[r] = t.leaf_mass(order[r]);
  double total = 0.0;
  for (double m : masses) total += m;
  if (mode == PositionMode::MassWeighted && !(total > 0.0))
    throw ValidationError("mass-weighted positions need leaf masses");
  double acc = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    HeightPoint p;
    p.label = order[r];
    p.h = t.tree.height(order[r]);
    p.mass = masses[r];
    if (mode == PositionMode::MidpointRank) {
      p.u = (static_cast<double>(r) + 0.5) / static_cast<double>(k);
    } else {
      p.u = (acc + 0.5 * masses[r]) / total;
      acc += masses[r];
    }
    hs.points.push_back(p);
  }
  for (std::size_t r = 0; r + 1 < k; ++r) hs.gaps.push_back(t.tree.branch_height(order[r], order[r + 1]));
  return hs;
}

/// Heights on a (u, h) path for the structure-function estimator: leaves
/// interleaved with the branchpoint minima between them, optionally pinned
/// to H(0) = H(1) = 0.
inline std::vector<std::pair<double, double>> height_profile(const HeightSample& hs, bool pin_endpoints = false) {
  std::vector<std::pair<double, double>> out;
  out.reserve(2 * hs.points.size() + 2);
  if (pin_endpoints) out.emplace_back(0.0, 0.0);
  for (std::size_t r = 0; r < hs.points.size(); ++r) {
    out.emplace_back(hs.points[r].u, hs.points[r].h);
    if (r < hs.gaps.size()) out.emplace_back(0.5 * (hs.points[r].u + hs.points[r + 1].u), hs.gaps[r]);
  }
  if (pin_endpoints) out.emplace_back(1.0, 0.0);
  return out;
}

struct IntervalPiece {
  double length = 0.0;
  std::size_t component = 0;  ///< vertex id of the edge crossing the level
};

/// Components of {H > level} in planar order: one per edge crossing the
/// level, with length the fragment mass at that level.
inline std::vector<IntervalPiece> interval_fragmentation(const PlanarTree& t, double level) {
  if (!(level >= 0.0)) throw ValidationError("level must be non-negative");
  std::vector<IntervalPiece> out;
  for (std::size_t u : t.tree.preorder()) {
    if (u == 0) continue;
    const auto& x = t.tree.vertex(u);
    if (t.tree.vertex(x.parent).height <= level && level < x.height)
      out.push_back(IntervalPiece{t.tree.mass_at(u, level), u});
  }
  return out;
}

struct LengthMassReport {
  bool ok = true;
  std::size_t levels_checked = 0;
  std::vector<double> mismatched_levels;
};

/// Ranked interval lengths against ranked masses of the trace's fragments
/// carrying labels 1..k, level by level, compared exactly.
inline LengthMassReport ranked_lengths_equal_masses(const PlanarTree& t, const FragmentationTrace& tr,
                                                    const std::vector<double>& levels) {
  const auto labs = t.tree.labels();
  const std::size_t k = labs.empty() ? 0 : labs.back();
  LengthMassReport rep;
  for (double level : levels) {
    std::vector<double> a;
    for (const auto& p : interval_fragmentation(t, level)) a.push_back(p.length);
    std::vector<double> b = tagged_masses_at(tr, level, k);
    std::sort(a.begin(), a.end(), std::greater<>());
    std::sort(b.begin(), b.end(), std::greater<>());
    ++rep.levels_checked;
    if (a != b) {
      rep.ok = false;
      rep.mismatched_levels.push_back(level);
    }
  }
  return rep;
}

inline void write_height_sample(std::ostream& out, const HeightSample& hs) {
  char buf[96];
  out << "# resolution " << hs.resolution << (hs.mass_weighted ? " mass-weighted" : " midpoint-rank") << "\n";
  out << "u\th\tmass\n";
  for (const auto& p : hs.points) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t%.17g\n", p.u, p.h, p.mass);
    out << buf;
  }
}

inline void write_interval_snapshots(std::ostream& out, const PlanarTree& t, const std::vector<double>& levels) {
  char buf[40];
  for (double level : levels) {
    std::snprintf(buf, sizeof buf, "%.17g", level);
    out << buf;
    for (const auto& p : interval_fragmentation(t, level)) {
      std::snprintf(buf, sizeof buf, "%.17g", p.length);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace fragtree
