#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fragtree/height.hpp"
#include "fragtree/stats.hpp"

using namespace fragtree;

namespace {

DislocationMeasure half_half() { return DislocationMeasure::dirac({0.5, 0.5}); }

// Root edge to a branchpoint at 0.2, two leaves of mass 0.5 at heights 0.5
// (L1) and 0.7 (L2). Masses constant along edges.
PlanarTree two_leaf_example() {
  EdgeTree t;
  const std::size_t b = t.add_child_at(0, 0.2);
  t.vertex_mut(b).mass = {MassSegment{0.0, 1.0}};
  const std::size_t l1 = t.add_child_at(b, 0.5, 1);
  t.vertex_mut(l1).mass = {MassSegment{0.2, 0.5}};
  const std::size_t l2 = t.add_child_at(b, 0.7, 2);
  t.vertex_mut(l2).mass = {MassSegment{0.2, 0.5}};
  return PlanarTree{t};
}

std::vector<double> lengths(const std::vector<IntervalPiece>& ps) {
  std::vector<double> out;
  for (const auto& p : ps) out.push_back(p.length);
  return out;
}

}  // namespace

TEST(RandomizeOrders, BinaryVertexUniform) {
  const auto t = merge({EdgeTree::single_edge(1, 0.3), EdgeTree::single_edge(2, 0.5)}, 0.2);
  Rng rng(1, 0);
  std::vector<double> counts(2, 0.0);
  for (int r = 0; r < 100000; ++r) {
    const auto p = randomize_orders(t, rng);
    counts[p.tree.planar_leaves().front() == 1 ? 0 : 1] += 1.0;
  }
  const std::vector<double> probs = {0.5, 0.5};
  EXPECT_GT(stats::chi_square(counts, probs).p_value, 1e-3);
}

TEST(RandomizeOrders, ThreeChildrenUniform) {
  const auto t = merge({EdgeTree::single_edge(1, 0.3), EdgeTree::single_edge(2, 0.5), EdgeTree::single_edge(3, 0.4)}, 0.2);
  Rng rng(2, 0);
  std::map<std::vector<Label>, double> counts;
  for (int r = 0; r < 100000; ++r) counts[randomize_orders(t, rng).tree.planar_leaves()] += 1.0;
  ASSERT_EQ(counts.size(), 6u);
  std::vector<double> c, p;
  for (const auto& [k, v] : counts) {
    c.push_back(v);
    p.push_back(1.0 / 6.0);
  }
  EXPECT_GT(stats::chi_square(c, p).p_value, 1e-3);
}

TEST(RandomizeOrders, SingleChildUnchanged) {
  const auto t = EdgeTree::single_edge(1, 0.5);
  Rng rng(3, 0);
  for (int r = 0; r < 10; ++r) EXPECT_TRUE(randomize_orders(t, rng).tree == t);
}

TEST(LeafPositions, Examples) {
  const auto one = leaf_positions(PlanarTree{EdgeTree::single_edge(1, 2.5)});
  ASSERT_EQ(one.points.size(), 1u);
  EXPECT_EQ(one.points[0].u, 0.5);
  EXPECT_EQ(one.points[0].h, 2.5);
  EXPECT_TRUE(one.gaps.empty());

  auto pt = PlanarTree{merge({EdgeTree::single_edge(2, 0.3), EdgeTree::single_edge(1, 0.5)}, 0.2)};
  ASSERT_EQ(pt.tree.planar_leaves(), (std::vector<Label>{2, 1}));
  const auto hs = leaf_positions(pt);
  EXPECT_EQ(hs.points[0].label, 2u);
  EXPECT_EQ(hs.points[0].u, 0.25);
  EXPECT_EQ(hs.points[1].label, 1u);
  EXPECT_EQ(hs.points[1].u, 0.75);
  EXPECT_EQ(hs.gaps, (std::vector<double>{0.2}));
  EXPECT_EQ(hs.resolution, 2u);
}

TEST(LeafPositions, ReversalMirrorsPositions) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto tr = simulate_self_similar(half_half(), -0.5, 9, s);
    Rng rng(s, 1);
    const auto pt = randomize_orders(build_marginal_tree(tr, 9), rng);
    const auto a = leaf_positions(pt);
    const auto b = leaf_positions(reverse_orders(pt));
    std::map<Label, double> ua, ub;
    std::vector<double> ha, hb;
    for (const auto& p : a.points) ua[p.label] = p.u, ha.push_back(p.h);
    for (const auto& p : b.points) ub[p.label] = p.u, hb.push_back(p.h);
    for (const auto& [l, u] : ua) EXPECT_DOUBLE_EQ(ub[l], 1.0 - u);
    std::sort(ha.begin(), ha.end());
    std::sort(hb.begin(), hb.end());
    EXPECT_EQ(ha, hb);
  }
}

TEST(LeafPositions, MassWeightedModeUsesLeafMasses) {
  const auto pt = two_leaf_example();
  const auto hs = leaf_positions(pt, PositionMode::MassWeighted);
  EXPECT_TRUE(hs.mass_weighted);
  EXPECT_EQ(hs.points[0].u, 0.25);
  EXPECT_EQ(hs.points[1].u, 0.75);
  EXPECT_EQ(hs.points[0].mass, 0.5);
  EXPECT_THROW(leaf_positions(PlanarTree{EdgeTree::single_edge(1, 1.0)}, PositionMode::MassWeighted), ValidationError);
}

TEST(IntervalFragmentation, Example) {
  const auto pt = two_leaf_example();
  EXPECT_EQ(lengths(interval_fragmentation(pt, 0.1)), (std::vector<double>{1.0}));
  EXPECT_EQ(lengths(interval_fragmentation(pt, 0.3)), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(lengths(interval_fragmentation(pt, 0.6)), (std::vector<double>{0.5}));
  EXPECT_TRUE(interval_fragmentation(pt, 0.8).empty());
  EXPECT_THROW(interval_fragmentation(pt, -0.1), ValidationError);
}

TEST(HeightEncoding, DistanceIdentityAndGaps) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto tr = simulate_self_similar(DislocationMeasure::dirac({0.5, 0.3, 0.2}), -0.5, 10, s);
    Rng rng(s, 2);
    const auto pt = randomize_orders(build_marginal_tree(tr, 10), rng);
    const auto hs = leaf_positions(pt);
    for (std::size_t r = 1; r < hs.points.size(); ++r) EXPECT_GT(hs.points[r].u, hs.points[r - 1].u);
    for (const auto& a : hs.points)
      for (const auto& b : hs.points) {
        if (a.label == b.label) continue;
        EXPECT_EQ(a.h + b.h - 2 * pt.tree.branch_height(a.label, b.label), pt.tree.distance(a.label, b.label));
      }
    for (std::size_t r = 0; r < hs.gaps.size(); ++r) {
      const Label a = hs.points[r].label, b = hs.points[r + 1].label;
      EXPECT_EQ(hs.gaps[r], tr.pair_death(a, b));
      EXPECT_LT(hs.gaps[r], std::min(hs.points[r].h, hs.points[r + 1].h));
    }
    const auto prof = height_profile(hs);
    EXPECT_EQ(prof.size(), 2 * hs.points.size() - 1);
    const auto pinned = height_profile(hs, true);
    EXPECT_EQ(pinned.front(), (std::pair<double, double>{0.0, 0.0}));
    EXPECT_EQ(pinned.back(), (std::pair<double, double>{1.0, 0.0}));
  }
}

TEST(LengthsEqualMasses, EventLevels) {
  const std::vector<DislocationMeasure> ms = {half_half(), DislocationMeasure::dirac({0.5, 0.3, 0.2}),
                                              DislocationMeasure::binary_density(0.5, 0.05)};
  std::size_t levels = 0;
  for (std::size_t mi = 0; mi < ms.size(); ++mi)
    for (std::uint64_t s = 0; s < 334; ++s) {
      const auto tr = simulate_self_similar(ms[mi], -0.5, 6, s);
      Rng rng(s, 3);
      const auto pt = randomize_orders(build_marginal_tree(tr, 6), rng);
      std::vector<double> grid = {0.0};
      for (const auto& e : tr.events) {
        grid.push_back(e.time);
        grid.push_back(e.time + 1e-9);
        if (e.time > 1e-9) grid.push_back(e.time - 1e-9);
      }
      for (Label i = 1; i <= 6; ++i) grid.push_back(tr.death(i).value - 1e-9);
      const auto rep = ranked_lengths_equal_masses(pt, tr, grid);
      EXPECT_TRUE(rep.ok) << "measure " << mi << " seed " << s;
      levels += rep.levels_checked;
      EXPECT_EQ(lengths(interval_fragmentation(pt, 0.0)), (std::vector<double>{1.0}));
      double top = 0.0;
      for (Label i = 1; i <= 6; ++i) top = std::max(top, tr.death(i).value);
      EXPECT_TRUE(interval_fragmentation(pt, top + 1.0).empty());
      EXPECT_TRUE(tagged_masses_at(tr, top + 1.0, 6).empty());
    }
  EXPECT_GT(levels, 10000u);
}

TEST(PlanarOrders, ReversalPreservesIntervalLaw) {
  std::vector<double> ranked_a, ranked_b, first_a, first_b;
  FragmentationSimulator sim(half_half(), -0.5);
  for (std::uint64_t s = 0; s < 3000; ++s) {
    const double level = 1.0;
    {
      Rng rng(s, 4);
      const auto pt = randomize_orders(build_marginal_tree(sim.run(16, s), 16), rng);
      const auto v = lengths(interval_fragmentation(pt, level));
      ranked_a.push_back(v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()));
      first_a.push_back(v.empty() ? 0.0 : v.front());
    }
    {
      const std::uint64_t s2 = 3000000 + s;
      Rng rng(s2, 4);
      const auto pt = reverse_orders(randomize_orders(build_marginal_tree(sim.run(16, s2), 16), rng));
      const auto v = lengths(interval_fragmentation(pt, level));
      ranked_b.push_back(v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()));
      first_b.push_back(v.empty() ? 0.0 : v.front());
    }
  }
  EXPECT_GT(stats::ks_two_sample(ranked_a, ranked_b).p_value, 0.01);
  EXPECT_GT(stats::ks_two_sample(first_a, first_b).p_value, 0.01);
}

TEST(Export, HeightSampleAndSnapshots) {
  const auto pt = two_leaf_example();
  std::ostringstream hs;
  write_height_sample(hs, leaf_positions(pt));
  EXPECT_EQ(hs.str(), "# resolution 2 midpoint-rank\nu\th\tmass\n0.25\t0.5\t0.5\n0.75\t0.69999999999999996\t0.5\n");
  std::ostringstream iv;
  write_interval_snapshots(iv, pt, {0.1, 0.3, 0.8});
  EXPECT_EQ(iv.str(), "0.10000000000000001\t1\n0.29999999999999999\t0.5\t0.5\n0.80000000000000004\n");
}
