#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fragtree/genealogy.hpp"
#include "fragtree/stats.hpp"

using namespace fragtree;

namespace {

DislocationMeasure half_half() { return DislocationMeasure::dirac({0.5, 0.5}); }

// Trace by hand: {1,2,3} splits at 0.1 into {1,2} | {3}; {1,2} splits at
// 0.4; D_1 = 0.6, D_2 = 0.7, D_3 = 0.5.
FragmentationTrace hand_trace() {
  FragmentationTrace tr;
  tr.alpha = -1.0;
  tr.n = 3;
  tr.measure = std::make_shared<const DislocationMeasure>(half_half());
  auto frag = [&](std::int64_t parent, double birth, double mass, std::vector<Label> labels) {
    FragmentRecord f;
    f.parent = parent;
    f.birth_time = birth;
    f.birth_mass = mass;
    f.labels = std::move(labels);
    f.end = EndKind::Truncated;
    f.end_time = birth;
    tr.fragments.push_back(f);
  };
  auto split = [&](std::int64_t parent, double time, std::vector<std::int64_t> children,
                   std::vector<std::pair<Label, std::uint32_t>> assignment) {
    auto& p = tr.fragments[static_cast<std::size_t>(parent)];
    p.end = EndKind::Split;
    p.end_time = time;
    p.split_event = static_cast<std::int64_t>(tr.events.size());
    SplitEvent e;
    e.time = time;
    e.parent = parent;
    e.split = RankedMassSequence({0.5, 0.5});
    e.children = std::move(children);
    e.assignment = std::move(assignment);
    tr.events.push_back(e);
  };
  frag(kNoFragment, 0.0, 1.0, {1, 2, 3});
  frag(0, 0.1, 0.5, {1, 2});
  frag(0, 0.1, 0.5, {3});
  split(0, 0.1, {1, 2}, {{1, 0}, {2, 0}, {3, 1}});
  frag(1, 0.4, 0.25, {1});
  frag(1, 0.4, 0.25, {2});
  split(1, 0.4, {3, 4}, {{1, 0}, {2, 1}});
  tr.death_times = {{0.6, 0.0}, {0.7, 0.0}, {0.5, 0.0}};
  return tr;
}

std::vector<double> internal_heights(const EdgeTree& t) {
  std::vector<double> h;
  for (std::size_t u = 1; u < t.size(); ++u)
    if (t.vertex(u).label == 0) h.push_back(t.vertex(u).height);
  std::sort(h.begin(), h.end());
  return h;
}

}  // namespace

TEST(Merge, Example) {
  const auto t = merge({EdgeTree::single_edge(1, 0.3), EdgeTree::single_edge(2, 0.5)}, 0.2);
  EXPECT_DOUBLE_EQ(t.distance(1, 2), 0.8);
  EXPECT_DOUBLE_EQ(t.height(1), 0.5);
  EXPECT_DOUBLE_EQ(t.height(2), 0.7);
  EXPECT_EQ(t.leaf_count(), 2u);
  EXPECT_EQ(t.vertex(0).children.size(), 1u);
  EXPECT_NO_THROW(t.validate());
}

TEST(Merge, ShortenRootEdge) {
  const auto inner = merge({EdgeTree::single_edge(1, 0.25), EdgeTree::single_edge(2, 0.5)}, 0.125);
  const auto outer = merge({inner, EdgeTree::single_edge(3, 1.0)}, 0.5);
  EXPECT_EQ(outer.leaf_count(), 3u);
  const auto cut = shorten_root_edge(inner, 0.0625);
  EXPECT_EQ(cut.vertex(cut.vertex(0).children[0]).length, 0.0625);
  EXPECT_EQ(cut.height(1), inner.height(1) - 0.0625);
  EXPECT_EQ(cut.distance(1, 2), inner.distance(1, 2));
  EXPECT_THROW(shorten_root_edge(inner, 0.125), ValidationError);
}

TEST(Merge, Validation) {
  EXPECT_THROW(merge({EdgeTree::single_edge(1, 0.3)}, 0.0), ValidationError);
  EXPECT_THROW(merge({EdgeTree::single_edge(1, 0.3)}, -1.0), ValidationError);
  EXPECT_THROW(merge({}, 1.0), ValidationError);
  EXPECT_THROW(merge({EdgeTree::single_edge(1, 0.3), EdgeTree::single_edge(1, 0.4)}, 1.0), ValidationError);
  EXPECT_THROW(EdgeTree::single_edge(1, 0.0), ValidationError);
}

TEST(BuildTree, SingleLeaf) {
  const auto tr = simulate_self_similar(half_half(), -1.0, 3, 5);
  const auto t = build_marginal_tree(tr, 1);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.height(1), tr.death(1).value);
  EXPECT_EQ(t.vertex(1).length, tr.death(1).value);
}

TEST(BuildTree, TwoLeavesDistance) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto tr = simulate_self_similar(half_half(), -0.5, 2, s);
    const auto t = build_marginal_tree(tr, 2);
    EXPECT_EQ(t.distance(1, 2), tr.death(1).value + tr.death(2).value - 2 * tr.pair_death(1, 2));
  }
}

TEST(BuildTree, HandExample) {
  const auto tr = hand_trace();
  const auto t = build_marginal_tree(tr, 3);
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(internal_heights(t), (std::vector<double>{0.1, 0.4}));
  EXPECT_EQ(t.branch_height(1, 3), 0.1);
  EXPECT_EQ(t.branch_height(1, 2), 0.4);
  const double D[3] = {0.6, 0.7, 0.5};
  const double P[3][3] = {{0.6, 0.4, 0.1}, {0.4, 0.7, 0.1}, {0.1, 0.1, 0.5}};
  for (Label i = 1; i <= 3; ++i)
    for (Label j = 1; j <= 3; ++j)
      EXPECT_DOUBLE_EQ(t.distance(i, j), i == j ? 0.0 : D[i - 1] + D[j - 1] - 2 * P[i - 1][j - 1]);
  EXPECT_DOUBLE_EQ(t.distance(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(t.distance(1, 3), 0.9);
  EXPECT_DOUBLE_EQ(t.distance(2, 3), 1.0);
}

TEST(BuildTree, MissingDeathTimes) {
  auto tr = hand_trace();
  tr.death_times[2] = DeathTime{};
  EXPECT_THROW(build_marginal_tree(tr, 3), ValidationError);
  const auto hom = simulate_homogeneous(half_half(), 3, 0.01, 1);
  EXPECT_THROW(build_marginal_tree(hom, 3), ValidationError);
  EXPECT_THROW(build_marginal_tree(hand_trace(), 4), ValidationError);
}

TEST(BuildTree, DistanceIdentityAndUltrametric) {
  const std::vector<DislocationMeasure> ms = {half_half(), DislocationMeasure::dirac({0.5, 0.3, 0.2}),
                                              DislocationMeasure::binary_density(0.5, 0.05)};
  for (const auto& m : ms)
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto tr = simulate_self_similar(m, -0.7, 7, s);
      const auto t = build_marginal_tree(tr, 7);
      EXPECT_NO_THROW(t.validate());
      const auto d = t.distance_matrix();
      for (Label i = 1; i <= 7; ++i) {
        EXPECT_EQ(t.height(i), tr.death(i).value);
        for (Label j = 1; j <= 7; ++j) {
          if (i == j) continue;
          EXPECT_EQ(t.distance(i, j), tr.death(i).value + tr.death(j).value - 2 * tr.pair_death(i, j));
          EXPECT_EQ(d[i - 1][j - 1], t.distance(i, j));
          EXPECT_EQ(t.distance_error(i, j), tr.death(i).error + tr.death(j).error);
        }
      }
    }
}

TEST(Spanned, Examples) {
  const auto t = build_marginal_tree(hand_trace(), 3);
  EXPECT_TRUE(spanned_subtree(t, {1, 2, 3}) == t);
  const auto one = spanned_subtree(t, {2});
  EXPECT_EQ(one.size(), 2u);
  EXPECT_EQ(one.vertex(1).length, 0.7);
  const auto two = spanned_subtree(t, {1, 3});
  EXPECT_EQ(two.leaf_count(), 2u);
  EXPECT_EQ(internal_heights(two), (std::vector<double>{0.1}));
  EXPECT_DOUBLE_EQ(two.distance(1, 3), 0.9);
  EXPECT_THROW(spanned_subtree(t, {}), ValidationError);
  EXPECT_THROW(spanned_subtree(t, {4}), ValidationError);
}

TEST(Spanned, MatchesSmallerBuildOnSameTrace) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto tr = simulate_self_similar(DislocationMeasure::dirac({0.5, 0.3, 0.2}), -0.5, 6, s);
    const auto big = build_marginal_tree(tr, 6);
    EXPECT_TRUE(spanned_subtree(big, {1, 2, 3}) == build_marginal_tree(tr, 3));
  }
}

TEST(Spanned, ConsistencyInLaw) {
  std::vector<double> spanned, fresh;
  FragmentationSimulator sim(half_half(), -0.5);
  for (std::uint64_t s = 0; s < 3000; ++s) {
    const auto t5 = build_marginal_tree(sim.run(5, s), 5);
    Rng rng(s, 99);
    const Label a = static_cast<Label>(1 + rng.below(5));
    Label b = static_cast<Label>(1 + rng.below(4));
    if (b >= a) ++b;
    spanned.push_back(spanned_subtree(t5, {a, b}).total_length());
    fresh.push_back(build_marginal_tree(sim.run(2, 5000000 + s), 2).total_length());
  }
  EXPECT_GT(stats::ks_two_sample(spanned, fresh).p_value, 0.01);
}

TEST(StickBreaking, EqualsFreshBuild) {
  const std::vector<DislocationMeasure> ms = {half_half(), DislocationMeasure::dirac({0.5, 0.3, 0.2}),
                                              DislocationMeasure::binary_density(0.5, 0.05)};
  Rng pick(4, 0);
  int checked = 0;
  for (const auto& m : ms)
    for (std::uint64_t s = 0; s < 340; ++s) {
      const auto tr = simulate_self_similar(m, -0.6, 8, s);
      const std::size_t k = 1 + pick.below(7);
      const auto ext = stick_breaking_extend(build_marginal_tree(tr, k), tr, static_cast<Label>(k + 1));
      const auto fresh = build_marginal_tree(tr, k + 1);
      EXPECT_TRUE(ext == fresh) << "seed " << s << " k " << k;
      EXPECT_EQ(ext.height(static_cast<Label>(k + 1)), tr.death(static_cast<Label>(k + 1)).value);
      ++checked;
    }
  EXPECT_GE(checked, 1000);
}

TEST(StickBreaking, Validation) {
  const auto tr = hand_trace();
  const auto t = build_marginal_tree(tr, 2);
  EXPECT_THROW(stick_breaking_extend(t, tr, 4), ValidationError);
  EXPECT_THROW(stick_breaking_extend(build_marginal_tree(tr, 3), tr, 4), ValidationError);
  const auto ext = stick_breaking_extend(t, tr, 3);
  EXPECT_EQ(ext.branch_height(1, 3), 0.1);
}

TEST(Newick, SingleEdge) {
  const auto t = EdgeTree::single_edge(1, 0.5);
  EXPECT_EQ(to_newick(t), "(L1:0.5)root;");
  EXPECT_TRUE(from_newick("(L1:0.5)root;") == t);
}

TEST(Newick, RoundTrips) {
  const auto hand = build_marginal_tree(hand_trace(), 3);
  EXPECT_TRUE(same_shape_and_lengths(from_newick(to_newick(hand)), hand));
  EXPECT_EQ(to_newick(from_newick(to_newick(hand))), to_newick(hand));
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = build_marginal_tree(simulate_self_similar(DislocationMeasure::dirac({0.6, 0.4}), -0.5, 6, s), 6);
    // Lengths are exact; heights are re-summed from them.
    const auto back = from_newick(to_newick(t));
    EXPECT_TRUE(same_shape_and_lengths(back, t));
    for (Label i = 1; i <= 6; ++i) {
      EXPECT_NEAR(back.height(i), t.height(i), 1e-12);
      for (Label j = 1; j <= 6; ++j) EXPECT_NEAR(back.distance(i, j), t.distance(i, j), 1e-12);
    }
  }
}

TEST(Newick, Malformed) {
  EXPECT_THROW(from_newick(""), ParseError);
  EXPECT_THROW(from_newick("   "), ParseError);
  EXPECT_THROW(from_newick("(L1:0.5)root"), ParseError);
  EXPECT_THROW(from_newick("(L1:abc)root;"), ParseError);
  EXPECT_THROW(from_newick("(X1:0.5)root;"), ParseError);
  try {
    from_newick("(L1:0.5,L2:)root;");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.position(), 5u);
  }
}

TEST(TreeJson, RoundTripIsBitExact) {
  const auto hand = build_marginal_tree(hand_trace(), 3);
  EXPECT_TRUE(tree_from_json_string(tree_to_json_string(hand)) == hand);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = build_marginal_tree(simulate_self_similar(DislocationMeasure::binary_density(0.5, 0.05), -0.5, 5, s), 5);
    const auto text = tree_to_json_string(t);
    const auto back = tree_from_json_string(text);
    EXPECT_TRUE(back == t);
    EXPECT_EQ(tree_to_json_string(back), text);
  }
  EXPECT_THROW(tree_from_json_string(""), ParseError);
  EXPECT_THROW(tree_from_json_string("{\"vertices\": 3}"), ValidationError);
}

TEST(LeafTightness, NearestLeafDistanceShrinks) {
  FragmentationSimulator sim(half_half(), -0.5);
  std::vector<double> medians;
  for (std::size_t k : {2u, 8u, 32u, 128u}) {
    std::vector<double> nearest;
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto t = build_marginal_tree(sim.run(k, s), k);
      double best = kInf;
      for (Label j = 2; j <= k; ++j) best = std::min(best, t.distance(1, j));
      nearest.push_back(best);
    }
    medians.push_back(stats::quantile(nearest, 0.5));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_LT(medians[i], medians[i - 1]);
  EXPECT_LT(medians.back(), 0.25 * medians.front());
}

TEST(MassPaths, LeafEdgeMassMatchesTrace) {
  const auto tr = simulate_self_similar(half_half(), -1.0, 4, 9);
  const auto t = build_marginal_tree(tr, 4);
  // Just above the first branchpoint every child edge carries half the mass.
  const std::size_t top = t.vertex(0).children[0];
  const double h = t.vertex(top).height;
  for (std::size_t c : t.vertex(top).children) {
    const double m = t.mass_at(c, h);
    int e = 0;
    EXPECT_EQ(std::frexp(m, &e), 0.5);
    EXPECT_LE(m, 0.5);
  }
}
