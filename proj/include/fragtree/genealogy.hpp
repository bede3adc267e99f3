#pragma once

// Marginal genealogical trees R(k) of a fragmentation trace.
//
// Vertices store their absolute height (distance to the root) as the primary
// coordinate; edge lengths are kept alongside so that text formats can carry
// them exactly. Distances are computed from heights, so for a tree built
// from a trace d(L_i, L_j) is literally D_i + D_j - 2 D_{i,j}.
//
// Each edge also carries the mass path of the fragment chain it represents:
// segments (t0, m0, freeze) evaluated with the trace's decay rule.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fragtree/engine.hpp"
#include "fragtree/errors.hpp"

namespace fragtree {

struct MassSegment {
  double t0 = 0.0;
  double m0 = 1.0;
  double freeze = kInf;  ///< mass stays constant after this time
  friend bool operator==(const MassSegment&, const MassSegment&) = default;
};

inline constexpr std::size_t kNoVertex = std::numeric_limits<std::size_t>::max();

struct TreeVertex {
  std::size_t parent = kNoVertex;
  std::vector<std::size_t> children;
  double height = 0.0;
  double length = 0.0;  ///< edge from the parent (0 at the root)
  Label label = 0;      ///< leaf label, 0 for unlabeled vertices
  double error = 0.0;   ///< bound on the height error (truncated death times)
  std::vector<MassSegment> mass;  ///< along the edge from the parent
};

class EdgeTree {
 public:
  double alpha = 0.0;  ///< mass decay rule of the generating trace
  double drift = 0.0;

  EdgeTree() { v_.emplace_back(); }

  static EdgeTree single_edge(Label label, double length) {
    if (!(length > 0.0)) throw ValidationError("edge lengths must be positive");
    EdgeTree t;
    t.add_child(0, length, label);
    return t;
  }

  std::size_t root() const noexcept { return 0; }
  std::size_t size() const noexcept { return v_.size(); }
  const TreeVertex& vertex(std::size_t i) const { return v_.at(i); }
  TreeVertex& vertex_mut(std::size_t i) { return v_.at(i); }
  const std::vector<TreeVertex>& vertices() const noexcept { return v_; }

  /// Appends a child of `parent` at distance `length`.
  std::size_t add_child(std::size_t parent, double length, Label label = 0) {
    if (parent >= v_.size()) throw ValidationError("unknown parent vertex");
    TreeVertex c;
    c.parent = parent;
    c.length = length;
    c.height = v_[parent].height + length;
    c.label = label;
    v_.push_back(std::move(c));
    v_[parent].children.push_back(v_.size() - 1);
    return v_.size() - 1;
  }

  /// Appends a child at absolute height `height` (length = height - parent height).
  std::size_t add_child_at(std::size_t parent, double height, Label label = 0) {
    if (parent >= v_.size()) throw ValidationError("unknown parent vertex");
    TreeVertex c;
    c.parent = parent;
    c.height = height;
    c.length = height - v_[parent].height;
    c.label = label;
    v_.push_back(std::move(c));
    v_[parent].children.push_back(v_.size() - 1);
    return v_.size() - 1;
  }

  /// Leaf labels in increasing order.
  std::vector<Label> labels() const {
    std::vector<Label> out;
    for (const auto& x : v_)
      if (x.label != 0) out.push_back(x.label);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t leaf_count() const {
    std::size_t c = 0;
    for (const auto& x : v_)
      if (x.label != 0) ++c;
    return c;
  }

  std::size_t leaf(Label label) const {
    for (std::size_t i = 0; i < v_.size(); ++i)
      if (v_[i].label == label) return i;
    throw ValidationError("unknown leaf label L" + std::to_string(label));
  }

  /// label -> vertex index (0 where absent), sized max label + 1.
  std::vector<std::size_t> leaf_index() const {
    Label max_label = 0;
    for (const auto& x : v_) max_label = std::max(max_label, x.label);
    std::vector<std::size_t> idx(static_cast<std::size_t>(max_label) + 1, 0);
    for (std::size_t i = 0; i < v_.size(); ++i)
      if (v_[i].label != 0) idx[v_[i].label] = i;
    return idx;
  }

  double height(Label label) const { return v_[leaf(label)].height; }

  std::size_t lca(std::size_t a, std::size_t b) const {
    while (a != b) {
      const double ha = v_[a].height, hb = v_[b].height;
      if (ha > hb) a = v_[a].parent;
      else if (hb > ha) b = v_[b].parent;
      else {
        a = v_[a].parent;
        b = v_[b].parent;
      }
      if (a == kNoVertex || b == kNoVertex) throw ValidationError("vertices in different trees");
    }
    return a;
  }

  double vertex_distance(std::size_t a, std::size_t b) const {
    return v_[a].height + v_[b].height - 2.0 * v_[lca(a, b)].height;
  }

  double distance(Label i, Label j) const { return vertex_distance(leaf(i), leaf(j)); }

  /// Combined height-error bound of d(L_i, L_j).
  double distance_error(Label i, Label j) const { return v_[leaf(i)].error + v_[leaf(j)].error; }

  /// Height of the branchpoint of L_i and L_j.
  double branch_height(Label i, Label j) const { return v_[lca(leaf(i), leaf(j))].height; }

  /// Pairwise leaf distances, rows and columns in increasing label order.
  std::vector<std::vector<double>> distance_matrix() const {
    const auto labs = labels();
    std::vector<std::size_t> pos(v_.size(), kNoVertex);
    for (std::size_t r = 0; r < labs.size(); ++r) pos[leaf(labs[r])] = r;
    std::vector<std::vector<double>> d(labs.size(), std::vector<double>(labs.size(), 0.0));
    // Post-order: each vertex pairs up leaves from different child subtrees.
    std::vector<std::vector<std::size_t>> below(v_.size());
    for (std::size_t u : postorder()) {
      auto& mine = below[u];
      if (v_[u].label != 0) mine.push_back(u);
      for (std::size_t c : v_[u].children) {
        for (std::size_t a : mine)
          for (std::size_t b : below[c]) {
            const double x = v_[a].height + v_[b].height - 2.0 * v_[u].height;
            d[pos[a]][pos[b]] = d[pos[b]][pos[a]] = x;
          }
        mine.insert(mine.end(), below[c].begin(), below[c].end());
        below[c].clear();
        below[c].shrink_to_fit();
      }
    }
    return d;
  }

  double total_length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < v_.size(); ++i) s += v_[i].length;
    return s;
  }

  /// Vertices with children before parents.
  std::vector<std::size_t> postorder() const {
    std::vector<std::size_t> out, stack{0};
    out.reserve(v_.size());
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      out.push_back(u);
      for (std::size_t c : v_[u].children) stack.push_back(c);
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  /// Vertices in planar depth-first order (children visited in stored order).
  std::vector<std::size_t> preorder() const {
    std::vector<std::size_t> out, stack{0};
    out.reserve(v_.size());
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      out.push_back(u);
      const auto& ch = v_[u].children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  /// Leaf labels in planar order.
  std::vector<Label> planar_leaves() const {
    std::vector<Label> out;
    for (std::size_t u : preorder())
      if (v_[u].label != 0) out.push_back(v_[u].label);
    return out;
  }

  /// Mass of the fragment represented by the edge into `u` at time t.
  double mass_at(std::size_t u, double t) const {
    const auto& segs = v_.at(u).mass;
    if (segs.empty()) throw ValidationError("edge carries no mass data");
    auto it = std::upper_bound(segs.begin(), segs.end(), t,
                               [](double x, const MassSegment& s) { return x < s.t0; });
    const MassSegment& s = it == segs.begin() ? segs.front() : *(it - 1);
    return decayed_mass(alpha, drift, s.t0, s.m0, std::min(t, s.freeze));
  }

  /// Throws ValidationError unless the structural invariants hold.
  void validate() const {
    if (v_[0].parent != kNoVertex) throw ValidationError("root has a parent");
    if (v_[0].children.size() != 1) throw ValidationError("root must have out-degree 1");
    std::vector<Label> seen;
    for (std::size_t i = 1; i < v_.size(); ++i) {
      const auto& x = v_[i];
      if (x.parent == kNoVertex || x.parent >= v_.size()) throw ValidationError("dangling vertex");
      if (!(x.length > 0.0)) throw ValidationError("edge lengths must be positive");
      if (x.children.empty() && x.label == 0) throw ValidationError("unlabeled leaf");
      if (x.label != 0) seen.push_back(x.label);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw ValidationError("duplicate leaf label");
  }

 private:
  std::vector<TreeVertex> v_;
};

namespace detail {

inline std::vector<Label> min_labels(const EdgeTree& t) {
  std::vector<Label> m(t.size(), std::numeric_limits<Label>::max());
  for (std::size_t u : t.postorder()) {
    if (t.vertex(u).label != 0) m[u] = t.vertex(u).label;
    for (std::size_t c : t.vertex(u).children) m[u] = std::min(m[u], m[c]);
  }
  return m;
}

inline bool same_subtree(const EdgeTree& a, std::size_t u, const std::vector<Label>& ma,
                         const EdgeTree& b, std::size_t w, const std::vector<Label>& mb) {
  const auto& x = a.vertex(u);
  const auto& y = b.vertex(w);
  if (x.height != y.height || x.length != y.length || x.label != y.label || x.error != y.error ||
      x.mass != y.mass || x.children.size() != y.children.size())
    return false;
  auto cx = x.children, cy = y.children;
  std::sort(cx.begin(), cx.end(), [&](std::size_t p, std::size_t q) { return ma[p] < ma[q]; });
  std::sort(cy.begin(), cy.end(), [&](std::size_t p, std::size_t q) { return mb[p] < mb[q]; });
  for (std::size_t i = 0; i < cx.size(); ++i)
    if (!same_subtree(a, cx[i], ma, b, cy[i], mb)) return false;
  return true;
}

}  // namespace detail

/// Structural equality up to vertex numbering and child order.
inline bool operator==(const EdgeTree& a, const EdgeTree& b) {
  if (a.size() != b.size() || a.alpha != b.alpha || a.drift != b.drift) return false;
  return detail::same_subtree(a, 0, detail::min_labels(a), b, 0, detail::min_labels(b));
}

/// Same shape, labels and edge lengths (heights and masses ignored).
inline bool same_shape_and_lengths(const EdgeTree& a, const EdgeTree& b) {
  if (a.size() != b.size()) return false;
  const auto ma = detail::min_labels(a), mb = detail::min_labels(b);
  std::function<bool(std::size_t, std::size_t)> rec = [&](std::size_t u, std::size_t w) {
    const auto& x = a.vertex(u);
    const auto& y = b.vertex(w);
    if (x.length != y.length || x.label != y.label || x.children.size() != y.children.size())
      return false;
    auto cx = x.children, cy = y.children;
    std::sort(cx.begin(), cx.end(), [&](std::size_t p, std::size_t q) { return ma[p] < ma[q]; });
    std::sort(cy.begin(), cy.end(), [&](std::size_t p, std::size_t q) { return mb[p] < mb[q]; });
    for (std::size_t i = 0; i < cx.size(); ++i)
      if (!rec(cx[i], cy[i])) return false;
    return true;
  };
  return rec(0, 0);
}

// ---------------------------------------------------------------------------
// MERGE and root-edge shortening

namespace detail {

inline void copy_subtree(const EdgeTree& src, std::size_t u, EdgeTree& dst, std::size_t parent,
                         double shift) {
  const auto& x = src.vertex(u);
  const std::size_t w = dst.add_child(parent, x.length, x.label);
  auto& y = dst.vertex_mut(w);
  y.height = x.height + shift;
  y.error = x.error;
  y.mass = x.mass;
  for (auto& s : y.mass) {
    s.t0 += shift;
    s.freeze += shift;
  }
  for (std::size_t c : x.children) copy_subtree(src, c, dst, w, shift);
}

}  // namespace detail

/// Roots of all trees merged into one vertex, which hangs from a new root
/// by an edge of length e. Heights shift by e.
inline EdgeTree merge(const std::vector<EdgeTree>& trees, double e) {
  if (trees.empty()) throw ValidationError("merge needs at least one tree");
  if (!(e > 0.0)) throw ValidationError("merge edge length must be positive");
  EdgeTree out;
  out.alpha = trees.front().alpha;
  out.drift = trees.front().drift;
  const std::size_t bullet = out.add_child(0, e);
  std::vector<Label> seen;
  for (const auto& t : trees) {
    for (Label l : t.labels()) seen.push_back(l);
    for (std::size_t c : t.vertex(0).children) detail::copy_subtree(t, c, out, bullet, e);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw ValidationError("merged trees share a leaf label");
  return out;
}

/// T - e: the root edge shortened by e (heights shift by -e).
inline EdgeTree shorten_root_edge(const EdgeTree& t, double e) {
  if (t.vertex(0).children.size() != 1) throw ValidationError("root must have out-degree 1");
  const std::size_t c = t.vertex(0).children[0];
  if (!(t.vertex(c).length > e)) throw ValidationError("root edge not longer than the shortening");
  EdgeTree out;
  out.alpha = t.alpha;
  out.drift = t.drift;
  detail::copy_subtree(t, c, out, 0, -e);
  out.vertex_mut(1).length = t.vertex(c).length - e;
  return out;
}

// ---------------------------------------------------------------------------
// R(k) from a trace

namespace detail {

inline MassSegment segment_of(const FragmentRecord& f) {
  return MassSegment{f.birth_time, f.birth_mass,
                     f.end == EndKind::Truncated ? f.end_time : kInf};
}

struct TreeBuilder {
  const FragmentationTrace& tr;
  EdgeTree& out;

  // Follows fragment f carrying labels B (ascending) until B splits or a
  // single label dies; hangs the result below vertex `parent`.
  void walk(std::int64_t f, std::vector<Label> B, std::size_t parent) {
    std::vector<MassSegment> segs;
    for (;;) {
      const auto& rec = tr.fragments[static_cast<std::size_t>(f)];
      segs.push_back(segment_of(rec));
      if (rec.end != EndKind::Split) {
        if (B.size() != 1) throw ValidationError("trace has no pair death time for a tagged block");
        const DeathTime& d = tr.death_times[B[0] - 1];
        if (!std::isfinite(d.value)) throw ValidationError("trace has no death time for a tagged label");
        const std::size_t leaf = out.add_child_at(parent, d.value, B[0]);
        auto& v = out.vertex_mut(leaf);
        v.error = d.error;
        v.mass = std::move(segs);
        if (!(v.length > 0.0)) throw ValidationError("non-positive leaf edge");
        return;
      }
      const auto& ev = tr.events[static_cast<std::size_t>(rec.split_event)];
      // Group B by child index, groups ordered by least label.
      std::vector<std::pair<std::uint32_t, Label>> idx;
      idx.reserve(B.size());
      for (Label l : B) {
        const auto j = FragmentationTrace::assigned_index(ev, l);
        if (!j) throw ValidationError("trace does not carry a tagged label");
        idx.emplace_back(*j, l);
      }
      bool one_group = true;
      for (const auto& p : idx)
        if (p.first != idx.front().first) one_group = false;
      if (one_group) {
        f = ev.children[idx.front().first];
        if (f == kNoFragment) throw ValidationError("tagged child missing from trace");
        continue;
      }
      const std::size_t branch = out.add_child_at(parent, ev.time);
      out.vertex_mut(branch).mass = std::move(segs);
      if (!(out.vertex(branch).length > 0.0)) throw ValidationError("non-positive edge");
      std::vector<std::uint32_t> order;
      std::vector<std::vector<Label>> groups(ev.split.size());
      for (const auto& [j, l] : idx) {
        if (groups[j].empty()) order.push_back(j);
        groups[j].push_back(l);
      }
      // idx is in increasing label order, so `order` lists groups by least element.
      for (std::uint32_t j : order) walk(ev.children[j], std::move(groups[j]), branch);
      return;
    }
  }
};

}  // namespace detail

/// R(k): the tree spanned by the root and leaves L_1..L_k of the trace.
inline EdgeTree build_marginal_tree(const FragmentationTrace& tr, std::size_t k) {
  if (k < 1 || k > tr.n) throw ValidationError("k must lie in 1..n");
  EdgeTree out;
  out.alpha = tr.alpha;
  out.drift = tr.drift;
  std::vector<Label> B(k);
  for (std::size_t i = 0; i < k; ++i) B[i] = static_cast<Label>(i + 1);
  detail::TreeBuilder{tr, out}.walk(0, std::move(B), 0);
  return out;
}

/// Subtree spanned by the root and the given leaves; unary non-root vertices
/// are suppressed and their mass paths concatenated.
inline EdgeTree spanned_subtree(const EdgeTree& t, std::vector<Label> leaves) {
  if (leaves.empty()) throw ValidationError("spanned subtree needs at least one leaf");
  std::sort(leaves.begin(), leaves.end());
  leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());
  std::vector<char> selected(t.size(), 0);
  for (Label l : leaves) selected[t.leaf(l)] = 1;
  std::vector<std::size_t> count(t.size(), 0);
  for (std::size_t u : t.postorder()) {
    count[u] = selected[u];
    for (std::size_t c : t.vertex(u).children) count[u] += count[c];
  }
  EdgeTree out;
  out.alpha = t.alpha;
  out.drift = t.drift;
  // (vertex, new parent, mass segments accumulated since the last kept vertex)
  struct Item {
    std::size_t u;
    std::size_t parent;
    std::vector<MassSegment> segs;
  };
  std::vector<Item> stack;
  for (auto it = t.vertex(0).children.rbegin(); it != t.vertex(0).children.rend(); ++it)
    if (count[*it] > 0) stack.push_back({*it, 0, {}});
  while (!stack.empty()) {
    Item it = std::move(stack.back());
    stack.pop_back();
    const auto& x = t.vertex(it.u);
    it.segs.insert(it.segs.end(), x.mass.begin(), x.mass.end());
    std::size_t live_children = 0;
    for (std::size_t c : x.children)
      if (count[c] > 0) ++live_children;
    const bool keep = selected[it.u] || live_children >= 2;
    std::size_t parent = it.parent;
    if (keep) {
      parent = out.add_child_at(it.parent, x.height, selected[it.u] ? x.label : 0);
      auto& y = out.vertex_mut(parent);
      y.error = x.error;
      y.mass = std::move(it.segs);
      it.segs.clear();
    }
    for (auto c = x.children.rbegin(); c != x.children.rend(); ++c)
      if (count[*c] > 0) stack.push_back({*c, parent, keep ? std::vector<MassSegment>{} : it.segs});
  }
  return out;
}

/// Adds leaf L_{k+1} to R(k) by branching a segment of length
/// D_{k+1} - max_j D_{j,k+1} off the path to the maximising leaf.
inline EdgeTree stick_breaking_extend(const EdgeTree& t, const FragmentationTrace& tr, Label new_label) {
  const auto labs = t.labels();
  const std::size_t k = labs.size();
  for (std::size_t i = 0; i < k; ++i)
    if (labs[i] != i + 1) throw ValidationError("tree leaves must be L_1..L_k");
  if (new_label != k + 1 || new_label > tr.n) throw ValidationError("new label must be k+1 <= n");
  const DeathTime d = tr.death_times[new_label - 1];
  if (!std::isfinite(d.value)) throw ValidationError("trace has no death time for the new label");
  double h = -kInf;
  Label best = 0;
  for (Label j = 1; j <= k; ++j) {
    const double x = tr.pair_death(j, new_label);
    if (x > h) {
      h = x;
      best = j;
    }
  }
  if (!(d.value > h)) throw ValidationError("inconsistent trace: death before separation");
  EdgeTree out = t;
  // Find the attachment point on the root -> L_best path.
  std::size_t c = out.leaf(best);
  if (!(out.vertex(c).height > h)) throw ValidationError("inconsistent trace: separation after death");
  while (out.vertex(out.vertex(c).parent).height > h) c = out.vertex(c).parent;
  const std::size_t p = out.vertex(c).parent;
  std::size_t attach;
  if (out.vertex(p).height == h && p != 0) {
    attach = p;
  } else {
    if (!(out.vertex(p).height < h)) throw ValidationError("inconsistent trace: attachment at the root");
    // Subdivide edge (p, c) at height h.
    attach = out.add_child_at(p, h);
    auto& pc = out.vertex_mut(p).children;
    pc.pop_back();
    *std::find(pc.begin(), pc.end(), c) = attach;
    auto& w = out.vertex_mut(attach);
    auto& cv = out.vertex_mut(c);
    w.children.push_back(c);
    const auto split = std::lower_bound(cv.mass.begin(), cv.mass.end(), h,
                                        [](const MassSegment& s, double x) { return s.t0 < x; });
    out.vertex_mut(attach).mass.assign(out.vertex(c).mass.begin(),
                                       out.vertex(c).mass.begin() + (split - cv.mass.begin()));
    auto& cv2 = out.vertex_mut(c);
    cv2.mass.erase(cv2.mass.begin(), cv2.mass.begin() + (split - cv2.mass.begin()));
    cv2.parent = attach;
    cv2.length = cv2.height - h;
  }
  const std::size_t leaf = out.add_child_at(attach, d.value, new_label);
  auto& lv = out.vertex_mut(leaf);
  lv.error = d.error;
  // Mass path of the new label from the separation time on.
  std::int64_t f = 0;
  for (;;) {
    const auto& rec = tr.fragments[static_cast<std::size_t>(f)];
    if (rec.birth_time >= h) lv.mass.push_back(detail::segment_of(rec));
    if (rec.end != EndKind::Split) break;
    const auto& ev = tr.events[static_cast<std::size_t>(rec.split_event)];
    const auto j = FragmentationTrace::assigned_index(ev, new_label);
    if (!j) throw ValidationError("trace does not carry the new label");
    f = ev.children[*j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text formats

namespace detail {

inline std::string real17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void newick_rec(const EdgeTree& t, std::size_t u, std::string& out) {
  const auto& x = t.vertex(u);
  if (!x.children.empty()) {
    out += '(';
    for (std::size_t i = 0; i < x.children.size(); ++i) {
      if (i) out += ',';
      newick_rec(t, x.children[i], out);
    }
    out += ')';
  }
  if (x.label != 0) out += "L" + std::to_string(x.label);
  if (u == 0) {
    out += "root";
  } else {
    out += ':';
    out += real17(x.length);
  }
}

class NewickParser {
 public:
  explicit NewickParser(const std::string& s) : s_(s) {}

  EdgeTree parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty input");
    EdgeTree t;
    if (peek() != '(') fail("expected '('");
    parse_children(t, 0);
    const std::string name = parse_name();
    if (!name.empty() && name != "root") fail("root must be unnamed or 'root'");
    skip_ws();
    if (peek() == ':') fail("root carries no edge length");
    expect(';');
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return t;
  }

 private:
  void parse_children(EdgeTree& t, std::size_t parent) {
    expect('(');
    for (;;) {
      parse_subtree(t, parent);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      return;
    }
  }

  void parse_subtree(EdgeTree& t, std::size_t parent) {
    skip_ws();
    const std::size_t start = pos_;
    if (peek() == '(') {
      // Parse children into a scratch tree first: the edge length follows.
      EdgeTree sub;
      parse_children(sub, 0);
      const std::string name = parse_name();
      const double len = parse_length();
      const std::size_t u = t.add_child(parent, len, name.empty() ? 0 : label_of(name, start));
      for (std::size_t c : sub.vertex(0).children) graft(sub, c, t, u);
    } else {
      const std::string name = parse_name();
      if (name.empty()) fail("expected a leaf name");
      const double len = parse_length();
      t.add_child(parent, len, label_of(name, start));
    }
  }

  static void graft(const EdgeTree& src, std::size_t u, EdgeTree& dst, std::size_t parent) {
    const auto& x = src.vertex(u);
    const std::size_t w = dst.add_child(parent, x.length, x.label);
    for (std::size_t c : x.children) graft(src, c, dst, w);
  }

  Label label_of(const std::string& name, std::size_t at) {
    if (name.size() < 2 || name[0] != 'L') {
      pos_ = at;
      fail("leaf names must be L<integer>");
    }
    for (std::size_t i = 1; i < name.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) {
        pos_ = at;
        fail("leaf names must be L<integer>");
      }
    const unsigned long v = std::strtoul(name.c_str() + 1, nullptr, 10);
    if (v == 0 || v > std::numeric_limits<Label>::max()) {
      pos_ = at;
      fail("leaf label out of range");
    }
    return static_cast<Label>(v);
  }

  std::string parse_name() {
    skip_ws();
    const std::size_t a = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    return s_.substr(a, pos_ - a);
  }

  double parse_length() {
    skip_ws();
    expect(':');
    skip_ws();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a branch length");
    pos_ += static_cast<std::size_t>(end - begin);
    if (!(v > 0.0) || !std::isfinite(v)) fail("branch lengths must be positive");
    return v;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("newick: " + msg, pos_); }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Nested-parenthesis text, e.g. "(L1:0.5)root;". Branch lengths use 17
/// significant digits.
inline std::string to_newick(const EdgeTree& t) {
  std::string out;
  detail::newick_rec(t, 0, out);
  out += ';';
  return out;
}

/// Inverse of to_newick. Edge lengths are exact; heights are recomputed as
/// sums of lengths from the root.
inline EdgeTree from_newick(const std::string& text) { return detail::NewickParser(text).parse(); }

/// Structured export with heights, lengths, errors and mass paths; a reload
/// reproduces the tree bit for bit.
inline nlohmann::json tree_to_json(const EdgeTree& t) {
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& x : t.vertices()) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& s : x.mass)
      m.push_back({s.t0, s.m0, std::isfinite(s.freeze) ? nlohmann::json(s.freeze) : nlohmann::json()});
    vs.push_back({{"parent", x.parent == kNoVertex ? -1 : static_cast<std::int64_t>(x.parent)},
                  {"children", x.children},
                  {"height", x.height},
                  {"length", x.length},
                  {"label", x.label},
                  {"error", x.error},
                  {"mass", m}});
  }
  return {{"alpha", t.alpha}, {"drift", t.drift}, {"vertices", vs}};
}

inline EdgeTree tree_from_json(const nlohmann::json& j) {
  try {
    EdgeTree t;
    t.alpha = j.at("alpha").get<double>();
    t.drift = j.at("drift").get<double>();
    const auto& vs = j.at("vertices");
    if (vs.empty()) throw ValidationError("tree has no vertices");
    for (std::size_t i = 1; i < vs.size(); ++i) {
      const auto p = vs[i].at("parent").get<std::int64_t>();
      if (p < 0 || static_cast<std::size_t>(p) >= i)
        throw ValidationError("vertices must follow their parents");
      t.add_child(static_cast<std::size_t>(p), 1.0);
    }
    for (std::size_t i = 0; i < vs.size(); ++i) {
      auto& x = t.vertex_mut(i);
      x.children = vs[i].at("children").get<std::vector<std::size_t>>();
      x.height = vs[i].at("height").get<double>();
      x.length = vs[i].at("length").get<double>();
      x.label = vs[i].at("label").get<Label>();
      x.error = vs[i].at("error").get<double>();
      x.mass.clear();
      for (const auto& s : vs[i].at("mass"))
        x.mass.push_back(MassSegment{s.at(0).get<double>(), s.at(1).get<double>(),
                                     s.at(2).is_null() ? kInf : s.at(2).get<double>()});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tree json: ") + e.what());
  }
}

inline std::string tree_to_json_string(const EdgeTree& t) { return tree_to_json(t).dump(); }

inline EdgeTree tree_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("tree json: ") + e.what(), e.byte);
  }
  return tree_from_json(j);
}

}  // namespace fragtree
