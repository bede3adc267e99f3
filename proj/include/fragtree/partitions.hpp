#pragma once

// Exchangeable-partition primitives: ranked mass sequences, partitions of
// {1..n} indexed by least element, paintbox sampling, restriction,
// intersection and size-biased selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fragtree/errors.hpp"
#include "fragtree/rng.hpp"

namespace fragtree {

inline constexpr double kMassSlack = 1e-12;
inline constexpr double kConservationTol = 1e-9;

/// Non-increasing sequence of masses in (0,1] with sum at most 1 (implicit
/// zero tail). Zeros are stripped on construction.
class RankedMassSequence {
 public:
  RankedMassSequence() = default;

  /// Validates and stores `masses`. Throws ValidationError unless the input
  /// is non-increasing, non-negative and sums to at most 1 + 1e-12.
  explicit RankedMassSequence(std::vector<double> masses) : masses_(std::move(masses)) {
    while (!masses_.empty() && masses_.back() == 0.0) masses_.pop_back();
    double total = 0.0;
    for (std::size_t i = 0; i < masses_.size(); ++i) {
      const double m = masses_[i];
      if (!(m > 0.0) || m > 1.0 + kMassSlack || !std::isfinite(m))
        throw ValidationError("ranked masses must lie in (0,1]");
      if (i > 0 && m > masses_[i - 1])
        throw ValidationError("ranked masses must be non-increasing");
      total += m;
    }
    if (total > 1.0 + kMassSlack) throw ValidationError("ranked masses sum to more than 1");
    sum_ = total;
  }

  /// Sorts (descending) then validates.
  static RankedMassSequence from_unsorted(std::vector<double> masses) {
    std::sort(masses.begin(), masses.end(), std::greater<>());
    return RankedMassSequence(std::move(masses));
  }

  const std::vector<double>& masses() const noexcept { return masses_; }
  std::span<const double> view() const noexcept { return masses_; }
  std::size_t size() const noexcept { return masses_.size(); }
  bool empty() const noexcept { return masses_.empty(); }
  double operator[](std::size_t i) const noexcept { return i < masses_.size() ? masses_[i] : 0.0; }
  double sum() const noexcept { return sum_; }
  bool is_conservative(double tol = kConservationTol) const noexcept {
    return std::abs(sum_ - 1.0) <= tol;
  }

  friend bool operator==(const RankedMassSequence&, const RankedMassSequence&) = default;

 private:
  std::vector<double> masses_;
  double sum_ = 0.0;
};

/// Paint one integer: returns the colour index j with probability s[j], or
/// nullopt (colourless, probability 1 - sum s) for dust-producing sequences.
/// With `conservative` set, rounding leftovers go to the last colour.
inline std::optional<std::size_t> paint(std::span<const double> s, Rng& rng,
                                        bool conservative = false) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    acc += s[j];
    if (u < acc) return j;
  }
  if (conservative && !s.empty()) return s.size() - 1;
  return std::nullopt;
}

/// Partition of {1..n}. Each block is identified by its least element.
class RestrictedPartition {
 public:
  RestrictedPartition() = default;

  /// All-singletons partition of {1..n}.
  static RestrictedPartition singletons(std::size_t n) {
    RestrictedPartition p;
    p.block_.resize(n);
    std::iota(p.block_.begin(), p.block_.end(), std::size_t{1});
    return p;
  }

  static RestrictedPartition one_block(std::size_t n) {
    RestrictedPartition p;
    p.block_.assign(n, 1);
    return p;
  }

  /// Builds from an arbitrary labelling key[i-1] of each integer; integers
  /// with equal keys share a block.
  template <typename Key>
  static RestrictedPartition from_keys(const std::vector<Key>& key) {
    RestrictedPartition p;
    p.block_.resize(key.size());
    std::map<Key, std::size_t> first;
    for (std::size_t i = 0; i < key.size(); ++i) {
      auto [it, inserted] = first.emplace(key[i], i + 1);
      p.block_[i] = it->second;
    }
    return p;
  }

  /// Builds from explicit blocks of 1-based labels. Throws unless the blocks
  /// partition {1..n}.
  static RestrictedPartition from_blocks(std::size_t n,
                                         const std::vector<std::vector<std::size_t>>& blocks) {
    std::vector<std::size_t> key(n, 0);
    std::size_t tag = 0;
    for (const auto& b : blocks) {
      if (b.empty()) throw ValidationError("empty block");
      ++tag;
      for (std::size_t i : b) {
        if (i < 1 || i > n) throw ValidationError("block label out of range");
        if (key[i - 1] != 0) throw ValidationError("label appears in two blocks");
        key[i - 1] = tag;
      }
    }
    if (std::find(key.begin(), key.end(), 0) != key.end())
      throw ValidationError("blocks do not cover the ground set");
    return from_keys(key);
  }

  std::size_t n() const noexcept { return block_.size(); }

  /// Least element of the block containing i (1-based).
  std::size_t block_of(std::size_t i) const {
    if (i < 1 || i > block_.size()) throw ValidationError("label out of range");
    return block_[i - 1];
  }

  bool same_block(std::size_t i, std::size_t j) const { return block_of(i) == block_of(j); }

  std::size_t block_count() const noexcept {
    std::size_t c = 0;
    for (std::size_t i = 0; i < block_.size(); ++i)
      if (block_[i] == i + 1) ++c;
    return c;
  }

  /// Blocks in increasing order of least element, members ascending.
  std::vector<std::vector<std::size_t>> blocks() const {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> slot(block_.size() + 1, 0);
    for (std::size_t i = 1; i <= block_.size(); ++i) {
      const std::size_t b = block_[i - 1];
      if (b == i) {
        slot[i] = out.size();
        out.emplace_back();
      }
      out[slot[b]].push_back(i);
    }
    return out;
  }

  const std::vector<std::size_t>& raw() const noexcept { return block_; }

  friend bool operator==(const RestrictedPartition&, const RestrictedPartition&) = default;

 private:
  std::vector<std::size_t> block_;
};

/// s-paintbox restricted to {1..n}: integers coloured independently with
/// probabilities s_j; colourless integers become singletons.
inline RestrictedPartition paintbox_restricted(const RankedMassSequence& s, std::size_t n,
                                               Rng& rng) {
  if (n == 0) throw ValidationError("paintbox needs n >= 1");
  // key: colour index, or n_colours + i for a colourless integer i.
  std::vector<std::size_t> key(n);
  const std::size_t colours = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto c = paint(s.view(), rng);
    key[i] = c ? *c : colours + i;
  }
  return RestrictedPartition::from_keys(key);
}

/// Restriction to B, renumbered so the surviving labels become 1..|B| in
/// increasing order of their original value.
inline RestrictedPartition restrict(const RestrictedPartition& p, std::vector<std::size_t> subset) {
  if (subset.empty()) throw ValidationError("restriction to an empty set");
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  std::vector<std::size_t> key;
  key.reserve(subset.size());
  for (std::size_t i : subset) key.push_back(p.block_of(i));
  return RestrictedPartition::from_keys(key);
}

/// Coarsest common refinement: i ~ j iff i ~ j in both.
inline RestrictedPartition intersect(const RestrictedPartition& a, const RestrictedPartition& b) {
  if (a.n() != b.n()) throw ValidationError("intersect: ground sets differ");
  std::vector<std::pair<std::size_t, std::size_t>> key(a.n());
  for (std::size_t i = 1; i <= a.n(); ++i) key[i - 1] = {a.block_of(i), b.block_of(i)};
  return RestrictedPartition::from_keys(key);
}

/// Index k with probability freqs[k] / sum(freqs).
inline std::size_t size_biased_block(std::span<const double> freqs, Rng& rng) {
  double total = 0.0;
  for (double f : freqs) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("block masses must be >= 0");
    total += f;
  }
  if (!(total > 0.0)) throw ValidationError("size-biased pick needs a positive mass");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    if (freqs[k] <= 0.0) continue;
    last_positive = k;
    acc += freqs[k];
    if (u < acc) return k;
  }
  return last_positive;
}

}  // namespace fragtree
