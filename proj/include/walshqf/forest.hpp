#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/packets.hpp"
#include "walshqf/step_function.hpp"

namespace walshqf {

/// A set of bitiles with a designated top; every member lies below the top.
class Tree {
 public:
  Tree() = default;
  Tree(Bitile top, BitileSet members) : top_(top), members_(std::move(members)) {
    if (!members_.contains(top_)) {
      throw PreconditionFailed("tree top " + top_.to_string() + " is not a member");
    }
    for (const Bitile& p : members_) {
      if (!rect_le(p, top_)) {
        throw PreconditionFailed("member " + p.to_string() + " is not below the top " +
                                 top_.to_string());
      }
    }
  }

  /// Builds a tree from members, taking the unique maximal element as top.
  static Tree from_members(const BitileSet& members) {
    std::optional<Bitile> top;
    for (const Bitile& p : members) {
      if (std::all_of(members.begin(), members.end(), [&](const Bitile& q) { return rect_le(q, p); })) {
        top = p;
        break;
      }
    }
    if (!top) throw PreconditionFailed("collection has no unique maximal element");
    return Tree(*top, members);
  }

  const Bitile& top() const { return top_; }
  const BitileSet& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  const DyadicInterval& time() const { return top_.time(); }
  bool is_convex() const { return walshqf::is_convex(members_); }

 private:
  Bitile top_;
  BitileSet members_;
};

struct Forest {
  std::vector<Tree> trees;
  int level = 0;
};

struct TreeSplit {
  Bitile top;
  BitileSet upper;  ///< T_u: w_T inside the upper half of w_P
  BitileSet lower;  ///< T_d: w_T inside the lower half of w_P
};

/// T = {P_T} + T_u + T_d.
inline TreeSplit tree_split(const Tree& t) {
  TreeSplit out{t.top(), {}, {}};
  const DyadicInterval& wt = t.top().freq();
  for (const Bitile& p : t.members()) {
    if (p == t.top()) continue;
    if (lower(p).freq().contains(wt)) out.lower.insert(p);
    else if (upper(p).freq().contains(wt)) out.upper.insert(p);
    else throw PreconditionFailed("member " + p.to_string() + " is in neither half of the tree");
  }
  return out;
}

/// Tiling of the union of a tree: both tiles of P_T, the lower tiles of T_u
/// and the upper tiles of T_d.
inline std::vector<Tile> tree_tiling(const Tree& t) {
  const TreeSplit s = tree_split(t);
  std::vector<Tile> out{upper(s.top), lower(s.top)};
  for (const Bitile& p : sorted(s.upper)) out.push_back(lower(p));
  for (const Bitile& p : sorted(s.lower)) out.push_back(upper(p));
  return out;
}

/// The enlarged tree T^(L): bitiles whose frequency interval contains 2^L xi
/// and which lie in 2^L P' for some P' in T. xi defaults to the left
/// endpoint of w_T.
inline Tree enlarged_tree(const Tree& t, int L, const TileUniverse& universe,
                          std::optional<DyadicRational> xi = std::nullopt) {
  if (L < 0) throw PreconditionFailed("L must be non-negative");
  const DyadicRational point = xi.value_or(t.top().freq().left());
  if (point < t.top().freq().left() || point >= t.top().freq().right()) {
    throw PreconditionFailed("xi must lie in the top frequency interval");
  }
  const DyadicRational dilated = point.shifted(L);
  BitileSet members;
  for (const Bitile& q : t.members()) {
    if (!universe.contains(q)) throw OutsideUniverse("tree member outside the universe");
    const int kq = q.scale();
    for (int k = kq - L; k <= kq; ++k) {
      // frequency interval of width 2^(1-k) holding 2^L xi
      const std::int64_t l = dilated.shifted(k - 1).floor().convert_to<std::int64_t>();
      const std::int64_t count = std::int64_t{1} << (kq - k);
      const std::int64_t first = q.time().position << (kq - k);
      for (std::int64_t i = 0; i < count; ++i) members.insert(Bitile(k, first + i, l));
    }
  }
  const std::int64_t ltop = dilated.shifted(t.top().scale() - 1).floor().convert_to<std::int64_t>();
  return Tree(Bitile(t.top().scale(), t.top().time().position, ltop), std::move(members));
}

/// {P' in S : P' <= P}, enumerated from the scale lattice below P.
inline BitileSet down_set(const BitileSet& s, const Bitile& p, int min_scale) {
  BitileSet out;
  for (int k = min_scale; k <= p.scale(); ++k) {
    const DyadicInterval freq = p.freq().ancestor(1 - k);
    const std::int64_t count = std::int64_t{1} << (p.scale() - k);
    const std::int64_t first = p.time().position << (p.scale() - k);
    for (std::int64_t i = 0; i < count; ++i) {
      const Bitile q(Rect{{k, first + i}, freq});
      if (s.contains(q)) out.insert(q);
    }
  }
  return out;
}

inline int min_scale(const BitileSet& s) {
  int m = std::numeric_limits<int>::max();
  for (const Bitile& p : s) m = std::min(m, p.scale());
  return m;
}

/// Per-function memo of ||Pi_{2^L p} f||^2 for tiles p.
///
/// The union of T^(L) equals the dilation 2^L of the union of T (the finest
/// bitiles of T^(L) inside each 2^L P' already fill it), so the enlarged
/// projection norm is a sum of these energies over any tiling of T.
class DilatedEnergy {
 public:
  DilatedEnergy(const StepFunction& f, int L) : table_(f), L_(L) {
    if (L < 0) throw PreconditionFailed("L must be non-negative");
  }

  int L() const { return L_; }

  const DyadicRational& operator()(const Tile& p) {
    auto it = memo_.find(p);
    if (it != memo_.end()) return it->second;
    return memo_.emplace(p, table_.rect_energy(dilate(p.rect(), L_))).first->second;
  }

  /// ||Pi_{T^(L)} f||^2.
  DyadicRational tree_energy(const Tree& t) {
    DyadicAccumulator acc;
    for (const Tile& p : tree_tiling(t)) acc.add((*this)(p));
    return acc.value();
  }

  const PacketTable& table() const { return table_; }

 private:
  PacketTable table_;
  int L_;
  std::unordered_map<Tile, DyadicRational, RectHash> memo_;
};

/// size^(L)(S, f)^2 = max over P in S of |I_P|^-1 ||Pi_{(T_P)^(L)} f||^2,
/// T_P the down-set of P in S. Zero for an empty collection.
inline DyadicRational size_sq(const BitileSet& s, DilatedEnergy& energy) {
  DyadicRational best;
  if (s.empty()) return best;
  const int lo = min_scale(s);
  for (const Bitile& p : s) {
    const Tree t(p, down_set(s, p, lo));
    const DyadicRational v = energy.tree_energy(t).shifted(-p.scale());
    if (v > best) best = v;
  }
  return best;
}

inline DyadicRational size_sq(const BitileSet& s, const StepFunction& f, int L) {
  if (!is_convex(s)) throw PreconditionFailed("size requires a convex collection");
  DilatedEnergy energy(f, L);
  return size_sq(s, energy);
}

/// sum_T 1_{I_T} at the given resolution.
inline StepFunction counting_function(const Forest& forest, int resolution, int support) {
  StepFunction g(resolution, support);
  for (const Tree& t : forest.trees) g.add_on(t.time(), DyadicRational(1));
  return g;
}

/// sup over dyadic J in [0,2^M) of |J|^-1 int_J |g - avg_J g|.
inline DyadicRational dyadic_bmo_norm(const StepFunction& g) {
  DyadicRational best;
  const int depth = g.resolution() + g.support();
  for (int level = 0; level <= depth; ++level) {
    const std::size_t width = std::size_t{1} << level;
    for (std::size_t first = 0; first < g.size(); first += width) {
      DyadicAccumulator sum;
      for (std::size_t i = 0; i < width; ++i) sum.add(g[first + i]);
      const DyadicRational avg = sum.value().shifted(-level);
      DyadicAccumulator dev;
      for (std::size_t i = 0; i < width; ++i) dev.add((g[first + i] - avg).abs());
      const DyadicRational osc = dev.value().shifted(-level);
      if (osc > best) best = osc;
    }
  }
  return best;
}

}  // namespace walshqf
