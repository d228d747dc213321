#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include <boost/rational.hpp>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"
#include "walshqf/forest.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/packets.hpp"
#include "walshqf/step_function.hpp"

namespace walshqf {

using Rational = boost::rational<long long>;

// ---------------------------------------------------------------------------
// Tree selection
// ---------------------------------------------------------------------------

enum class SelectionPhase { single_bitile = 1, upper = 2, lower = 3 };

struct Selection {
  Forest forest;
  std::vector<SelectionPhase> phases;  ///< parallel to forest.trees
  BitileSet remainder;
};

/// Tie-break orders for phases 2 and 3. `standard` is the documented
/// default; `alternate` exists so tests can check the lemma is insensitive.
enum class TieBreak { standard, alternate };

namespace detail {

/// sum over the members Q != P of the down-set of P with w_P inside the
/// `upper` (or lower) half of w_Q, of the energy of Q's other half.
inline DyadicRational half_tree_energy(const BitileSet& s, const Bitile& p, int lo, bool upper_tree,
                                       DilatedEnergy& energy) {
  DyadicAccumulator acc;
  for (int k = lo; k < p.scale(); ++k) {
    const DyadicInterval freq = p.freq().ancestor(1 - k);
    // child index of w_P's ancestor one step below w_Q
    const bool in_upper = (p.freq().ancestor(-k).position & 1) != 0;
    if (in_upper != upper_tree) continue;
    const std::int64_t count = std::int64_t{1} << (p.scale() - k);
    const std::int64_t first = p.time().position << (p.scale() - k);
    for (std::int64_t i = 0; i < count; ++i) {
      const Bitile q(Rect{{k, first + i}, freq});
      if (!s.contains(q)) continue;
      acc.add(energy(upper_tree ? lower(q) : upper(q)));
    }
  }
  return acc.value();
}

inline void remove_all(BitileSet& s, const BitileSet& t) {
  for (const Bitile& p : t) s.erase(p);
}

}  // namespace detail

/// Splits a convex collection with size^(L)(P,f)^2 <= 2^-2k into trees and
/// a convex remainder with size^(L)^2 <= 2^-2(k+1), following the three
/// phases of the selection lemma.
inline Selection select_trees(const BitileSet& collection, DilatedEnergy& energy, int k,
                              TieBreak tie = TieBreak::standard, bool check_precondition = true) {
  if (!is_convex(collection)) throw PreconditionFailed("tree selection needs a convex collection");
  const DyadicRational bound = DyadicRational::pow2(-2LL * k);
  if (check_precondition && size_sq(collection, energy) > bound) {
    throw PreconditionFailed("size^(L)(P,f)^2 exceeds 2^-2k at k=" + std::to_string(k));
  }
  Selection out;
  out.forest.level = k;
  out.remainder = collection;
  BitileSet& s = out.remainder;
  if (s.empty()) return out;
  const int lo = min_scale(s);

  auto take = [&](const Bitile& top, SelectionPhase phase) {
    Tree t(top, down_set(s, top, lo));
    detail::remove_all(s, t.members());
    out.forest.trees.push_back(std::move(t));
    out.phases.push_back(phase);
  };

  // Phase 1: |I_P|^-1 ||Pi_{2^L P} f||^2 > 2^-8 2^-2k. Longest I_P first.
  {
    std::vector<Bitile> violators;
    for (const Bitile& p : s) {
      const DyadicRational e = (energy(upper(p)) + energy(lower(p))).shifted(-p.scale());
      if (e > DyadicRational::pow2(-8 - 2LL * k)) violators.push_back(p);
    }
    std::sort(violators.begin(), violators.end(), [](const Bitile& a, const Bitile& b) {
      if (a.scale() != b.scale()) return a.scale() > b.scale();
      if (a.time().position != b.time().position) return a.time().position < b.time().position;
      return a.freq().position < b.freq().position;
    });
    for (const Bitile& p : violators) {
      if (s.contains(p)) take(p, SelectionPhase::single_bitile);
    }
  }

  // Phases 2 and 3: trees T_P whose upper (lower) part carries more than
  // 2^-4 2^-2k |I_T| of dilated energy in the opposite tiles.
  for (const bool upper_tree : {true, false}) {
    const DyadicRational threshold = DyadicRational::pow2(-4 - 2LL * k);
    while (true) {
      std::optional<Bitile> best;
      auto better = [&](const Bitile& a, const Bitile& b) {
        // Phase 2 wants the smallest left endpoint of w_P, phase 3 the
        // largest right endpoint.
        if (upper_tree) {
          const auto la = a.freq().left(), lb = b.freq().left();
          if (la != lb) return la < lb;
        } else {
          const auto ra = a.freq().right(), rb = b.freq().right();
          if (ra != rb) return ra > rb;
        }
        if (tie == TieBreak::alternate) {
          if (a.scale() != b.scale()) return a.scale() < b.scale();
          return a.time().position > b.time().position;
        }
        if (a.scale() != b.scale()) return a.scale() > b.scale();
        return a.time().position < b.time().position;
      };
      for (const Bitile& p : s) {
        if (best && !better(p, *best)) continue;
        const DyadicRational v = detail::half_tree_energy(s, p, lo, upper_tree, energy);
        if (v > threshold * p.time().length()) best = p;
      }
      if (!best) break;
      take(*best, upper_tree ? SelectionPhase::upper : SelectionPhase::lower);
    }
  }

  const DyadicRational after = size_sq(s, energy);
  if (after > DyadicRational::pow2(-2LL * (k + 1))) {
    throw InvariantViolated("remainder size^2 " + after.to_string() + " exceeds 2^-2(k+1) at k=" +
                            std::to_string(k));
  }
  return out;
}

inline Selection select_trees(const BitileSet& collection, const StepFunction& f, int k, int L,
                              TieBreak tie = TieBreak::standard) {
  DilatedEnergy energy(f, L);
  return select_trees(collection, energy, k, tie);
}

// ---------------------------------------------------------------------------
// Iterated decomposition
// ---------------------------------------------------------------------------

struct DecompositionLevel {
  int k = 0;
  Forest forest;
  std::vector<SelectionPhase> phases;
  BitileSet remainder;
};

struct DecompositionTrace {
  BitileSet initial;
  int L = 0;
  std::vector<DecompositionLevel> levels;

  const BitileSet& final_remainder() const {
    return levels.empty() ? initial : levels.back().remainder;
  }
};

/// Largest k with s <= 2^-2k, for s > 0.
inline int size_level(const DyadicRational& s) {
  if (s.is_zero()) throw PreconditionFailed("size level of zero is unbounded");
  // s = m 2^e with m odd: the largest k with s <= 2^-2k
  const long long bits = static_cast<long long>(boost::multiprecision::msb(boost::multiprecision::abs(s.mantissa())));
  long long k = -(bits + s.exponent() + 1) / 2 - 1;
  while (s <= DyadicRational::pow2(-2 * (k + 1))) ++k;
  while (s > DyadicRational::pow2(-2 * k)) --k;
  return static_cast<int>(k);
}

/// Repeated tree selection from the tightest level k0 (largest k with
/// size^2 <= 2^-2k) through k_max, stopping early once nothing remains.
inline DecompositionTrace full_decomposition(const BitileSet& collection, const StepFunction& f, int L,
                                             int k_max, TieBreak tie = TieBreak::standard) {
  if (!is_convex(collection)) throw PreconditionFailed("decomposition needs a convex collection");
  DilatedEnergy energy(f, L);
  DecompositionTrace trace;
  trace.initial = collection;
  trace.L = L;
  const DyadicRational s0 = size_sq(collection, energy);
  if (s0.is_zero()) {
    trace.levels.push_back({k_max, Forest{{}, k_max}, {}, collection});
    return trace;
  }
  BitileSet current = collection;
  for (int k = std::min(size_level(s0), k_max); k <= k_max && !current.empty(); ++k) {
    Selection sel = select_trees(current, energy, k, tie, /*check_precondition=*/false);
    current = sel.remainder;
    trace.levels.push_back({k, std::move(sel.forest), std::move(sel.phases), std::move(sel.remainder)});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Maximal functions and exceptional sets
// ---------------------------------------------------------------------------

namespace detail {

/// Exact n-th root of a non-negative dyadic rational, if it is one.
inline std::optional<DyadicRational> exact_root(const DyadicRational& v, unsigned n) {
  if (v.sign() < 0) return std::nullopt;
  if (v.is_zero() || n == 1) return v;
  if (v.exponent() % static_cast<int>(n) != 0) return std::nullopt;
  const BigInt& m = v.mantissa();
  // integer root by bisection on [0, 2^(bits/n + 1)]
  const unsigned bits = boost::multiprecision::msb(m) + 1;
  BigInt lo = 0, hi = BigInt(1) << (bits / n + 1);
  while (lo < hi) {
    BigInt mid = (lo + hi + 1) >> 1;
    if (boost::multiprecision::pow(mid, n) <= m) lo = mid;
    else hi = mid - 1;
  }
  if (boost::multiprecision::pow(lo, n) != m) return std::nullopt;
  return DyadicRational(lo, v.exponent() / static_cast<int>(n));
}

}  // namespace detail

/// (M(|f|^q))(x) = sup over dyadic J in [0,2^M) containing x of avg_J |f|^q.
/// Larger J only lower the average, since f vanishes beyond 2^M.
inline StepFunction dyadic_maximal_pow(const StepFunction& f, long long q_num, long long q_den) {
  if (q_num <= 0 || q_den <= 0) throw PreconditionFailed("maximal-function exponent must be positive");
  const Rational q(q_num, q_den);
  StepFunction powered(f.resolution(), f.support());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const DyadicRational a = f[i].abs().pow(static_cast<unsigned>(q.numerator()));
    const auto root = detail::exact_root(a, static_cast<unsigned>(q.denominator()));
    if (!root) throw PreconditionFailed("|f|^q is not dyadic at cell " + std::to_string(i));
    powered[i] = *root;
  }
  StepFunction out = powered;
  const int depth = f.resolution() + f.support();
  for (int level = 1; level <= depth; ++level) {
    const std::size_t width = std::size_t{1} << level;
    for (std::size_t first = 0; first < out.size(); first += width) {
      DyadicAccumulator sum;
      for (std::size_t i = 0; i < width; ++i) sum.add(powered[first + i]);
      const DyadicRational avg = sum.value().shifted(-level);
      for (std::size_t i = 0; i < width; ++i)
        if (avg > out[first + i]) out[first + i] = avg;
    }
  }
  return out;
}

/// {x : M_q(1_E / |E|^beta)(x) > 2^threshold_log2}.
struct MaximalComponent {
  DyadicSet set;
  Rational q{2};
  Rational beta{1, 2};
};

struct ExceptionalSet {
  DyadicSet set;
  std::vector<DyadicInterval> intervals;    ///< maximal dyadic intervals of `set`
  std::vector<std::int64_t> multiplicity;   ///< N_I, filled by attach_multiplicities

  DyadicRational measure() const { return set.measure(); }
};

namespace detail {

/// x^n for integer n >= 0 on a dyadic value.
inline DyadicRational ipow(const DyadicRational& x, long long n) {
  return x.pow(static_cast<unsigned>(n));
}

/// Cells where M(1_E) |E|^-(beta q) > 2^(t q), compared after raising to a
/// common integer power D.
inline DyadicSet superlevel(const MaximalComponent& c, int threshold_log2) {
  DyadicSet out(c.set.resolution(), c.set.support());
  const DyadicRational measure = c.set.measure();
  if (measure.is_zero()) return out;
  const Rational s = c.beta * c.q;
  const Rational t = c.q * Rational(threshold_log2);
  const long long d = std::lcm(s.denominator(), t.denominator());
  const long long sd = s.numerator() * (d / s.denominator());
  const long long td = t.numerator() * (d / t.denominator());
  // rhs = 2^(td) |E|^(sd); lhs = M^d, moving |E| across when sd < 0.
  const DyadicRational rhs_base = DyadicRational::pow2(td) * (sd >= 0 ? ipow(measure, sd) : DyadicRational(1));
  const DyadicRational lhs_factor = sd < 0 ? ipow(measure, -sd) : DyadicRational(1);
  const StepFunction m = dyadic_maximal_pow(c.set.indicator(c.set.resolution()), 1, 1);
  std::map<DyadicRational, bool> memo;  // M takes few distinct values
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto it = memo.find(m[i]);
    if (it == memo.end()) it = memo.emplace(m[i], ipow(m[i], d) * lhs_factor > rhs_base).first;
    out.set_cell(i, it->second);
  }
  return out;
}

}  // namespace detail

inline ExceptionalSet exceptional_set(const std::vector<MaximalComponent>& components, int resolution,
                                      int support, int threshold_log2 = 10) {
  ExceptionalSet out{DyadicSet(resolution, support), {}, {}};
  for (const auto& c : components) {
    if (c.q <= Rational(0)) throw PreconditionFailed("maximal-function exponent must be positive");
    out.set = set_union(out.set, detail::superlevel(c, threshold_log2));
  }
  out.intervals = out.set.maximal_intervals();
  return out;
}

/// N_I: the constant value of sum_T 1_{I_T} on each maximal interval.
inline void attach_multiplicities(ExceptionalSet& f, const Forest& forest) {
  f.multiplicity.clear();
  for (const DyadicInterval& i : f.intervals) {
    std::int64_t n = 0;
    for (const Tree& t : forest.trees) {
      if (t.time().contains(i)) ++n;
      else if (i.contains(t.time())) {
        throw InvariantViolated("tree top " + t.top().to_string() + " lies inside the exceptional set");
      }
    }
    f.multiplicity.push_back(n);
  }
}

/// E \ F, after checking |E n F| <= |E|/2.
inline DyadicSet major_subset(const DyadicSet& e, const ExceptionalSet& f) {
  const DyadicSet inside = set_intersection(e, f.set);
  if (inside.measure().shifted(1) > e.measure()) {
    throw InvariantViolated("exceptional set covers more than half of the set; thresholds too small");
  }
  return set_difference(e, f.set);
}

// ---------------------------------------------------------------------------
// Multi-frequency decomposition
// ---------------------------------------------------------------------------

struct IntervalPiece {
  DyadicInterval interval;
  std::int64_t multiplicity = 0;  ///< N_I
  int level = 0;                  ///< m
  std::vector<Tile> tiles;        ///< p_I, in frequency order
  StepFunction a;                 ///< a_I
};

struct MultiFrequency {
  StepFunction a;
  std::vector<IntervalPiece> pieces;
  std::map<int, StepFunction> levels;  ///< m -> a_m
};

/// Level m of an interval with multiplicity n: 0 when n <= 2^2k, else the m
/// with 2^2(k+m-1) < n <= 2^2(k+m).
inline int multiplicity_level(std::int64_t n, int k) {
  int m = 0;
  while (DyadicRational(n) > DyadicRational::pow2(2LL * (k + m))) ++m;
  return m;
}

inline MultiFrequency multi_frequency_decomposition(const Forest& forest, const StepFunction& g3_in,
                                                    ExceptionalSet f, int k, int L) {
  if (!support_of(g3_in).is_subset_of(f.set)) {
    throw PreconditionFailed("g3 must be supported on the exceptional set");
  }
  if (f.multiplicity.size() != f.intervals.size()) attach_multiplicities(f, forest);

  struct IntervalHash {
    std::size_t operator()(const DyadicInterval& i) const noexcept {
      return std::hash<std::int64_t>{}(i.position * 131 + i.scale);
    }
  };
  // ancestor -> indices of maximal intervals strictly below it
  std::unordered_map<DyadicInterval, std::vector<std::size_t>, IntervalHash> below;
  for (std::size_t idx = 0; idx < f.intervals.size(); ++idx) {
    for (DyadicInterval a = f.intervals[idx].parent(); a.scale <= g3_in.support(); a = a.parent()) {
      below[a].push_back(idx);
    }
  }

  std::vector<TileSet> chosen(f.intervals.size());
  for (const Tree& t : forest.trees) {
    for (const Bitile& p : t.members()) {
      const Rect big = dilate(lower(p).rect(), L);
      for (const Tile& q : minimal_tiles(big)) {
        if (f.set.contains(q.time())) continue;  // I_p inside F
        auto it = below.find(q.time());
        if (it == below.end()) continue;
        for (const std::size_t idx : it->second) {
          const DyadicInterval& i = f.intervals[idx];
          chosen[idx].insert(Tile(Rect{i, q.freq().ancestor(-i.scale)}));
        }
      }
    }
  }

  // resample so every chosen packet pairs with g3
  int res = g3_in.resolution();
  for (const TileSet& ts : chosen)
    for (const Tile& t : ts)
      while (!t.freq().inside_power(res)) ++res;
  const StepFunction g3 = at_resolution(g3_in, res);

  MultiFrequency out;
  out.a = StepFunction(g3.resolution(), g3.support());
  for (std::size_t idx = 0; idx < f.intervals.size(); ++idx) {
    IntervalPiece piece;
    piece.interval = f.intervals[idx];
    piece.multiplicity = f.multiplicity[idx];
    piece.level = multiplicity_level(piece.multiplicity, k);
    piece.tiles = sorted(chosen[idx]);
    piece.a = projection_unchecked(g3, piece.tiles);
    out.a += piece.a;
    auto [it, fresh] = out.levels.try_emplace(piece.level, g3.resolution(), g3.support());
    it->second += piece.a;
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

}  // namespace walshqf
