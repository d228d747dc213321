#pragma once

// Random instances and the experiment drivers behind the CLI.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "walshqf/decomposition.hpp"
#include "walshqf/dyadic.hpp"
#include "walshqf/forest.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/packets.hpp"
#include "walshqf/quartile_form.hpp"
#include "walshqf/step_function.hpp"

namespace walshqf {

using Rng = std::mt19937_64;

/// Independent stream for work item (a, b) of a run seeded with `seed`.
inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return Rng(seq);
}

inline std::int64_t uniform(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

enum class FillMode { signed_dyadic, indicator };

/// A function bounded by 1_bound: on each cell of the set, a value j/4 with
/// j uniform in [-4,4] (signed_dyadic) or a fair 0/1 (indicator).
inline StepFunction random_step_function(Rng& rng, const DyadicSet& bound, FillMode mode) {
  StepFunction f(bound.resolution(), bound.support());
  for (std::size_t i = 0; i < bound.size(); ++i) {
    if (!bound.contains_cell(i)) continue;
    if (mode == FillMode::indicator) f[i] = DyadicRational(uniform(rng, 0, 1));
    else f[i] = DyadicRational(BigInt(uniform(rng, -4, 4)), -2);
  }
  return f;
}

inline StepFunction random_step_function(std::uint64_t seed, const DyadicSet& bound, FillMode mode) {
  Rng rng = make_rng(seed);
  return random_step_function(rng, bound, mode);
}

inline DyadicSet full_set(int resolution, int support) {
  DyadicSet s(resolution, support);
  s.insert(DyadicInterval{support, 0});
  return s;
}

/// Random union of cells with exactly `cells` members.
inline DyadicSet random_set(Rng& rng, int resolution, int support, std::size_t cells) {
  DyadicSet s(resolution, support);
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < std::min(cells, idx.size()); ++i) s.set_cell(idx[i], true);
  return s;
}

inline Bitile random_bitile(Rng& rng, const TileUniverse& u, int min_scale, int max_scale) {
  const int k = static_cast<int>(uniform(rng, min_scale, max_scale));
  const std::int64_t n = uniform(rng, 0, (std::int64_t{1} << (u.M - k)) - 1);
  const std::int64_t l = uniform(rng, 0, (std::int64_t{1} << (u.N - 1 + k)) - 1);
  return Bitile(k, n, l);
}

inline BitileSet universe_set(const TileUniverse& u) {
  const auto all = u.bitiles();
  return BitileSet(all.begin(), all.end());
}

/// Convex tree: the bitiles of the universe below a random top, down to a
/// random lowest scale.
inline Tree random_tree(Rng& rng, const TileUniverse& u) {
  const Bitile top = random_bitile(rng, u, u.min_bitile_scale(), u.M);
  const int floor_scale = static_cast<int>(uniform(rng, u.min_bitile_scale(), top.scale()));
  BitileSet all;
  for (const Bitile& p : u.bitiles())
    if (p.scale() >= floor_scale) all.insert(p);
  return Tree(top, down_set(all, top, floor_scale));
}

/// One of: the whole universe, a band of scales, the bitiles whose time
/// interval leaves a random set, or a random tree. All are convex.
inline BitileSet random_convex_collection(Rng& rng, const TileUniverse& u) {
  const auto all = u.bitiles();
  BitileSet out;
  switch (uniform(rng, 0, 3)) {
    case 0:
      return BitileSet(all.begin(), all.end());
    case 1: {
      const int a = static_cast<int>(uniform(rng, u.min_bitile_scale(), u.M));
      const int b = static_cast<int>(uniform(rng, a, u.M));
      for (const Bitile& p : all)
        if (p.scale() >= a && p.scale() <= b) out.insert(p);
      return out;
    }
    case 2: {
      const int res = u.N;
      const DyadicSet f = random_set(rng, res, u.M, uniform(rng, 0, std::int64_t{1} << (u.M + res - 1)));
      for (const Bitile& p : all)
        if (!f.contains(p.time())) out.insert(p);
      return out;
    }
    default:
      return random_tree(rng, u).members();
  }
}

// ---------------------------------------------------------------------------
// Configuration and reports
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  int N = 3;
  int M = 3;
  int r = 0;  ///< 0 means N + max(L)
  std::vector<int> Ls{2};
  std::vector<Rational> p{Rational(2), Rational(4), Rational(4)};
  std::vector<Rational> alpha{Rational(1, 2), Rational(0), Rational(1, 2)};
  Rational epsilon{1, 6};
  int trials = 20;
  std::uint64_t seed = 0;
  unsigned threads = 0;  ///< 0 means hardware concurrency
  bool fault_injection = false;

  int max_L() const { return *std::max_element(Ls.begin(), Ls.end()); }
  int resolution() const { return r > 0 ? r : N + max_L(); }
  TileUniverse universe(int L) const { return TileUniverse{N, M, L, std::max(resolution(), N + L)}; }

  void validate_strong_type() const {
    if (p.size() != 3) throw PreconditionFailed("three exponents p_j required");
    Rational s(0);
    for (const auto& x : p) {
      if (x <= Rational(1)) throw PreconditionFailed("exponents p_j must exceed 1");
      s += Rational(1) / x;
    }
    if (s != Rational(1)) throw PreconditionFailed("1/p1 + 1/p2 + 1/p3 must equal 1");
  }
  void validate_restricted() const {
    if (alpha.size() != 3) throw PreconditionFailed("three exponents alpha_j required");
    if (alpha[0] + alpha[1] + alpha[2] != Rational(1)) throw PreconditionFailed("alpha_j must sum to 1");
  }
};

struct CheckResult {
  CheckResult(std::string n = {}) : name(std::move(n)) {}  // NOLINT(google-explicit-constructor)

  std::string name;
  bool passed = true;
  int instances = 0;
  std::string witness;  ///< first failing instance, serialized
};

struct IdentityReport {
  std::vector<CheckResult> checks;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

namespace detail {

inline unsigned worker_count(unsigned requested) {
  if (requested) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0,n) on a pool; results are keyed by i so the
/// outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  const unsigned w = std::min<unsigned>(worker_count(threads), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string describe(const StepFunction& f) {
  std::ostringstream os;
  os << "{r=" << f.resolution() << ",M=" << f.support() << ",cells=[";
  for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
  os << "]}";
  return os.str();
}

inline std::string describe(const BitileSet& s) {
  std::string out = "[";
  bool first = true;
  for (const Bitile& p : sorted(s)) {
    out += (first ? "" : ",") + p.to_string();
    first = false;
  }
  return out + "]";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Identity checks. Each returns a CheckResult over a number of instances.
// ---------------------------------------------------------------------------

/// int 𝓌_p 𝓌_q = |I_p| [p == q] and 0 for disjoint tiles, over all strip tiles.
inline CheckResult check_orthonormality(const TileUniverse& u, PacketCache& cache) {
  CheckResult out{"orthonormality"};
  const auto tiles = u.strip_tiles();
  std::vector<PacketCache::Signs> signs;
  signs.reserve(tiles.size());
  for (const Tile& t : tiles) signs.push_back(cache.signs(t, u.r));
  for (std::size_t i = 0; i < tiles.size() && out.passed; ++i) {
    for (std::size_t j = i; j < tiles.size(); ++j) {
      ++out.instances;
      const Tile& a = tiles[i];
      const Tile& b = tiles[j];
      // Only nested time intervals overlap.
      std::int64_t dot = 0;
      if (a.time().intersects(b.time())) {
        const bool a_big = a.time().contains(b.time());
        const Tile& big = a_big ? a : b;
        const Tile& small = a_big ? b : a;
        const auto& sb = a_big ? *signs[i] : *signs[j];
        const auto& ss = a_big ? *signs[j] : *signs[i];
        const std::size_t offset = static_cast<std::size_t>(small.time().position -
                                                            (big.time().position << (big.scale() - small.scale())))
                                   << (small.scale() + u.r);
        for (std::size_t c = 0; c < ss.size(); ++c) dot += sb[offset + c] * ss[c];
      }
      const DyadicRational value = DyadicRational(dot).shifted(-u.r);
      const DyadicRational expected = i == j ? a.time().length() : DyadicRational();
      // nested tiles (I_p in I_q, w_q in w_p) overlap and carry no claim
      const bool disjoint = !a.rect().intersects(b.rect());
      if ((i == j && value != expected) || (i != j && disjoint && !value.is_zero())) {
        out.passed = false;
        out.witness = "tiles " + a.to_string() + " and " + b.to_string() + ": integral " + value.to_string();
        break;
      }
    }
  }
  return out;
}

/// ||f||^2 = sum |I_p|^-1 <f,𝓌_p>^2 over the level-t Walsh tiling, every t.
inline CheckResult check_parseval(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"parseval"};
  for (int it = 0; it < instances && out.passed; ++it) {
    const StepFunction f = random_step_function(rng, full_set(u.r, u.M), FillMode::signed_dyadic);
    const PacketTable table(f);
    for (int t = 0; t <= u.M + u.r; ++t) {
      ++out.instances;
      // tiles with |I| = 2^(t-r): the minimal tilings of the columns
      // [0,2^M) x w, |w| = 2^-k
      DyadicAccumulator acc;
      const int k = t - u.r;
      for (std::int64_t l = 0; l < (std::int64_t{1} << t); ++l)
        acc.add(table.rect_energy(Rect{{u.M, 0}, {-k, l}}));
      if (acc.value() != f.l2_norm_sq()) {
        out.passed = false;
        out.witness = "level " + std::to_string(t) + " f=" + detail::describe(f);
        break;
      }
    }
  }
  return out;
}

/// Two tilings of the same region give the same projection: minimal versus
/// column tilings of random disjoint rectangles, and the tree tiling versus
/// the generic convex tiling of random trees.
inline CheckResult check_tiling_independence(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"tiling_independence"};
  for (int it = 0; it < instances && out.passed; ++it) {
    ++out.instances;
    const StepFunction f = random_step_function(rng, full_set(u.r, u.M), FillMode::signed_dyadic);
    if (it % 2 == 0) {
      // random disjoint rectangles: children of one random root
      // area 2^j, frequency inside [0,2^r)
      const int k = static_cast<int>(uniform(rng, -u.N, u.M));
      const int j = static_cast<int>(uniform(rng, 0, std::min(4, u.r + k)));
      const Rect root{{k, uniform(rng, 0, (std::int64_t{1} << (u.M - k)) - 1)},
                      {j - k, uniform(rng, 0, (std::int64_t{1} << (u.r - j + k)) - 1)}};
      std::vector<Rect> rects{root};
      for (int split = 0; split < 3; ++split) {
        const std::size_t pick = static_cast<std::size_t>(uniform(rng, 0, static_cast<std::int64_t>(rects.size()) - 1));
        const Rect r = rects[pick];
        if (r.area_log2() == 0) continue;
        rects.erase(rects.begin() + static_cast<std::ptrdiff_t>(pick));
        if (uniform(rng, 0, 1)) {
          rects.push_back({r.time.lower_half(), r.freq});
          rects.push_back({r.time.upper_half(), r.freq});
        } else {
          rects.push_back({r.time, r.freq.lower_half()});
          rects.push_back({r.time, r.freq.upper_half()});
        }
      }
      const auto a = region_projection(f, rects, RegionTiling::minimal);
      const auto b = region_projection(f, rects, RegionTiling::column);
      if (!(a == b)) {
        out.passed = false;
        out.witness = "rects at root " + root.to_string() + " f=" + detail::describe(f);
      }
    } else {
      const Tree t = random_tree(rng, u);
      const auto a = projection_unchecked(f, tree_tiling(t));
      const auto b = projection_unchecked(f, convex_union_tiling(t.members()));
      if (!(a == b)) {
        out.passed = false;
        out.witness = "tree " + detail::describe(t.members()) + " f=" + detail::describe(f);
      }
    }
  }
  return out;
}

/// Pi_{S1} Pi_{S2} f = Pi_{S1} f for S1 inside S2: S2 a random tree region,
/// S1 the region of a sub-tree (a down-set of a member).
inline CheckResult check_nested_projection(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"nested_projection"};
  for (int it = 0; it < instances && out.passed; ++it) {
    ++out.instances;
    const StepFunction f = random_step_function(rng, full_set(u.r, u.M), FillMode::signed_dyadic);
    const Tree big = random_tree(rng, u);
    const auto members = sorted(big.members());
    const Bitile sub_top = members[static_cast<std::size_t>(uniform(rng, 0, static_cast<std::int64_t>(members.size()) - 1))];
    const Tree small(sub_top, down_set(big.members(), sub_top, min_scale(big.members())));
    const auto s2 = projection_unchecked(f, tree_tiling(big));
    const auto lhs = projection_unchecked(s2, tree_tiling(small));
    const auto rhs = projection_unchecked(f, tree_tiling(small));
    if (!(lhs == rhs)) {
      out.passed = false;
      out.witness = "S2 tree " + detail::describe(big.members()) + " S1 top " + sub_top.to_string();
    }
  }
  return out;
}

struct ProjectedTriple {
  Tree tree;
  StepFunction h1, h2, h3;
};

inline ProjectedTriple random_projected_triple(Rng& rng, const TileUniverse& u) {
  const DyadicSet all = full_set(u.r, u.M);
  // a tree with a non-trivial lower part, when one is available
  Tree t = random_tree(rng, u);
  for (int tries = 0; tries < 20 && tree_split(t).lower.empty(); ++tries) t = random_tree(rng, u);
  const StepFunction f1 = random_step_function(rng, all, FillMode::signed_dyadic);
  const StepFunction f2 = random_step_function(rng, all, FillMode::signed_dyadic);
  const StepFunction f3 = random_step_function(rng, all, FillMode::signed_dyadic);
  return {t, tree_projection(t, f1), enlarged_projection(t, u, f2), enlarged_projection(t, u, f3)};
}

/// The integral of eq. (vanishing) is zero for m != m' with max(m,m') > 1,
/// for m = m' = 1, and for m = m' = 0.
inline CheckResult check_vanishing(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"vanishing"};
  for (int it = 0; it < instances && out.passed; ++it) {
    const ProjectedTriple x = random_projected_triple(rng, u);
    const auto lower_set = sorted(tree_split(x.tree).lower);
    if (lower_set.empty()) continue;
    ++out.instances;
    const Bitile p = lower_set[static_cast<std::size_t>(uniform(rng, 0, static_cast<std::int64_t>(lower_set.size()) - 1))];
    int m = 0, mp = 0;
    switch (uniform(rng, 0, 2)) {
      case 0:
        m = static_cast<int>(uniform(rng, 0, u.L));
        do mp = static_cast<int>(uniform(rng, 0, u.L));
        while (mp == m || std::max(m, mp) < 2);
        break;
      case 1: m = mp = 1; break;
      default: m = mp = 0; break;
    }
    const TreeFrame frame(x.tree, u);
    const DyadicRational v = vanishing_integral(frame, p, m, mp, x.h1, x.h2, x.h3);
    if (!v.is_zero()) {
      out.passed = false;
      out.witness = "P=" + p.to_string() + " m=" + std::to_string(m) + " m'=" + std::to_string(mp) +
                    " tree " + detail::describe(x.tree.members()) + " value " + v.to_string();
    }
  }
  return out;
}

/// telescoping_split parts add up to Lambda_{T_d}(h1,h2,h3).
inline CheckResult check_telescoping(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"telescoping"};
  for (int it = 0; it < instances && out.passed; ++it) {
    ++out.instances;
    const ProjectedTriple x = random_projected_triple(rng, u);
    const TelescopingParts parts = telescoping_split(x.tree, u, x.h1, x.h2, x.h3);
    const BitileSet lower_set = tree_split(x.tree).lower;
    const FormSpec spec{u, lower_set, {}};
    const DyadicRational direct = lambda(spec, x.h1, x.h2, x.h3);
    if (parts.sum() != direct) {
      out.passed = false;
      out.witness = "tree " + detail::describe(x.tree.members()) + " parts " + parts.sum().to_string() +
                    " direct " + direct.to_string();
    }
  }
  return out;
}

/// Lambda_{T_d}(f1,f2,f3) = Lambda_{T_d}(Pi_T f1, Pi_{T^(L)} f2, Pi_{T^(L)} f3).
inline CheckResult check_tree_substitution(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"tree_projection_substitution"};
  const DyadicSet all = full_set(u.r, u.M);
  for (int it = 0; it < instances && out.passed; ++it) {
    ++out.instances;
    const Tree t = random_tree(rng, u);
    const StepFunction f1 = random_step_function(rng, all, FillMode::signed_dyadic);
    const StepFunction f2 = random_step_function(rng, all, FillMode::signed_dyadic);
    const StepFunction f3 = random_step_function(rng, all, FillMode::signed_dyadic);
    const FormSpec spec{u, tree_split(t).lower, {}};
    const DyadicRational a = lambda(spec, f1, f2, f3);
    const DyadicRational b =
        lambda(spec, tree_projection(t, f1), enlarged_projection(t, u, f2), enlarged_projection(t, u, f3));
    if (a != b) {
      out.passed = false;
      out.witness = "tree " + detail::describe(t.members()) + ": " + a.to_string() + " vs " + b.to_string();
    }
  }
  return out;
}

/// Lambda over P equals the sum of the tree forms over the full decomposition
/// plus the form over the final remainder.
struct AdditivityInstance {
  DyadicRational direct;
  DyadicRational via_trees;
  DyadicRational remainder;
  std::size_t trees = 0;
};

inline AdditivityInstance decomposition_additivity(const TileUniverse& u, Rng& rng, int k_max) {
  const DyadicSet all = full_set(u.r, u.M);
  const BitileSet collection = random_convex_collection(rng, u);
  const StepFunction f1 = random_step_function(rng, all, FillMode::signed_dyadic);
  const StepFunction f2 = random_step_function(rng, all, FillMode::signed_dyadic);
  const StepFunction f3 = random_step_function(rng, all, FillMode::signed_dyadic);
  const DecompositionTrace trace = full_decomposition(collection, f2, u.L, k_max);
  const FormSpec spec{u, collection, {}};
  const FormTables tables(u, f1, f2, f3);
  AdditivityInstance out;
  out.direct = lambda(spec, tables, collection);
  DyadicAccumulator acc;
  for (const auto& level : trace.levels) {
    for (const Tree& t : level.forest.trees) {
      acc.add(tree_lambda(t, spec, tables).total);
      ++out.trees;
    }
  }
  out.remainder = lambda(spec, tables, trace.final_remainder());
  out.via_trees = acc.value();
  return out;
}

inline CheckResult check_additivity(const TileUniverse& u, Rng& rng, int instances) {
  CheckResult out{"decomposition_additivity"};
  for (int it = 0; it < instances && out.passed; ++it) {
    ++out.instances;
    const AdditivityInstance x = decomposition_additivity(u, rng, 6);
    if (x.direct != x.via_trees + x.remainder) {
      out.passed = false;
      out.witness = "instance " + std::to_string(it) + ": " + x.direct.to_string() + " vs " +
                    (x.via_trees + x.remainder).to_string();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Restricted-type instances (Triangle c and Diamond regimes)
// ---------------------------------------------------------------------------

enum class Regime { triangle, diamond, out_of_regime, degenerate };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::triangle: return "triangle";
    case Regime::diamond: return "diamond";
    case Regime::out_of_regime: return "out_of_regime";
    case Regime::degenerate: return "degenerate";
  }
  return "?";
}

struct RestrictedInstance {
  Regime regime = Regime::triangle;
  std::array<DyadicSet, 3> sets;
  ExceptionalSet exceptional;
  DyadicSet major;  ///< E_2'
  std::array<StepFunction, 3> f;
  bool major_ok = true;      ///< |F| < max|E_j|/2 and |E_2'| >= |E_2|/2
  std::string major_detail;
};

/// |E|^-x for |E| = 2^e, when e x is an integer.
inline std::optional<DyadicRational> power_of_measure(const DyadicRational& measure, const Rational& x) {
  if (measure.is_zero()) return std::nullopt;
  if (measure.mantissa() != 1) return std::nullopt;
  const Rational ex = Rational(measure.exponent()) * x;
  if (ex.denominator() != 1) return std::nullopt;
  return DyadicRational::pow2(-ex.numerator());
}

/// Sets with power-of-two measures, |E_2| maximal; the diamond regime when
/// alpha_2 < 0 (|E_3| tiny so E_3 lies in F), otherwise Triangle c.
inline RestrictedInstance random_restricted_instance(const ExperimentConfig& cfg, const TileUniverse& u,
                                                     Rng& rng) {
  RestrictedInstance x;
  const bool diamond = cfg.alpha[1] < Rational(0);
  x.regime = diamond ? Regime::diamond : Regime::triangle;
  const int cells_log2 = u.M + u.r;
  // |E_2| in [1,2) means 2^r cells
  const int e2 = std::min(u.r, cells_log2);
  int e1 = static_cast<int>(uniform(rng, std::max(0, e2 - 3), e2));
  int e3 = diamond ? static_cast<int>(uniform(rng, 0, 1)) : static_cast<int>(uniform(rng, std::max(0, e2 - 3), e2));
  x.sets[0] = random_set(rng, u.r, u.M, std::size_t{1} << e1);
  x.sets[1] = random_set(rng, u.r, u.M, std::size_t{1} << e2);
  x.sets[2] = random_set(rng, u.r, u.M, std::size_t{1} << e3);

  std::vector<MaximalComponent> comps;
  if (diamond) {
    comps.push_back({x.sets[0], Rational(2), cfg.alpha[0]});
    const Rational q = Rational(1) / (Rational(1) - cfg.epsilon);
    comps.push_back({x.sets[2], q, Rational(1) - cfg.epsilon});
  } else {
    comps.push_back({x.sets[0], Rational(2), Rational(1, 2)});
    comps.push_back({x.sets[2], Rational(2), Rational(1, 2)});
  }
  x.exceptional = exceptional_set(comps, u.r, u.M);
  if (diamond && !x.sets[2].is_subset_of(x.exceptional.set)) x.regime = Regime::out_of_regime;

  const DyadicRational max_e = std::max({x.sets[0].measure(), x.sets[1].measure(), x.sets[2].measure()});
  const DyadicRational fm = x.exceptional.measure();
  x.major = set_difference(x.sets[1], x.exceptional.set);
  const bool f_small = fm.shifted(1) < max_e;
  const bool major_big = x.major.measure().shifted(1) >= x.sets[1].measure();
  x.major_ok = f_small && major_big;
  if (!x.major_ok) {
    x.major_detail = "|F|=" + fm.to_string() + " max|E|=" + max_e.to_string() +
                     " |E2'|=" + x.major.measure().to_string();
  }
  x.f[0] = random_step_function(rng, x.sets[0], FillMode::signed_dyadic);
  x.f[1] = random_step_function(rng, x.major, FillMode::signed_dyadic);
  x.f[2] = random_step_function(rng, x.sets[2], FillMode::signed_dyadic);
  if (x.sets[0].empty() || x.sets[1].empty() || x.sets[2].empty()) x.regime = Regime::degenerate;
  return x;
}

struct DiamondCheck {
  bool substitution_ok = true;
  bool cardinality_ok = true;
  std::size_t trees = 0;
  std::size_t intervals = 0;
  std::string witness;
};

/// The multi-frequency substitution on a diamond instance: P = bitiles with
/// I_P not inside F, decomposed by size(., g1); for each level k the
/// function a built from g3 must leave every tree form unchanged.
inline DiamondCheck check_diamond_instance(const ExperimentConfig& cfg, const TileUniverse& u,
                                           const RestrictedInstance& x, int k_max) {
  DiamondCheck out;
  StepFunction g1 = x.f[0];
  if (auto s = power_of_measure(x.sets[0].measure(), cfg.alpha[0])) g1 *= *s;
  StepFunction g3 = x.f[2];
  if (auto s = power_of_measure(x.sets[2].measure(), Rational(1) - cfg.epsilon)) g3 *= *s;
  const StepFunction& g2 = x.f[1];

  BitileSet collection;
  for (const Bitile& p : u.bitiles())
    if (!x.exceptional.set.contains(p.time())) collection.insert(p);
  const DecompositionTrace trace = full_decomposition(collection, g1, 0, k_max);
  const FormSpec spec{u, collection, {}};
  const FormTables direct(u, g1, g2, g3);
  for (const auto& level : trace.levels) {
    if (level.forest.trees.empty()) continue;
    ExceptionalSet f = x.exceptional;
    attach_multiplicities(f, level.forest);
    const MultiFrequency mf = multi_frequency_decomposition(level.forest, g3, f, level.k, u.L);
    const FormTables replaced(u, g1, g2, mf.a);
    for (const Tree& t : level.forest.trees) {
      ++out.trees;
      const DyadicRational a = lambda(spec, direct, t.members());
      const DyadicRational b = lambda(spec, replaced, t.members());
      if (a != b && out.substitution_ok) {
        out.substitution_ok = false;
        out.witness = "tree top " + t.top().to_string() + ": " + a.to_string() + " vs " + b.to_string();
      }
    }
    for (const auto& piece : mf.pieces) {
      ++out.intervals;
      if (static_cast<std::int64_t>(piece.tiles.size()) > piece.multiplicity && out.cardinality_ok) {
        out.cardinality_ok = false;
        out.witness += " |p_I|=" + std::to_string(piece.tiles.size()) + " > N_I=" +
                       std::to_string(piece.multiplicity);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Uniformity sweep
// ---------------------------------------------------------------------------

/// ||f||_p in floating point (reporting only).
inline double lp_norm(const StepFunction& f, double p) {
  double s = 0;
  for (const auto& v : f.values()) s += std::pow(std::abs(v.to_double()), p);
  return std::pow(std::ldexp(s, -f.resolution()), 1.0 / p);
}

struct SweepRow {
  int L = 0;
  int trial = 0;
  DyadicRational value;  ///< exact Lambda_L
  std::array<std::optional<DyadicRational>, 3> power_sums;  ///< int |f_j|^p_j, when p_j is an integer
  double denominator = 0;
  double ratio = 0;  ///< derived, floating point
};

struct SweepTable {
  std::vector<SweepRow> rows;               ///< ordered by (L, trial)
  std::map<int, double> max_ratio;          ///< per L
  std::map<int, int> argmax_trial;
  double growth = 0;                        ///< max over L / min over L of max_ratio
  int skipped = 0;                          ///< 0/0 rows
};

/// Inputs live on cells of width 2^-N (the finest scale the strip resolves)
/// so one set of functions serves every L.
inline std::array<StepFunction, 3> sweep_inputs(const ExperimentConfig& cfg, int trial) {
  Rng rng = make_rng(cfg.seed, 0x5377, static_cast<std::uint64_t>(trial));
  const DyadicSet all = full_set(cfg.N, cfg.M);
  return {random_step_function(rng, all, FillMode::signed_dyadic),
          random_step_function(rng, all, FillMode::signed_dyadic),
          random_step_function(rng, all, FillMode::signed_dyadic)};
}

inline SweepTable run_uniformity_sweep(const ExperimentConfig& cfg) {
  cfg.validate_strong_type();
  SweepTable table;
  const std::size_t per_l = static_cast<std::size_t>(cfg.trials);
  std::vector<std::optional<SweepRow>> rows(cfg.Ls.size() * per_l);
  std::vector<BitileSet> strips;
  for (int L : cfg.Ls) strips.push_back(universe_set(cfg.universe(L)));

  detail::parallel_for(rows.size(), cfg.threads, [&](std::size_t idx) {
    const std::size_t li = idx / per_l;
    const int trial = static_cast<int>(idx % per_l);
    const int L = cfg.Ls[li];
    const TileUniverse u = cfg.universe(L);
    const auto f = sweep_inputs(cfg, trial);
    double denom = 1;
    for (int j = 0; j < 3; ++j) denom *= lp_norm(f[j], boost::rational_cast<double>(cfg.p[j]));
    if (denom == 0) return;
    const FormSpec spec{u, strips[li], {}};
    const FormTables tables(u, f[0], f[1], f[2]);
    SweepRow row{L, trial, lambda(spec, tables, strips[li]), {}, denom, 0};
    for (int j = 0; j < 3; ++j)
      if (cfg.p[j].denominator() == 1) row.power_sums[j] = f[j].power_integral(static_cast<unsigned>(cfg.p[j].numerator()));
    row.ratio = std::abs(row.value.to_double()) / denom;
    rows[idx] = row;
  });

  for (auto& r : rows) {
    if (!r) {
      ++table.skipped;
      continue;
    }
    auto [it, fresh] = table.max_ratio.try_emplace(r->L, r->ratio);
    if (fresh || r->ratio > it->second) {
      it->second = r->ratio;
      table.argmax_trial[r->L] = r->trial;
    }
    table.rows.push_back(std::move(*r));
  }
  if (!table.max_ratio.empty()) {
    double lo = table.max_ratio.begin()->second, hi = lo;
    for (const auto& [L, v] : table.max_ratio) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    table.growth = lo > 0 ? hi / lo : 0;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Restricted experiment
// ---------------------------------------------------------------------------

struct RestrictedRow {
  int L = 0;
  int trial = 0;
  Regime regime = Regime::triangle;
  DyadicRational value;
  std::array<DyadicRational, 3> measures;
  DyadicRational exceptional_measure;
  DyadicRational major_measure;
  bool major_ok = true;
  double constant = 0;  ///< |Lambda| prod |E_j|^-alpha_j, floating point
};

struct RestrictedReport {
  std::vector<RestrictedRow> rows;
  std::map<int, double> max_constant;
  bool all_major_ok = true;
};

inline RestrictedReport run_restricted_experiment(const ExperimentConfig& cfg) {
  cfg.validate_restricted();
  RestrictedReport report;
  const std::size_t per_l = static_cast<std::size_t>(cfg.trials);
  std::vector<RestrictedRow> rows(cfg.Ls.size() * per_l);
  std::vector<BitileSet> strips;
  for (int L : cfg.Ls) strips.push_back(universe_set(cfg.universe(L)));

  detail::parallel_for(rows.size(), cfg.threads, [&](std::size_t idx) {
    const std::size_t li = idx / per_l;
    const int trial = static_cast<int>(idx % per_l);
    const TileUniverse u = cfg.universe(cfg.Ls[li]);
    // the same sets and functions for every L of one trial
    Rng rng = make_rng(cfg.seed, 0x7265, static_cast<std::uint64_t>(trial));
    const RestrictedInstance x = random_restricted_instance(cfg, cfg.universe(cfg.max_L()), rng);
    RestrictedRow row;
    row.L = u.L;
    row.trial = trial;
    row.regime = x.regime;
    for (int j = 0; j < 3; ++j) row.measures[j] = x.sets[j].measure();
    row.exceptional_measure = x.exceptional.measure();
    row.major_measure = x.major.measure();
    row.major_ok = x.major_ok;
    if (x.regime != Regime::degenerate) {
      const FormSpec spec{u, strips[li], {}};
      const FormTables tables(u, x.f[0], x.f[1], x.f[2]);
      row.value = lambda(spec, tables, strips[li]);
      double scale = 1;
      for (int j = 0; j < 3; ++j)
        scale *= std::pow(row.measures[j].to_double(), -boost::rational_cast<double>(cfg.alpha[j]));
      row.constant = std::abs(row.value.to_double()) * scale;
    }
    rows[idx] = std::move(row);
  });

  for (auto& r : rows) {
    report.all_major_ok = report.all_major_ok && r.major_ok;
    auto [it, fresh] = report.max_constant.try_emplace(r.L, r.constant);
    if (!fresh) it->second = std::max(it->second, r.constant);
    report.rows.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Identity suite
// ---------------------------------------------------------------------------

struct SuiteSizes {
  int parseval = 5;
  int tiling = 20;
  int nested = 20;
  int vanishing = 20;
  int telescoping = 10;
  int substitution = 10;
  int additivity = 10;
  int diamond = 5;
};

inline IdentityReport run_identity_suite(const ExperimentConfig& cfg, const SuiteSizes& sizes = {}) {
  IdentityReport report;
  const TileUniverse u = cfg.universe(cfg.Ls.front());
  u.validate();
  Rng rng = make_rng(cfg.seed, 0x6964);

  PacketCache private_cache;
  if (cfg.fault_injection) {
    // flip one cell of a packet with non-zero frequency
    const Tile victim(u.M > 0 ? 1 : 0, 0, 1);
    private_cache.corrupt(victim, u.r, 0);
  }
  report.checks.push_back(check_orthonormality(u, private_cache));
  report.checks.push_back(check_parseval(u, rng, sizes.parseval));
  report.checks.push_back(check_tiling_independence(u, rng, sizes.tiling));
  report.checks.push_back(check_nested_projection(u, rng, sizes.nested));
  report.checks.push_back(check_vanishing(u, rng, sizes.vanishing));
  report.checks.push_back(check_telescoping(u, rng, sizes.telescoping));
  report.checks.push_back(check_tree_substitution(u, rng, sizes.substitution));
  report.checks.push_back(check_additivity(u, rng, sizes.additivity));

  // Diamond instances need |E_3| below 2^-10/(1-eps), hence a fine grid of
  // their own.
  CheckResult mf{"multi_frequency_substitution"};
  ExperimentConfig dcfg = cfg;
  dcfg.alpha = {Rational(1, 4), Rational(-1, 4), Rational(1)};
  const TileUniverse du{std::min(u.N, 2), std::min(u.M, 1), 2, 14};
  int attempts = 0;
  while (mf.instances < sizes.diamond && attempts++ < 10 * sizes.diamond) {
    const RestrictedInstance x = random_restricted_instance(dcfg, du, rng);
    if (x.regime != Regime::diamond) continue;
    ++mf.instances;
    const DiamondCheck d = check_diamond_instance(dcfg, du, x, 4);
    if (!(d.substitution_ok && d.cardinality_ok) && mf.passed) {
      mf.passed = false;
      mf.witness = d.witness;
    }
  }
  report.checks.push_back(mf);
  return report;
}

}  // namespace walshqf
