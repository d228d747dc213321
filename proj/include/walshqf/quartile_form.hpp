#pragma once

// The quartile form
//     Lambda(f1,f2,f3) = int sum_P 𝓌_{P_d} Pi_{P_u}f1 Pi_{2^L P_d}f2 Pi_{2^L P_d}f3.
//
// Per bitile P with |I_P| = 2^k: 𝓌_{P_d} 𝓌_{P_u} is the Haar function h_I
// of I_P (+1 on the left half, -1 on the right). Cutting 2^L P_d into its
// 2^L minimal tiles J x w, the two dilated projections multiply to the
// constant 2^(2(L-k)) C2_J C3_J on each J, so
//     term_P = 2^(L-2k) C1 sum_J (+/-) C2_J C3_J
// with C_j the L-infinity packet coefficients <f_j, 𝓌>. Every factor is
// read off a packet table.

#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"
#include "walshqf/forest.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/packets.hpp"
#include "walshqf/step_function.hpp"

namespace walshqf {

using CoefficientMap = std::unordered_map<Bitile, DyadicRational, RectHash>;

struct FormSpec {
  TileUniverse universe;
  BitileSet bitiles;
  std::optional<CoefficientMap> coefficients;  ///< c_P, |c_P| <= 1; absent means all ones

  void validate() const {
    universe.validate();
    for (const Bitile& p : bitiles) {
      if (!universe.contains(p)) throw OutsideUniverse("bitile " + p.to_string() + " outside the strip");
    }
    if (coefficients) {
      for (const auto& [p, c] : *coefficients) {
        if (c * c > DyadicRational(1)) {
          throw PreconditionFailed("coefficient of " + p.to_string() + " exceeds one in modulus");
        }
      }
    }
  }

  DyadicRational coefficient(const Bitile& p) const {
    if (!coefficients) return DyadicRational(1);
    auto it = coefficients->find(p);
    return it == coefficients->end() ? DyadicRational(1) : it->second;
  }

  /// Same universe and coefficients, different summation set.
  FormSpec restricted(BitileSet s) const { return {universe, std::move(s), coefficients}; }
};

namespace detail {

inline void check_form_input(const StepFunction& f, const TileUniverse& u) {
  if (f.support() != u.M) throw OutsideUniverse("input support differs from the universe window");
  if (f.resolution() > u.r) throw ResolutionMismatch("input finer than the universe resolution");
}

template <class Table>
DyadicRational bitile_term(const Bitile& p, int L, const Table& t1, const Table& t2, const Table& t3) {
  using Int = std::remove_cvref_t<decltype(t1.coefficient(Rect{}).mantissa)>;
  constexpr bool narrow = std::is_same_v<Int, std::int64_t>;
  using Accum = std::conditional_t<narrow, __int128, BigInt>;

  const auto c1 = t1.coefficient(upper(p).rect());
  if (c1.mantissa == 0) return {};
  const Rect big = dilate(lower(p).rect(), L);
  const int k = p.scale();
  const int kj = k - L;  // minimal tile time scale
  const std::int64_t count = std::int64_t{1} << L;
  const std::int64_t first = p.time().position << L;
  Accum sum{};
  long long e23 = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    const Rect tile{{kj, first + i}, big.freq};
    const auto c2 = t2.coefficient(tile);
    if (c2.mantissa == 0) continue;
    const auto c3 = t3.coefficient(tile);
    if (c3.mantissa == 0) continue;
    // exponents are the same for every J of one bitile
    e23 = c2.exponent + c3.exponent;
    const Accum prod = static_cast<Accum>(c2.mantissa) * static_cast<Accum>(c3.mantissa);
    if (i < count / 2) sum += prod;
    else sum -= prod;
  }
  if (sum == 0) return {};
  DyadicRational s;
  if constexpr (narrow) s = DyadicRational::from_int128(sum, e23);
  else s = DyadicRational(std::move(sum), e23);
  return s * DyadicRational(BigInt(c1.mantissa), c1.exponent).shifted(L - 2LL * k);
}

}  // namespace detail

/// Packet tables of the three inputs, reusable across summation sets.
class FormTables {
 public:
  FormTables(const TileUniverse& u, const StepFunction& f1, const StepFunction& f2,
             const StepFunction& f3)
      : universe_(u), t1_(checked(f1, u)), t2_(checked(f2, u)), t3_(checked(f3, u)) {}

  const TileUniverse& universe() const { return universe_; }

  /// The term of one bitile, without c_P.
  DyadicRational term(const Bitile& p) const {
    return t1_.visit([&](const auto& a) {
      return t2_.visit([&](const auto& b) {
        return t3_.visit([&](const auto& c) { return mixed_term(p, a, b, c); });
      });
    });
  }

 private:
  static StepFunction checked(const StepFunction& f, const TileUniverse& u) {
    detail::check_form_input(f, u);
    return f;
  }

  template <class A, class B, class C>
  DyadicRational mixed_term(const Bitile& p, const A& a, const B& b, const C& c) const {
    if constexpr (std::is_same_v<A, B> && std::is_same_v<B, C>) {
      return detail::bitile_term(p, universe_.L, a, b, c);
    } else {
      // Mixed widths only occur for huge inputs; take the exact slow path.
      const Rect big = dilate(lower(p).rect(), universe_.L);
      const DyadicRational c1 = a.coefficient_value(upper(p).rect());
      if (c1.is_zero()) return {};
      const int L = universe_.L;
      const std::int64_t count = std::int64_t{1} << L;
      const std::int64_t first = p.time().position << L;
      DyadicAccumulator sum;
      for (std::int64_t i = 0; i < count; ++i) {
        const Rect tile{{p.scale() - L, first + i}, big.freq};
        const DyadicRational prod = b.coefficient_value(tile) * c.coefficient_value(tile);
        if (i < count / 2) sum.add(prod);
        else sum.subtract(prod);
      }
      return (c1 * sum.value()).shifted(L - 2LL * p.scale());
    }
  }

  TileUniverse universe_;
  PacketTable t1_;
  PacketTable t2_;
  PacketTable t3_;
};

struct FormValue {
  DyadicRational value;
  std::vector<std::pair<Bitile, DyadicRational>> terms;  ///< c_P * term_P, sorted by bitile
};

inline FormValue lambda_terms(const FormSpec& spec, const FormTables& tables,
                              std::span<const Bitile> bitiles) {
  FormValue out;
  DyadicAccumulator acc;
  std::vector<Bitile> order(bitiles.begin(), bitiles.end());
  std::sort(order.begin(), order.end());
  for (const Bitile& p : order) {
    if (!spec.universe.contains(p)) throw OutsideUniverse("bitile " + p.to_string() + " outside the strip");
    DyadicRational t = tables.term(p);
    if (!t.is_zero() && spec.coefficients) t *= spec.coefficient(p);
    acc.add(t);
    out.terms.emplace_back(p, std::move(t));
  }
  out.value = acc.value();
  return out;
}

inline FormValue lambda_terms(const FormSpec& spec, const StepFunction& f1, const StepFunction& f2,
                              const StepFunction& f3) {
  spec.validate();
  const FormTables tables(spec.universe, f1, f2, f3);
  const auto s = sorted(spec.bitiles);
  return lambda_terms(spec, tables, s);
}

/// Lambda over spec.bitiles.
inline DyadicRational lambda(const FormSpec& spec, const StepFunction& f1, const StepFunction& f2,
                             const StepFunction& f3) {
  return lambda_terms(spec, f1, f2, f3).value;
}

inline DyadicRational lambda(const FormSpec& spec, const FormTables& tables, const BitileSet& s) {
  const auto v = sorted(s);
  return lambda_terms(spec, tables, v).value;
}

struct TreeLambda {
  DyadicRational total;
  DyadicRational top;    ///< Lambda over {P_T}
  DyadicRational upper;  ///< Lambda over T_u
  DyadicRational lower;  ///< Lambda over T_d
};

inline TreeLambda tree_lambda(const Tree& t, const FormSpec& spec, const FormTables& tables) {
  for (const Bitile& p : t.members()) {
    if (!spec.bitiles.contains(p)) throw PreconditionFailed("tree member " + p.to_string() + " not in the form's set");
  }
  const TreeSplit s = tree_split(t);
  TreeLambda out;
  out.top = lambda(spec, tables, BitileSet{s.top});
  out.upper = lambda(spec, tables, s.upper);
  out.lower = lambda(spec, tables, s.lower);
  out.total = lambda(spec, tables, t.members());
  return out;
}

inline TreeLambda tree_lambda(const Tree& t, const FormSpec& spec, const StepFunction& f1,
                              const StepFunction& f2, const StepFunction& f3) {
  spec.validate();
  return tree_lambda(t, spec, FormTables(spec.universe, f1, f2, f3));
}

// ---------------------------------------------------------------------------
// Materialized projections used inside the tree estimate.
// ---------------------------------------------------------------------------

/// Pi_T f through the tree tiling.
inline StepFunction tree_projection(const Tree& t, const StepFunction& f) {
  return projection_unchecked(f, tree_tiling(t));
}

/// Pi_{T^(L)} f, with f refined so the dilated packets pair with it.
inline StepFunction enlarged_projection(const Tree& t, const TileUniverse& u, const StepFunction& f) {
  return projection_unchecked(at_resolution(f, u.r), tree_tiling(enlarged_tree(t, u.L, u)));
}

/// Pi_l = Pi_{I_T x w_l}, w_l the dyadic interval of length 2^l |I_T|^-1
/// holding 2^L xi.
class TreeFrame {
 public:
  TreeFrame(const Tree& t, const TileUniverse& u, std::optional<DyadicRational> xi = std::nullopt)
      : time_(t.time()), L_(u.L), r_(u.r), xi_(xi.value_or(t.top().freq().left())) {
    if (xi_ < t.top().freq().left() || xi_ >= t.top().freq().right()) {
      throw PreconditionFailed("xi must lie in the top frequency interval");
    }
  }

  Rect rect(int l) const {
    const int scale = l - time_.scale;
    const std::int64_t pos = xi_.shifted(L_ - scale).floor().convert_to<std::int64_t>();
    return {time_, {scale, pos}};
  }

  /// l relative to the top: |I_P| = 2^-l |I_T|.
  int level_of(const Bitile& p) const { return time_.scale - p.scale(); }

  StepFunction pi(int l, const StepFunction& h) const {
    return region_projection(at_resolution(h, r_), rect(l), RegionTiling::column);
  }
  /// m = 0 gives Pi_l itself; m >= 1 gives Pi^Delta_{l+m}.
  StepFunction piece(int l, int m, const StepFunction& h) const {
    if (m == 0) return pi(l, h);
    return pi(l + m, h) - pi(l + m - 1, h);
  }

  int L() const { return L_; }
  int resolution() const { return r_; }

 private:
  DyadicInterval time_;
  int L_;
  int r_;
  DyadicRational xi_;
};

namespace detail {

/// int_I of a product of step functions, all at one resolution.
inline DyadicRational integral_on(const DyadicInterval& interval,
                                  std::initializer_list<const StepFunction*> fs) {
  const StepFunction& head = **fs.begin();
  const auto [first, count] = head.cell_range(interval);
  DyadicAccumulator acc;
  for (std::size_t i = first; i < first + count; ++i) {
    DyadicRational v(1);
    for (const StepFunction* f : fs) {
      v *= (*f)[i];
      if (v.is_zero()) break;
    }
    acc.add(v);
  }
  return acc.value().shifted(-head.resolution());
}

}  // namespace detail

/// int 𝓌_{P_d} Pi_{P_u}h1 Pi^Delta_{l+m}h2 Pi^Delta_{l+m'}h3 with l the level
/// of P in the frame; m = 0 stands for Pi_l.
inline DyadicRational vanishing_integral(const TreeFrame& frame, const Bitile& p, int m, int m_prime,
                                         const StepFunction& h1, const StepFunction& h2,
                                         const StepFunction& h3) {
  const int r = frame.resolution();
  const int l = frame.level_of(p);
  const StepFunction a = packet_eval(lower(p), TileUniverse{r - 2, h1.support(), 2, r});
  const Tile pu = upper(p);
  const StepFunction b = projection_unchecked(at_resolution(h1, r), std::span<const Tile>(&pu, 1));
  const StepFunction c = frame.piece(l, m, h2);
  const StepFunction d = frame.piece(l, m_prime, h3);
  return detail::integral_on(p.time(), {&a, &b, &c, &d});
}

struct TelescopingParts {
  DyadicRational part_a;  ///< Pi_l h2 . Pi^Delta_{l+1} h3
  DyadicRational part_b;  ///< Pi^Delta_{l+1} h2 . Pi_l h3
  DyadicRational part_c;  ///< sum_{m=2..L} Pi^Delta_{l+m} h2 . Pi^Delta_{l+m} h3
  DyadicRational sum() const { return part_a + part_b + part_c; }
};

/// The three sums left after the vanishing identity removes all cross terms.
/// Their total equals Lambda_{T_d}(h1,h2,h3) (with c_P = 1).
inline TelescopingParts telescoping_split(const Tree& t, const TileUniverse& u, const StepFunction& h1,
                                          const StepFunction& h2, const StepFunction& h3) {
  const TreeFrame frame(t, u);
  const TreeSplit s = tree_split(t);
  const int r = u.r;
  const StepFunction g1 = at_resolution(h1, r);
  const TileUniverse packets{r - 2, h1.support(), 2, r};

  std::map<std::pair<int, int>, StepFunction> memo2, memo3;
  auto piece = [&](auto& memo, const StepFunction& h, int l, int m) -> const StepFunction& {
    auto it = memo.find({l, m});
    if (it == memo.end()) it = memo.emplace(std::pair{l, m}, frame.piece(l, m, h)).first;
    return it->second;
  };

  TelescopingParts out;
  DyadicAccumulator a, b, c;
  for (const Bitile& p : sorted(s.lower)) {
    const int l = frame.level_of(p);
    const StepFunction wd = packet_eval(lower(p), packets);
    const Tile pu = upper(p);
    const StepFunction q = projection_unchecked(g1, std::span<const Tile>(&pu, 1));
    const StepFunction hq = pointwise(wd, q);
    a.add(detail::integral_on(p.time(), {&hq, &piece(memo2, h2, l, 0), &piece(memo3, h3, l, 1)}));
    b.add(detail::integral_on(p.time(), {&hq, &piece(memo2, h2, l, 1), &piece(memo3, h3, l, 0)}));
    for (int m = 2; m <= u.L; ++m) {
      c.add(detail::integral_on(p.time(), {&hq, &piece(memo2, h2, l, m), &piece(memo3, h3, l, m)}));
    }
  }
  out.part_a = a.value();
  out.part_b = b.value();
  out.part_c = c.value();
  return out;
}

/// g -> sum_{P in S} a_P Pi_{P_u} g; a missing a_P counts as 1.
inline StepFunction tree_singular_integral(const BitileSet& s, const CoefficientMap& a,
                                           const StepFunction& g) {
  StepFunction out(g.resolution(), g.support());
  for (const Bitile& p : sorted(s)) {
    const Tile pu = upper(p);
    StepFunction piece = projection_unchecked(g, std::span<const Tile>(&pu, 1));
    if (auto it = a.find(p); it != a.end()) piece *= it->second;
    out += piece;
  }
  return out;
}

}  // namespace walshqf
