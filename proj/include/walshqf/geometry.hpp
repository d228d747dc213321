#pragma once

// Dyadic intervals, tiles, bitiles and their order in the Walsh phase plane.
//
// A rectangle I x w is stored as two DyadicIntervals. An interval with
// scale k and position n is [2^k n, 2^k (n+1)). Tiles have
// time.scale + freq.scale == 0, bitiles == 1.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"

namespace walshqf {

struct DyadicInterval {
  int scale = 0;
  std::int64_t position = 0;

  constexpr auto operator<=>(const DyadicInterval&) const = default;

  DyadicRational left() const { return DyadicRational(position).shifted(scale); }
  DyadicRational right() const { return DyadicRational(position + 1).shifted(scale); }
  DyadicRational length() const { return DyadicRational::pow2(scale); }

  constexpr bool contains(const DyadicInterval& o) const {
    return o.scale <= scale && (o.position >> (scale - o.scale)) == position;
  }
  constexpr bool intersects(const DyadicInterval& o) const {
    return contains(o) || o.contains(*this);
  }
  constexpr DyadicInterval parent() const { return {scale + 1, position >> 1}; }
  constexpr DyadicInterval ancestor(int s) const {
    return {s, position >> (s - scale)};
  }
  constexpr DyadicInterval lower_half() const { return {scale - 1, 2 * position}; }
  constexpr DyadicInterval upper_half() const { return {scale - 1, 2 * position + 1}; }
  /// Whether [2^scale n, 2^scale (n+1)) lies inside [0, 2^e).
  constexpr bool inside_power(int e) const {
    if (position < 0) return false;
    if (scale > e) return false;
    return position < (std::int64_t{1} << (e - scale));
  }
};

/// A dyadic rectangle of arbitrary area 2^area_log2().
struct Rect {
  DyadicInterval time;
  DyadicInterval freq;

  constexpr auto operator<=>(const Rect&) const = default;

  constexpr int area_log2() const { return time.scale + freq.scale; }
  constexpr bool intersects(const Rect& o) const {
    return time.intersects(o.time) && freq.intersects(o.freq);
  }
  constexpr bool contains(const Rect& o) const {
    return time.contains(o.time) && freq.contains(o.freq);
  }

  /// [k, n, k', l] with I = [2^k n, 2^k(n+1)), w = [2^-k' l, 2^-k'(l+1)).
  std::array<std::int64_t, 4> quadruple() const {
    return {time.scale, time.position, -freq.scale, freq.position};
  }
  static Rect from_quadruple(const std::array<std::int64_t, 4>& q) {
    return {{static_cast<int>(q[0]), q[1]}, {static_cast<int>(-q[2]), q[3]}};
  }

  std::string to_string() const {
    const auto q = quadruple();
    return "[" + std::to_string(q[0]) + "," + std::to_string(q[1]) + "," +
           std::to_string(q[2]) + "," + std::to_string(q[3]) + "]";
  }
};

/// P <= Q iff I_P is inside I_Q and w_Q is inside w_P.
constexpr bool rect_le(const Rect& p, const Rect& q) {
  return q.time.contains(p.time) && p.freq.contains(q.freq);
}

/// A rectangle whose area is fixed at 2^AreaLog2.
template <int AreaLog2>
class FixedAreaRect {
 public:
  static constexpr int kAreaLog2 = AreaLog2;

  FixedAreaRect() : rect_{{0, 0}, {AreaLog2, 0}} {}
  explicit FixedAreaRect(const Rect& r) : rect_(r) {
    if (r.area_log2() != AreaLog2) {
      throw PreconditionFailed("rectangle " + r.to_string() + " has area 2^" +
                               std::to_string(r.area_log2()) + ", expected 2^" +
                               std::to_string(AreaLog2));
    }
    if (r.time.position < 0 || r.freq.position < 0) {
      throw PreconditionFailed("rectangle " + r.to_string() +
                               " leaves the first quadrant");
    }
  }
  /// Time interval [2^k n, 2^k (n+1)) and frequency index l at the implied scale.
  FixedAreaRect(int k, std::int64_t n, std::int64_t l)
      : FixedAreaRect(Rect{{k, n}, {AreaLog2 - k, l}}) {}

  const Rect& rect() const { return rect_; }
  // NOLINTNEXTLINE(google-explicit-constructor)
  operator const Rect&() const { return rect_; }
  const DyadicInterval& time() const { return rect_.time; }
  const DyadicInterval& freq() const { return rect_.freq; }
  int scale() const { return rect_.time.scale; }

  auto operator<=>(const FixedAreaRect&) const = default;

  std::string to_string() const { return rect_.to_string(); }

 private:
  Rect rect_;
};

using Tile = FixedAreaRect<0>;
using Bitile = FixedAreaRect<1>;

struct RectHash {
  std::size_t operator()(const Rect& r) const noexcept {
    std::size_t h = std::hash<std::int64_t>{}(r.time.position);
    auto mix = [&h](std::int64_t v) {
      h ^= std::hash<std::int64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    mix(r.time.scale);
    mix(r.freq.scale);
    mix(r.freq.position);
    return h;
  }
  template <int A>
  std::size_t operator()(const FixedAreaRect<A>& r) const noexcept {
    return (*this)(r.rect());
  }
};

using BitileSet = std::unordered_set<Bitile, RectHash>;
using TileSet = std::unordered_set<Tile, RectHash>;

template <class T>
std::vector<T> sorted(const std::unordered_set<T, RectHash>& s) {
  std::vector<T> out(s.begin(), s.end());
  std::sort(out.begin(), out.end());
  return out;
}

enum class BitilePart { upper, lower, left, right };

inline Tile split_bitile(const Bitile& p, BitilePart part) {
  const Rect& r = p.rect();
  switch (part) {
    case BitilePart::upper: return Tile(Rect{r.time, r.freq.upper_half()});
    case BitilePart::lower: return Tile(Rect{r.time, r.freq.lower_half()});
    case BitilePart::left: return Tile(Rect{r.time.lower_half(), r.freq});
    case BitilePart::right: return Tile(Rect{r.time.upper_half(), r.freq});
  }
  return {};
}

inline Tile upper(const Bitile& p) { return split_bitile(p, BitilePart::upper); }
inline Tile lower(const Bitile& p) { return split_bitile(p, BitilePart::lower); }

/// Frequency strip [0, 2^N), time window [0, 2^M), dilation parameter L and
/// step-function resolution r (cells of width 2^-r).
struct TileUniverse {
  int N = 0;
  int M = 0;
  int L = 2;
  int r = 2;

  void validate() const {
    if (N < 0 || M < 0) throw PreconditionFailed("universe exponents must be non-negative");
    if (L < 2) throw PreconditionFailed("dilation parameter L must be at least 2");
    if (r < N + L) {
      throw PreconditionFailed("resolution r=" + std::to_string(r) +
                               " must be at least N+L=" + std::to_string(N + L));
    }
    if (M + r > 30) throw ExponentOverflow("universe has more than 2^30 cells");
  }

  bool contains(const Bitile& p) const {
    return p.time().inside_power(M) && p.freq().inside_power(N);
  }
  /// Tiles of the dilated universe: frequencies below 2^(N+L).
  bool contains_dilated(const Rect& p) const {
    return p.time.inside_power(M) && p.freq.inside_power(N + L) && p.time.scale >= -r;
  }

  int min_bitile_scale() const { return 1 - N; }

  /// All bitiles with w inside [0, 2^N) and I inside [0, 2^M), sorted.
  std::vector<Bitile> bitiles() const {
    std::vector<Bitile> out;
    for (int k = 1 - N; k <= M; ++k) {
      const std::int64_t times = std::int64_t{1} << (M - k);
      const std::int64_t freqs = std::int64_t{1} << (N - 1 + k);
      for (std::int64_t n = 0; n < times; ++n)
        for (std::int64_t l = 0; l < freqs; ++l) out.emplace_back(k, n, l);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// All tiles with w inside [0, 2^N) and I inside [0, 2^M).
  std::vector<Tile> strip_tiles() const {
    std::vector<Tile> out;
    for (int k = -N; k <= M; ++k) {
      const std::int64_t times = std::int64_t{1} << (M - k);
      const std::int64_t freqs = std::int64_t{1} << (N + k);
      for (std::int64_t n = 0; n < times; ++n)
        for (std::int64_t l = 0; l < freqs; ++l) out.emplace_back(k, n, l);
    }
    return out;
  }
};

/// 2^L S: each I x [a,b) maps to I x [2^L a, 2^L b). When a universe is
/// given, results must stay below frequency 2^(N+L).
inline std::vector<Rect> dilate(std::span<const Rect> rects, int L,
                                const TileUniverse* universe = nullptr) {
  if (L < 0) throw PreconditionFailed("dilation exponent must be non-negative");
  std::vector<Rect> out;
  out.reserve(rects.size());
  for (const Rect& r : rects) {
    Rect d{r.time, {r.freq.scale + L, r.freq.position}};
    if (universe && !d.freq.inside_power(universe->N + universe->L)) {
      throw OutsideUniverse("dilated rectangle " + d.to_string() +
                            " exceeds frequency 2^(N+L)");
    }
    out.push_back(d);
  }
  return out;
}

inline Rect dilate(const Rect& r, int L) { return dilate(std::span<const Rect>(&r, 1), L)[0]; }

/// The 2^j tiles I' x w_R with |I'| = 2^-j |I_R| partitioning R, in time order.
inline std::vector<Tile> minimal_tiles(const Rect& r) {
  const int j = r.area_log2();
  if (j < 0) throw PreconditionFailed("rectangle " + r.to_string() + " has area below one");
  if (j > 30) throw ExponentOverflow("rectangle too large to enumerate");
  std::vector<Tile> out;
  out.reserve(std::size_t{1} << j);
  const std::int64_t count = std::int64_t{1} << j;
  for (std::int64_t i = 0; i < count; ++i) {
    out.emplace_back(Rect{{r.time.scale - j, (r.time.position << j) + i}, r.freq});
  }
  return out;
}

/// The 2^j tiles I_R x w' stacked in frequency, in frequency order.
inline std::vector<Tile> column_tiles(const Rect& r) {
  const int j = r.area_log2();
  if (j < 0) throw PreconditionFailed("rectangle " + r.to_string() + " has area below one");
  if (j > 30) throw ExponentOverflow("rectangle too large to enumerate");
  std::vector<Tile> out;
  const std::int64_t count = std::int64_t{1} << j;
  for (std::int64_t i = 0; i < count; ++i) {
    out.emplace_back(Rect{r.time, {r.freq.scale - j, (r.freq.position << j) + i}});
  }
  return out;
}

namespace detail {

/// Bitiles strictly between p (below) and q (above), one per intermediate scale.
template <class F>
void for_each_between(const Bitile& p, const Bitile& q, F&& f) {
  for (int k = p.scale() + 1; k < q.scale(); ++k) {
    const DyadicInterval time = p.time().ancestor(k);
    const DyadicInterval freq = q.freq().ancestor(1 - k);
    f(Bitile(Rect{time, freq}));
  }
}

}  // namespace detail

/// True iff every bitile between two members is itself a member.
inline bool is_convex(const BitileSet& s) {
  for (const Bitile& p : s) {
    for (const Bitile& q : s) {
      if (q.scale() <= p.scale() + 1 || !rect_le(p, q)) continue;
      bool ok = true;
      detail::for_each_between(p, q, [&](const Bitile& mid) {
        if (ok && !s.contains(mid)) ok = false;
      });
      if (!ok) return false;
    }
  }
  return true;
}

/// Disjoint tiling of the union of a convex set, without the convexity check.
///
/// Processing bitiles by decreasing time length, a half of P is already
/// covered exactly when the bitile (parent of I_P) x (that half of w_P) is
/// in the set; otherwise the half is disjoint from everything emitted so far.
inline std::vector<Tile> tile_convex_union_unchecked(const BitileSet& s) {
  std::vector<Tile> out;
  out.reserve(2 * s.size());
  for (const Bitile& p : sorted(s)) {
    const DyadicInterval parent_time = p.time().parent();
    const Tile up = upper(p);
    const Tile down = lower(p);
    if (!s.contains(Bitile(Rect{parent_time, up.freq()}))) out.push_back(up);
    if (!s.contains(Bitile(Rect{parent_time, down.freq()}))) out.push_back(down);
  }
  return out;
}

inline std::vector<Tile> convex_union_tiling(const BitileSet& s) {
  if (!is_convex(s)) throw PreconditionFailed("bitile collection is not convex");
  return tile_convex_union_unchecked(s);
}

/// Whether the tiles are pairwise disjoint.
inline bool pairwise_disjoint(std::span<const Tile> tiles, std::pair<Tile, Tile>* witness = nullptr) {
  // Same-area rectangles intersect iff they are comparable; bucket by time
  // interval ancestors would be faster, but the quadratic scan is cheap here.
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    for (std::size_t j = i + 1; j < tiles.size(); ++j) {
      if (tiles[i].rect().intersects(tiles[j].rect())) {
        if (witness) *witness = {tiles[i], tiles[j]};
        return false;
      }
    }
  }
  return true;
}

/// Area of the union of a set of rectangles, by counting phase-space cells
/// of size 2^time_res x 2^freq_res. Used to check tilings.
inline std::int64_t covered_cells(std::span<const Rect> rects, int time_res, int freq_res) {
  std::unordered_set<std::pair<std::int64_t, std::int64_t>,
                     decltype([](const std::pair<std::int64_t, std::int64_t>& p) {
                       return std::hash<std::int64_t>{}(p.first * 1000003 + p.second);
                     })>
      cells;
  for (const Rect& r : rects) {
    if (r.time.scale < time_res || r.freq.scale < freq_res) {
      throw PreconditionFailed("cell resolution too coarse for " + r.to_string());
    }
    const std::int64_t nt = std::int64_t{1} << (r.time.scale - time_res);
    const std::int64_t nf = std::int64_t{1} << (r.freq.scale - freq_res);
    for (std::int64_t a = 0; a < nt; ++a)
      for (std::int64_t b = 0; b < nf; ++b)
        cells.insert({(r.time.position << (r.time.scale - time_res)) + a,
                      (r.freq.position << (r.freq.scale - freq_res)) + b});
  }
  return static_cast<std::int64_t>(cells.size());
}

template <class T>
std::vector<Rect> as_rects(std::span<const T> items) {
  std::vector<Rect> out;
  out.reserve(items.size());
  for (const auto& t : items) out.push_back(static_cast<const Rect&>(t));
  return out;
}

}  // namespace walshqf
