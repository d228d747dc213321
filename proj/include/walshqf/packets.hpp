#pragma once

// Walsh wave packets, coefficients and phase-plane projections.
//
// Packets are kept L-infinity normalized: 𝓌_p = |I_p|^{1/2} w_p takes the
// values +1/-1 on I_p and 0 elsewhere, so the whole pipeline stays dyadic.
// In this normalization the defining recursion reads
//     𝓌_{P_u} = 𝓌_{P_left} - 𝓌_{P_right},   𝓌_{P_d} = 𝓌_{P_left} + 𝓌_{P_right},
// and solving for the halves gives (in L2 normalization)
//     w_{P_left} = (w_{P_u} + w_{P_d})/√2,   w_{P_right} = (w_{P_d} - w_{P_u})/√2.

#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/step_function.hpp"

namespace walshqf {

/// Memo table of packet sign patterns on the cells of I_p. Concurrent reads,
/// exclusive writes.
class PacketCache {
 public:
  using Signs = std::shared_ptr<const std::vector<std::int8_t>>;

  static PacketCache& global() {
    static PacketCache cache;
    return cache;
  }

  /// Values of 𝓌_p on the 2^(k+resolution) cells of I_p.
  Signs signs(const Tile& p, int resolution) {
    if (!p.freq().inside_power(resolution)) {
      throw ResolutionMismatch("packet " + p.to_string() +
                               " is not constant on cells of width 2^-" +
                               std::to_string(resolution));
    }
    const Key key{p.rect(), resolution};
    {
      std::shared_lock lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    Signs built = build(p, resolution);
    std::unique_lock lock(mutex_);
    return memo_.emplace(key, std::move(built)).first->second;
  }

  /// Fault injection: flip the sign of one cell of a memoized packet.
  void corrupt(const Tile& p, int resolution, std::size_t cell) {
    auto table = std::make_shared<std::vector<std::int8_t>>(*signs(p, resolution));
    (*table)[cell] = static_cast<std::int8_t>(-(*table)[cell]);
    std::unique_lock lock(mutex_);
    memo_[Key{p.rect(), resolution}] = std::move(table);
  }

  void clear() {
    std::unique_lock lock(mutex_);
    memo_.clear();
  }

 private:
  struct Key {
    Rect tile;
    int resolution;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return RectHash{}(k.tile) * 31 + static_cast<std::size_t>(k.resolution);
    }
  };

  Signs build(const Tile& p, int resolution) {
    const int k = p.scale();
    if (k + resolution < 0) throw ResolutionMismatch("tile shorter than a cell");
    const std::size_t cells = std::size_t{1} << (k + resolution);
    const std::int64_t l = p.freq().position;
    if (l == 0) return std::make_shared<const std::vector<std::int8_t>>(cells, std::int8_t{1});
    // p is the upper (l odd) or lower (l even) tile of the bitile
    // I_p x parent(w_p); its halves carry the parent frequency interval.
    const DyadicInterval parent_freq = p.freq().parent();
    const Tile left(Rect{p.time().lower_half(), parent_freq});
    const Tile right(Rect{p.time().upper_half(), parent_freq});
    const Signs a = signs(left, resolution);
    const Signs b = signs(right, resolution);
    auto out = std::make_shared<std::vector<std::int8_t>>(cells);
    const std::int8_t s = (l & 1) ? -1 : 1;
    std::copy(a->begin(), a->end(), out->begin());
    for (std::size_t i = 0; i < b->size(); ++i) (*out)[a->size() + i] = static_cast<std::int8_t>(s * (*b)[i]);
    return out;
  }

  mutable std::shared_mutex mutex_;
  std::unordered_map<Key, Signs, KeyHash> memo_;
};

/// 𝓌_p as a step function at the universe resolution.
inline StepFunction packet_eval(const Tile& p, const TileUniverse& universe,
                                PacketCache& cache = PacketCache::global()) {
  if (!universe.contains_dilated(p.rect())) {
    throw OutsideUniverse("tile " + p.to_string() + " outside the dilated universe");
  }
  StepFunction f(universe.r, universe.M);
  const auto signs = cache.signs(p, universe.r);
  const auto [first, count] = f.cell_range(p.time());
  for (std::size_t i = 0; i < count; ++i) f[first + i] = DyadicRational((*signs)[i]);
  return f;
}

namespace detail {

inline void check_pairing(const StepFunction& f, const Tile& p) {
  if (!p.time().inside_power(f.support())) {
    throw OutsideUniverse("tile " + p.to_string() + " outside the support window");
  }
  if (!p.freq().inside_power(f.resolution())) {
    throw ResolutionMismatch("step function at resolution " + std::to_string(f.resolution()) +
                             " cannot resolve packet " + p.to_string());
  }
}

}  // namespace detail

/// <f, 𝓌_p> = int f 𝓌_p, by cell summation.
inline DyadicRational coefficient(const StepFunction& f, const Tile& p,
                                  PacketCache& cache = PacketCache::global()) {
  detail::check_pairing(f, p);
  const auto signs = cache.signs(p, f.resolution());
  const auto [first, count] = f.cell_range(p.time());
  DyadicAccumulator acc;
  for (std::size_t i = 0; i < count; ++i) {
    if ((*signs)[i] > 0) acc.add(f[first + i]);
    else acc.subtract(f[first + i]);
  }
  return acc.value().shifted(-f.resolution());
}

/// sum_p |I_p|^-1 <f,𝓌_p> 𝓌_p without the disjointness check.
inline StepFunction projection_unchecked(const StepFunction& f, std::span<const Tile> tiles,
                                         PacketCache& cache = PacketCache::global()) {
  StepFunction out(f.resolution(), f.support());
  for (const Tile& p : tiles) {
    const DyadicRational c = coefficient(f, p, cache).shifted(-p.scale());
    if (c.is_zero()) continue;
    const auto signs = cache.signs(p, f.resolution());
    const auto [first, count] = out.cell_range(p.time());
    const DyadicRational neg = -c;
    for (std::size_t i = 0; i < count; ++i) out[first + i] += (*signs)[i] > 0 ? c : neg;
  }
  return out;
}

/// Orthogonal projection onto the span of the packets of pairwise disjoint tiles.
inline StepFunction projection(const StepFunction& f, std::span<const Tile> tiles,
                               PacketCache& cache = PacketCache::global()) {
  std::pair<Tile, Tile> witness;
  if (!pairwise_disjoint(tiles, &witness)) {
    throw PreconditionFailed("overlapping tiles " + witness.first.to_string() + " and " +
                             witness.second.to_string());
  }
  return projection_unchecked(f, tiles, cache);
}

enum class RegionTiling {
  minimal,  ///< each rectangle cut into tiles of shortest time interval
  column    ///< each rectangle cut into tiles sharing its time interval
};

/// Tiles a union of pairwise disjoint dyadic rectangles of area >= 1.
inline std::vector<Tile> tile_region(std::span<const Rect> rects, RegionTiling how) {
  for (std::size_t i = 0; i < rects.size(); ++i) {
    if (rects[i].area_log2() < 0) {
      throw PreconditionFailed("rectangle " + rects[i].to_string() + " cannot be tiled");
    }
    for (std::size_t j = i + 1; j < rects.size(); ++j) {
      if (rects[i].intersects(rects[j])) {
        throw PreconditionFailed("region rectangles " + rects[i].to_string() + " and " +
                                 rects[j].to_string() + " overlap");
      }
    }
  }
  std::vector<Tile> out;
  for (const Rect& r : rects) {
    auto part = how == RegionTiling::minimal ? minimal_tiles(r) : column_tiles(r);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

/// Pi_S f for S a disjoint union of rectangles; independent of `how`.
inline StepFunction region_projection(const StepFunction& f, std::span<const Rect> rects,
                                      RegionTiling how = RegionTiling::minimal,
                                      PacketCache& cache = PacketCache::global()) {
  const auto tiles = tile_region(rects, how);
  return projection_unchecked(f, tiles, cache);
}

inline StepFunction region_projection(const StepFunction& f, const Rect& rect,
                                      RegionTiling how = RegionTiling::minimal,
                                      PacketCache& cache = PacketCache::global()) {
  return region_projection(f, std::span<const Rect>(&rect, 1), how, cache);
}

/// f resampled at resolution >= r so that packets up to frequency 2^r pair with it.
inline StepFunction at_resolution(const StepFunction& f, int r) {
  return f.resolution() >= r ? f : f.refined(r);
}

// ---------------------------------------------------------------------------
// Fast packet transform.
//
// For f at resolution g with integer cell mantissas F_i (f_i = F_i 2^e),
// level t holds C_t[n 2^t + l] for the tile with time interval of length
// 2^(t-g) at position n and frequency index l, and
//     <f, 𝓌_p> = C 2^(e-g).
// Level t is obtained from t-1 through the packet recursion: the lower and
// upper children are the sum and difference of the left and right halves.
// ---------------------------------------------------------------------------

struct IntegerCells {
  std::vector<BigInt> mantissas;
  long long exponent = 0;
  BigInt abs_sum = 0;
};

inline IntegerCells integer_cells(const StepFunction& f) {
  IntegerCells out;
  bool any = false;
  long long e = 0;
  for (const auto& v : f.values()) {
    if (v.is_zero()) continue;
    e = any ? std::min<long long>(e, v.exponent()) : v.exponent();
    any = true;
  }
  out.exponent = e;
  out.mantissas.reserve(f.size());
  for (const auto& v : f.values()) {
    out.mantissas.push_back(v.is_zero() ? BigInt(0) : BigInt(v.mantissa() << (v.exponent() - e)));
    out.abs_sum += boost::multiprecision::abs(out.mantissas.back());
  }
  return out;
}

template <class Int>
class BasicPacketTable {
 public:
  struct Coef {
    Int mantissa{};
    long long exponent = 0;
  };

  BasicPacketTable(const IntegerCells& cells, int resolution, int support)
      : resolution_(resolution), support_(support), exponent_(cells.exponent) {
    const int depth = resolution + support;
    const std::size_t n = std::size_t{1} << depth;
    levels_.resize(depth + 1);
    levels_[0].resize(n);
    for (std::size_t i = 0; i < n; ++i) levels_[0][i] = static_cast<Int>(cells.mantissas[i]);
    for (int t = 1; t <= depth; ++t) {
      const auto& prev = levels_[t - 1];
      auto& cur = levels_[t];
      cur.resize(n);
      const std::size_t half = std::size_t{1} << (t - 1);
      const std::size_t width = half << 1;
      for (std::size_t base = 0; base < n; base += width) {
        for (std::size_t l = 0; l < half; ++l) {
          const Int& a = prev[base + l];
          const Int& b = prev[base + half + l];
          cur[base + 2 * l] = a + b;
          cur[base + 2 * l + 1] = a - b;
        }
      }
    }
  }

  int resolution() const { return resolution_; }
  int support() const { return support_; }

  /// Coefficient of an arbitrary tile inside the support window.
  Coef coefficient(const Rect& tile) const {
    const int t = tile.time.scale + resolution_;
    const std::int64_t l = tile.freq.position;
    if (t < 0) {
      // I_p shorter than a cell: f is constant there, so only the l = 0
      // packet (the indicator of I_p) sees it.
      if (l != 0) return {};
      const std::size_t cell = static_cast<std::size_t>(tile.time.position >> (-t));
      return {levels_[0][cell], exponent_ + tile.time.scale};
    }
    if (l >= (std::int64_t{1} << t)) return {};
    const std::size_t idx = (static_cast<std::size_t>(tile.time.position) << t) + static_cast<std::size_t>(l);
    return {levels_[t][idx], exponent_ - resolution_};
  }

  DyadicRational coefficient_value(const Rect& tile) const {
    const Coef c = coefficient(tile);
    return to_dyadic(c.mantissa, c.exponent);
  }

  /// ||Pi_R f||^2 for a rectangle of area >= 1, via its minimal tiles.
  DyadicRational rect_energy(const Rect& r) const {
    const int j = r.area_log2();
    if (j < 0) throw PreconditionFailed("rectangle " + r.to_string() + " cannot be tiled");
    const int k = r.time.scale - j;  // minimal tile time scale
    const int t = k + resolution_;
    const std::int64_t l = r.freq.position;
    const std::int64_t count = std::int64_t{1} << j;
    const std::int64_t first = r.time.position << j;
    long long exponent = 0;
    Accum sum{};
    if (t < 0) {
      if (l != 0) return {};
      exponent = 2 * (exponent_ + k);
      for (std::int64_t i = 0; i < count; ++i) {
        const Int& c = levels_[0][static_cast<std::size_t>((first + i) >> (-t))];
        sum += static_cast<Accum>(c) * static_cast<Accum>(c);
      }
    } else {
      if (l >= (std::int64_t{1} << t)) return {};
      exponent = 2 * (exponent_ - resolution_);
      const auto& level = levels_[t];
      for (std::int64_t i = 0; i < count; ++i) {
        const Int& c = level[(static_cast<std::size_t>(first + i) << t) + static_cast<std::size_t>(l)];
        sum += static_cast<Accum>(c) * static_cast<Accum>(c);
      }
    }
    // |I_q|^-1 = 2^-k
    return to_dyadic(sum, exponent - k);
  }

 private:
  using Accum = std::conditional_t<std::is_same_v<Int, std::int64_t>, __int128, BigInt>;

  template <class V>
  static DyadicRational to_dyadic(const V& v, long long e) {
    if constexpr (std::is_same_v<V, __int128>) return DyadicRational::from_int128(v, e);
    else if constexpr (std::is_same_v<V, std::int64_t>) return DyadicRational(BigInt(v), e);
    else return DyadicRational(BigInt(v), e);
  }

  int resolution_;
  int support_;
  long long exponent_;
  std::vector<std::vector<Int>> levels_;
};

/// Packet table that picks 64-bit integers when no intermediate can overflow
/// and arbitrary precision otherwise.
class PacketTable {
 public:
  explicit PacketTable(const StepFunction& f) : table_(make(f)) {}

  DyadicRational coefficient(const Rect& tile) const {
    return std::visit([&](const auto& t) { return t.coefficient_value(tile); }, table_);
  }
  DyadicRational rect_energy(const Rect& r) const {
    return std::visit([&](const auto& t) { return t.rect_energy(r); }, table_);
  }

  template <class F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), table_);
  }

 private:
  using Variant = std::variant<BasicPacketTable<std::int64_t>, BasicPacketTable<BigInt>>;

  static Variant make(const StepFunction& f) {
    const IntegerCells cells = integer_cells(f);
    // |C| <= sum |F|, and a sum of squares over one level is at most 2^30 (sum |F|)^2 < 2^126.
    if (cells.abs_sum < (BigInt(1) << 48)) {
      return Variant(std::in_place_index<0>, cells, f.resolution(), f.support());
    }
    return Variant(std::in_place_index<1>, cells, f.resolution(), f.support());
  }

  Variant table_;
};

}  // namespace walshqf
