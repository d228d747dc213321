#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "oracle.hpp"
#include "walshqf/harness.hpp"

using namespace walshqf;

namespace {
Rect R(int k, std::int64_t n, int kp, std::int64_t l) { return Rect::from_quadruple({k, n, kp, l}); }
}  // namespace

TEST_CASE("split_bitile examples", "[geometry]") {
  const Bitile p(R(0, 0, -1, 0));
  CHECK(split_bitile(p, BitilePart::lower).rect() == R(0, 0, 0, 0));
  CHECK(split_bitile(p, BitilePart::upper).rect() == R(0, 0, 0, 1));
  CHECK(split_bitile(p, BitilePart::left).rect() == R(-1, 0, -1, 0));
  CHECK(split_bitile(p, BitilePart::right).rect() == R(-1, 1, -1, 0));
}

TEST_CASE("construction rejects wrong areas and negative positions", "[geometry]") {
  CHECK_THROWS_AS(Tile(R(0, 0, -1, 0)), PreconditionFailed);
  CHECK_THROWS_AS(Bitile(R(0, 0, 0, 0)), PreconditionFailed);
  CHECK_THROWS_AS(Tile(R(0, -1, 0, 0)), PreconditionFailed);
}

TEST_CASE("rect_le examples", "[geometry]") {
  CHECK(rect_le(R(0, 0, -1, 0), R(1, 0, 0, 0)));
  CHECK_FALSE(rect_le(R(0, 0, -1, 0), R(1, 1, 0, 0)));
}

TEST_CASE("same-area rectangles are comparable iff they intersect", "[geometry]") {
  const auto all = oracle::all_bitiles(3, 2);
  for (const auto& a : all)
    for (const auto& b : all) {
      const bool comparable = rect_le(a, b) || rect_le(b, a);
      CHECK(comparable == a.rect().intersects(b.rect()));
      CHECK(rect_le(a, b) == oracle::le(a, b));
    }
}

TEST_CASE("order is a partial order", "[geometry][property]") {
  const auto all = oracle::all_bitiles(2, 2);
  for (const auto& a : all) {
    CHECK(rect_le(a, a));
    for (const auto& b : all) {
      if (rect_le(a, b) && rect_le(b, a)) CHECK(a == b);
      for (const auto& c : all)
        if (rect_le(a, b) && rect_le(b, c)) CHECK(rect_le(a, c));
    }
  }
}

TEST_CASE("dilate examples", "[geometry]") {
  CHECK(dilate(R(0, 0, 0, 1), 2) == R(0, 0, -2, 1));
  CHECK(dilate(R(0, 0, 0, 1), 0) == R(0, 0, 0, 1));
  CHECK(dilate(R(1, 0, 0, 0), 1) == R(1, 0, -1, 0));
  const Rect r = dilate(R(0, 0, 0, 1), 2);
  CHECK(r.freq.left() == DyadicRational(4));
  CHECK(r.freq.right() == DyadicRational(8));
  const TileUniverse u{1, 0, 2, 3};
  const Rect rects[] = {R(0, 0, -1, 1)};
  CHECK_THROWS_AS(dilate(rects, 2, &u), OutsideUniverse);
}

TEST_CASE("minimal_tiles examples", "[geometry]") {
  const auto four = minimal_tiles(R(0, 0, -2, 0));
  REQUIRE(four.size() == 4);
  for (int j = 0; j < 4; ++j) CHECK(four[j].rect() == R(-2, j, -2, 0));
  const auto one = minimal_tiles(R(0, 0, 0, 3));
  REQUIRE(one.size() == 1);
  CHECK(one[0].rect() == R(0, 0, 0, 3));

  // enumerate every tile inside [0,2)x[0,2) and keep those of minimal length
  const Rect big = R(1, 0, -1, 0);
  std::vector<Rect> inside;
  int shortest = 99;
  for (int k = -4; k <= 1; ++k)
    for (std::int64_t n = 0; n < (std::int64_t{1} << (1 - k)); ++n)
      for (std::int64_t l = 0; l < (std::int64_t{1} << (1 + k)); ++l) {
        const Rect t{{k, n}, {-k, l}};
        if (big.contains(t)) {
          inside.push_back(t);
          shortest = std::min(shortest, k);
        }
      }
  std::vector<Rect> expect;
  for (const Rect& t : inside)
    if (t.time.scale == shortest) expect.push_back(t);
  std::sort(expect.begin(), expect.end());
  const auto got = minimal_tiles(big);
  std::vector<Rect> got_rects(got.begin(), got.end());
  std::sort(got_rects.begin(), got_rects.end());
  CHECK(got_rects == expect);
  CHECK(got.size() == 4);
  CHECK(covered_cells(std::span<const Rect>(got_rects), -3, -3) == covered_cells(std::span<const Rect>(&big, 1), -3, -3));
}

TEST_CASE("is_convex examples and brute force", "[geometry]") {
  CHECK(is_convex(BitileSet{}));
  CHECK(is_convex(BitileSet{Bitile(R(0, 0, -1, 0))}));
  const BitileSet gap{Bitile(R(0, 0, -1, 0)), Bitile(R(2, 0, 1, 0))};
  CHECK_FALSE(is_convex(gap));
  CHECK_FALSE(oracle::convex(std::vector<Bitile>(gap.begin(), gap.end()), 2, 2));
  BitileSet filled = gap;
  filled.insert(Bitile(R(1, 0, 0, 0)));
  CHECK(is_convex(filled));

  std::mt19937_64 rng(11);
  const auto all = oracle::all_bitiles(2, 2);
  for (int trial = 0; trial < 300; ++trial) {
    BitileSet s;
    std::vector<Bitile> v;
    for (const auto& p : all)
      if (rng() % 4 == 0) {
        s.insert(p);
        v.push_back(p);
      }
    CHECK(is_convex(s) == oracle::convex(v, 2, 2));
  }
}

TEST_CASE("convex_union_tiling", "[geometry]") {
  const Bitile p(R(0, 0, -1, 0));
  const auto one = convex_union_tiling(BitileSet{p});
  std::set<Rect> got(one.begin(), one.end());
  CHECK(got == std::set<Rect>{R(0, 0, 0, 0), R(0, 0, 0, 1)});
  CHECK(convex_union_tiling(BitileSet{}).empty());
  CHECK_THROWS_AS(convex_union_tiling(BitileSet{Bitile(R(0, 0, -1, 0)), Bitile(R(2, 0, 1, 0))}), PreconditionFailed);

  Rng rng = make_rng(5);
  const TileUniverse u{3, 2, 2, 5};
  for (int trial = 0; trial < 100; ++trial) {
    const BitileSet s = random_convex_collection(rng, u);
    const auto tiles = convex_union_tiling(s);
    CHECK(pairwise_disjoint(tiles));
    const auto bitile_rects = as_rects(std::span<const Bitile>(sorted(s)));
    const auto tile_rects = as_rects(std::span<const Tile>(tiles));
    CHECK(covered_cells(tile_rects, -4, -3) == covered_cells(bitile_rects, -4, -3));
    CHECK(static_cast<std::int64_t>(tiles.size()) << 7 == covered_cells(tile_rects, -4, -3));
  }
}

TEST_CASE("tree_tiling examples", "[geometry]") {
  const Bitile top(R(0, 0, -1, 0));
  const auto t1 = tree_tiling(Tree(top, {top}));
  CHECK(std::set<Rect>(t1.begin(), t1.end()) == std::set<Rect>{R(0, 0, 0, 0), R(0, 0, 0, 1)});

  const Bitile low(R(-1, 0, -2, 0));
  const Tree t(top, {top, low});
  CHECK(tree_split(t).lower.contains(low));
  const auto t2 = tree_tiling(t);
  CHECK(std::set<Rect>(t2.begin(), t2.end()) == std::set<Rect>{R(0, 0, 0, 0), R(0, 0, 0, 1), R(-1, 0, -1, 1)});
}

TEST_CASE("tree_tiling agrees with convex_union_tiling on random trees", "[geometry][property]") {
  Rng rng = make_rng(9);
  const TileUniverse u{3, 2, 2, 5};
  for (int trial = 0; trial < 100; ++trial) {
    const Tree t = random_tree(rng, u);
    REQUIRE(t.is_convex());
    const auto a = tree_tiling(t);
    const auto b = convex_union_tiling(t.members());
    CHECK(pairwise_disjoint(a));
    const auto ra = as_rects(std::span<const Tile>(a));
    const auto rb = as_rects(std::span<const Tile>(b));
    CHECK(covered_cells(ra, -4, -3) == covered_cells(rb, -4, -3));
    CHECK(a.size() == b.size());
  }
}

TEST_CASE("universe validation", "[geometry]") {
  CHECK_THROWS_AS((TileUniverse{2, 2, 2, 3}.validate()), PreconditionFailed);
  CHECK_THROWS_AS((TileUniverse{2, 2, 1, 8}.validate()), PreconditionFailed);
  CHECK_NOTHROW((TileUniverse{2, 2, 2, 4}.validate()));
  CHECK(TileUniverse{2, 1, 2, 4}.bitiles().size() == oracle::all_bitiles(2, 1).size());
}
