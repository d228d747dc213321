#include <catch2/catch_amalgamated.hpp>

#include "contract.hpp"
#include "oracle.hpp"
#include "walshqf/harness.hpp"

using namespace walshqf;

namespace {
Rect R(int k, std::int64_t n, int kp, std::int64_t l) { return Rect::from_quadruple({k, n, kp, l}); }
DyadicRational d(long long m, long long e) { return DyadicRational(BigInt(m), e); }

/// Largest k in [0, 6] whose precondition holds, or -1.
int admissible_k(const BitileSet& s, const StepFunction& f, int L, Rng& rng) {
  const DyadicRational size = size_sq(s, f, L);
  int top = -1;
  for (int k = 0; k <= 6; ++k)
    if (size <= DyadicRational::pow2(-2 * k)) top = k;
  return top < 0 ? -1 : static_cast<int>(uniform(rng, 0, top));
}
}  // namespace

TEST_CASE("select_trees examples", "[decomposition]") {
  const Bitile p(R(0, 0, -1, 0));
  const auto one = StepFunction::indicator({0, 0}, 3, 0);
  const Selection sel = select_trees({p}, one, 0, 0);
  REQUIRE(sel.forest.trees.size() == 1);
  CHECK(sel.phases[0] == SelectionPhase::single_bitile);
  CHECK(sel.remainder.empty());

  const Selection none = select_trees({p}, StepFunction(3, 0), 0, 2);
  CHECK(none.forest.trees.empty());
  CHECK(none.remainder == BitileSet{p});

  CHECK_THROWS_AS(select_trees({p}, one, 1, 0), PreconditionFailed);
  CHECK_THROWS_AS(select_trees({Bitile(R(0, 0, -1, 0)), Bitile(R(2, 0, 1, 0))}, StepFunction(3, 2), 0, 0),
                  PreconditionFailed);
}

TEST_CASE("select_trees contract on random instances", "[decomposition][property]") {
  Rng rng = make_rng(41);
  int checked = 0;
  for (int L : {0, 2, 3}) {
    const TileUniverse u{3, 2, std::max(L, 2), 3 + std::max(L, 2)};
    for (int trial = 0; trial < 25; ++trial) {
      const BitileSet s = random_convex_collection(rng, u);
      const auto f = random_step_function(rng, full_set(u.r, u.M),
                                          trial % 3 ? FillMode::signed_dyadic : FillMode::indicator);
      const int k = admissible_k(s, f, L, rng);
      if (k < 0) continue;
      for (TieBreak tie : {TieBreak::standard, TieBreak::alternate}) {
        const auto result = contract::check_selection(s, f, k, L, select_trees(s, f, k, L, tie));
        INFO(result.why);
        CHECK(result.ok);
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("full_decomposition", "[decomposition]") {
  const TileUniverse u{2, 1, 2, 4};
  const auto all = universe_set(u);
  const auto zero = full_decomposition(all, StepFunction(4, 1), 2, 5);
  REQUIRE(zero.levels.size() == 1);
  CHECK(zero.levels[0].forest.trees.empty());
  CHECK(zero.final_remainder() == all);

  Rng rng = make_rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const BitileSet s = random_convex_collection(rng, TileUniverse{3, 2, 2, 5});
    const auto f = random_step_function(rng, full_set(5, 2), FillMode::signed_dyadic);
    const auto trace = full_decomposition(s, f, 2, 6);
    BitileSet seen;
    for (const auto& level : trace.levels) {
      for (const auto& t : level.forest.trees)
        for (const auto& p : t.members()) CHECK(seen.insert(p).second);
      CHECK(is_convex(level.remainder));
      CHECK(size_sq(level.remainder, f, 2) <= DyadicRational::pow2(-2 * (level.k + 1)));
    }
    for (const auto& p : trace.final_remainder()) CHECK(seen.insert(p).second);
    CHECK(seen == s);
    if (trace.levels.size() > 1)
      for (std::size_t i = 1; i < trace.levels.size(); ++i) CHECK(trace.levels[i].k == trace.levels[i - 1].k + 1);
  }
}

TEST_CASE("decomposition additivity", "[decomposition][property]") {
  Rng rng = make_rng(43);
  const auto res = check_additivity(TileUniverse{3, 2, 2, 5}, rng, 15);
  INFO(res.witness);
  CHECK(res.passed);
}

TEST_CASE("size_level", "[decomposition]") {
  CHECK(size_level(DyadicRational(1)) == 0);
  CHECK(size_level(d(1, -2)) == 1);
  CHECK(size_level(d(3, -4)) == 1);
  CHECK(size_level(d(1, -5)) == 2);
  CHECK(size_level(DyadicRational(5)) == -2);
}

TEST_CASE("dyadic maximal function", "[decomposition]") {
  const auto f = StepFunction::indicator({0, 0}, 0, 2);
  const auto m = dyadic_maximal_pow(f, 1, 1);
  CHECK(m.values() == std::vector<DyadicRational>{1, d(1, -1), d(1, -2), d(1, -2)});

  StepFunction c(2, 1);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = d(1, -2);
  const auto mc = dyadic_maximal_pow(c, 3, 2);
  for (const auto& v : mc.values()) CHECK(v == d(1, -3));

  // M_2(1_[0,1)) > 2^10 means M(1_[0,1)) > 2^20: never
  const auto m2 = dyadic_maximal_pow(StepFunction::indicator({0, 0}, 2, 2), 2, 1);
  for (const auto& v : m2.values()) CHECK(v <= DyadicRational::pow2(20));

  StepFunction three(0, 0, {DyadicRational(3)});
  CHECK_THROWS_AS(dyadic_maximal_pow(three, 1, 2), PreconditionFailed);

  // against averages over every dyadic ancestor
  Rng rng = make_rng(44);
  const auto g = random_step_function(rng, full_set(3, 2), FillMode::signed_dyadic);
  const auto mg = dyadic_maximal_pow(g, 2, 1);
  const auto gq = oracle::from(g);
  for (std::size_t x = 0; x < gq.v.size(); ++x) {
    oracle::Q best = 0;
    for (std::size_t w = 1; w <= gq.v.size(); w *= 2) {
      const std::size_t first = x / w * w;
      oracle::Q avg = 0;
      for (std::size_t i = first; i < first + w; ++i) avg += gq.v[i] * gq.v[i];
      best = std::max(best, avg / oracle::Q(w));
    }
    CHECK(oracle::to_q(mg[x]) == best);
  }
}

TEST_CASE("exceptional sets", "[decomposition]") {
  // E1 = [0,1): M_2(1_E1 / |E1|^(1/2)) <= 1
  DyadicSet e1(4, 2);
  e1.insert({0, 0});
  const auto f = exceptional_set({{e1, Rational(2), Rational(1, 2)}}, 4, 2);
  CHECK(f.set.measure().is_zero());
  CHECK(f.intervals.empty());
  CHECK(major_subset(e1, f) == e1);

  // a single cell of width 2^-12 is far above the threshold near itself
  DyadicSet tiny(12, 1);
  tiny.insert({-12, 5});
  const auto g = exceptional_set({{tiny, Rational(6, 5), Rational(1)}}, 12, 1);
  CHECK(tiny.is_subset_of(g.set));
  CHECK(g.measure().shifted(1) < DyadicRational(1));
  for (std::size_t i = 0; i < g.intervals.size(); ++i)
    for (std::size_t j = i + 1; j < g.intervals.size(); ++j) CHECK_FALSE(g.intervals[i].intersects(g.intervals[j]));
  for (const auto& i : g.intervals) {
    CHECK(g.set.contains(i));
    if (i.scale < 1) CHECK_FALSE(g.set.contains(i.parent()));
  }
  CHECK_THROWS_AS(exceptional_set({{tiny, Rational(0), Rational(1)}}, 12, 1), PreconditionFailed);
}

TEST_CASE("major subset", "[decomposition]") {
  DyadicSet e(2, 0);
  e.insert({0, 0});
  ExceptionalSet f{DyadicSet(2, 0), {}, {}};
  f.set.insert({-2, 0});
  const auto major = major_subset(e, f);
  CHECK(major.measure() == d(3, -2));
  CHECK(!major.contains({-2, 0}));
  f.set.insert({-1, 1});
  f.set.insert({-2, 1});
  CHECK_THROWS_AS(major_subset(e, f), InvariantViolated);
}

TEST_CASE("multiplicity levels", "[decomposition]") {
  CHECK(multiplicity_level(1, 0) == 0);
  CHECK(multiplicity_level(2, 0) == 1);
  CHECK(multiplicity_level(4, 0) == 1);
  CHECK(multiplicity_level(5, 0) == 2);
  CHECK(multiplicity_level(16, 1) == 1);
  CHECK(multiplicity_level(17, 1) == 2);
}

TEST_CASE("multi-frequency decomposition on diamond instances", "[decomposition][property]") {
  ExperimentConfig cfg;
  cfg.alpha = {Rational(1, 4), Rational(-1, 4), Rational(1)};
  const TileUniverse du{2, 1, 2, 14};
  Rng rng = make_rng(45);
  int with_trees = 0, tested = 0;
  for (int attempt = 0; attempt < 40 && tested < 8; ++attempt) {
    const auto x = random_restricted_instance(cfg, du, rng);
    if (x.regime != Regime::diamond) continue;
    ++tested;
    const auto check = check_diamond_instance(cfg, du, x, 4);
    INFO(check.witness);
    CHECK(check.substitution_ok);
    CHECK(check.cardinality_ok);
    if (check.trees > 0) ++with_trees;

    // Parseval per interval and the level split, on the level-0 forest
    BitileSet collection;
    for (const auto& p : du.bitiles())
      if (!x.exceptional.set.contains(p.time())) collection.insert(p);
    const auto trace = full_decomposition(collection, x.f[0], 0, 4);
    for (const auto& level : trace.levels) {
      if (level.forest.trees.empty()) continue;
      const auto mf = multi_frequency_decomposition(level.forest, x.f[2], x.exceptional, level.k, du.L);
      StepFunction sum_levels(mf.a.resolution(), mf.a.support());
      for (const auto& [m, am] : mf.levels) sum_levels += am;
      CHECK(sum_levels == mf.a);
      DyadicRational total;
      for (const auto& piece : mf.pieces) {
        const auto g3 = at_resolution(x.f[2], mf.a.resolution());
        DyadicRational parseval;
        for (const auto& t : piece.tiles) {
          const auto c = coefficient(g3, t);
          parseval += (c * c).shifted(-t.scale());
        }
        CHECK(piece.a.l2_norm_sq() == parseval);
        total += parseval;
        CHECK(support_of(piece.a).is_subset_of(DyadicSet::from_intervals(std::vector{piece.interval}, piece.a.resolution(), piece.a.support())));
      }
      CHECK(mf.a.l2_norm_sq() == total);
    }
  }
  CHECK(tested >= 5);
  CHECK(with_trees > 0);
}

TEST_CASE("multi-frequency projection of a member packet", "[decomposition]") {
  // one tree over [0,1) x [0,2) with L = 2 and F = [1,2): the minimal tiles of
  // 2^2 P_d over [0,1) are not inside F, so the interval [1,2) collects
  // tiles [1,2) x w for the frequency ancestors of those tiles
  const TileUniverse u{1, 1, 2, 3};
  const Bitile p(R(0, 0, -1, 0));
  const Forest forest{{Tree(p, {p})}, 0};
  ExceptionalSet f{DyadicSet(3, 1), {}, {}};
  f.set.insert({0, 1});
  f.intervals = f.set.maximal_intervals();
  const auto mf0 = multi_frequency_decomposition(forest, StepFunction(3, 1), f, 0, 2);
  REQUIRE(mf0.pieces.size() == 1);
  // tiles inside [0,1) are not strictly inside [1,2): nothing is chosen
  CHECK(mf0.pieces[0].tiles.empty());
  CHECK(mf0.pieces[0].multiplicity == 0);

  // a top over [0,2) has minimal dilated tiles of width 1/2, so F = [1,5/4)
  // sits strictly below [1,3/2)
  const Bitile big(R(1, 0, 0, 0));
  const Forest f2{{Tree(big, {big})}, 0};
  ExceptionalSet g{DyadicSet(3, 1), {}, {}};
  g.set.insert({-2, 4});
  g.intervals = g.set.maximal_intervals();
  const auto mf = multi_frequency_decomposition(f2, StepFunction(3, 1), g, 0, 2);
  REQUIRE(mf.pieces.size() == 1);
  REQUIRE_FALSE(mf.pieces[0].tiles.empty());
  const Tile t = mf.pieces[0].tiles.front();
  const auto w = packet_eval(t, u);
  const auto again = multi_frequency_decomposition(f2, w, g, 0, 2);
  CHECK(again.pieces[0].a == at_resolution(w, again.a.resolution()));
  CHECK_THROWS_AS(multi_frequency_decomposition(f2, StepFunction::indicator({0, 0}, 3, 1), g, 0, 2), PreconditionFailed);
}
