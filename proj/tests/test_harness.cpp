#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "walshqf/json_io.hpp"

using namespace walshqf;

namespace {
Rect R(int k, std::int64_t n, int kp, std::int64_t l) { return Rect::from_quadruple({k, n, kp, l}); }
}  // namespace

TEST_CASE("random step functions", "[harness]") {
  const DyadicSet all = full_set(3, 2);
  const auto a = random_step_function(7, all, FillMode::signed_dyadic);
  const auto b = random_step_function(7, all, FillMode::signed_dyadic);
  CHECK(a == b);
  CHECK_FALSE(a == random_step_function(8, all, FillMode::signed_dyadic));
  for (const auto& v : a.values()) CHECK(v.abs() <= DyadicRational(1));

  Rng rng = make_rng(1);
  const DyadicSet e = random_set(rng, 3, 2, 5);
  CHECK(e.measure() == DyadicRational(BigInt(5), -3));
  const auto g = random_step_function(rng, e, FillMode::indicator);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK((g[i].is_zero() || (g[i] == DyadicRational(1) && e.contains_cell(i))));
  CHECK(support_of(random_step_function(rng, e, FillMode::signed_dyadic)).is_subset_of(e));
}

TEST_CASE("random convex collections are convex", "[harness]") {
  Rng rng = make_rng(2);
  const TileUniverse u{3, 2, 2, 5};
  for (int i = 0; i < 30; ++i) {
    CHECK(is_convex(random_convex_collection(rng, u)));
    const Tree t = random_tree(rng, u);
    CHECK(t.is_convex());
    for (const auto& p : t.members()) CHECK(rect_le(p.rect(), t.top().rect()));
  }
}

TEST_CASE("identity suite", "[harness]") {
  ExperimentConfig cfg;
  cfg.threads = 1;
  const auto report = run_identity_suite(cfg);
  for (const auto& c : report.checks) {
    INFO(c.name << ": " << c.witness);
    CHECK(c.passed);
    CHECK(c.instances > 0);
  }

  cfg.fault_injection = true;
  const auto broken = run_identity_suite(cfg);
  CHECK_FALSE(broken.all_passed());
  CHECK_FALSE(broken.checks.front().passed);
  CHECK_FALSE(broken.checks.front().witness.empty());
}

TEST_CASE("single-bitile uniformity ratio", "[harness]") {
  const TileUniverse u{1, 0, 2, 3};
  const FormSpec spec{u, {Bitile(R(0, 0, -1, 0))}, {}};
  const auto f1 = StepFunction::indicator({-1, 0}, 3, 0);
  const auto f2 = StepFunction::indicator({-2, 0}, 3, 0);
  const double ratio = std::abs(lambda(spec, f1, f2, f2).to_double()) / (lp_norm(f1, 2) * lp_norm(f2, 4) * lp_norm(f2, 4));
  CHECK(ratio == Catch::Approx(std::pow(2.0, -1.5)).epsilon(1e-12));
}

TEST_CASE("uniformity sweep", "[harness]") {
  ExperimentConfig cfg;
  cfg.N = 2;
  cfg.M = 2;
  cfg.Ls = {2, 3};
  cfg.trials = 6;
  cfg.threads = 1;
  const auto t1 = run_uniformity_sweep(cfg);
  CHECK(t1.rows.size() + static_cast<std::size_t>(t1.skipped) == 12);
  CHECK(t1.max_ratio.size() == 2);
  for (const auto& row : t1.rows) {
    REQUIRE(row.power_sums[0]);
    const auto f = sweep_inputs(cfg, row.trial);
    CHECK(*row.power_sums[0] == f[0].power_integral(2));
    CHECK(row.ratio == Catch::Approx(std::abs(row.value.to_double()) / row.denominator));
  }
  cfg.threads = 3;
  const auto t3 = run_uniformity_sweep(cfg);
  REQUIRE(t3.rows.size() == t1.rows.size());
  for (std::size_t i = 0; i < t1.rows.size(); ++i) CHECK(t1.rows[i].value == t3.rows[i].value);

  cfg.p = {Rational(2), Rational(2), Rational(2)};
  CHECK_THROWS_AS(run_uniformity_sweep(cfg), PreconditionFailed);
}

TEST_CASE("restricted experiment", "[harness]") {
  ExperimentConfig cfg;
  cfg.N = 2;
  cfg.M = 2;
  cfg.Ls = {2};
  cfg.trials = 8;
  cfg.threads = 2;
  const auto rep = run_restricted_experiment(cfg);
  CHECK(rep.all_major_ok);
  CHECK(rep.rows.size() == 8);
  for (const auto& row : rep.rows) {
    CHECK(row.major_measure.shifted(1) >= row.measures[1]);
    CHECK(row.exceptional_measure.shifted(1) < std::max({row.measures[0], row.measures[1], row.measures[2]}));
    if (row.regime == Regime::degenerate) CHECK(row.constant == 0);
  }
  cfg.alpha = {Rational(1, 2), Rational(1, 2), Rational(1, 2)};
  CHECK_THROWS_AS(run_restricted_experiment(cfg), PreconditionFailed);
}

TEST_CASE("major subset on generated instances", "[harness]") {
  ExperimentConfig cfg;
  Rng rng = make_rng(3);
  const TileUniverse u = cfg.universe(2);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_restricted_instance(cfg, u, rng);
    INFO(x.major_detail);
    CHECK(x.major_ok);
    CHECK(x.major == major_subset(x.sets[1], x.exceptional));
    // comparable sets at the (1/2, 0, 1/2) corner: M_2 stays below 2^(3/2)
    CHECK(x.exceptional.measure().is_zero());
    CHECK(x.major == x.sets[1]);
    CHECK(support_of(x.f[1]).is_subset_of(x.major));
  }
}

TEST_CASE("JSON round trips", "[harness][json]") {
  const DyadicRational d(BigInt("123456789012345678901234567890"), -77);
  CHECK(json(d).get<DyadicRational>() == d);
  CHECK(json(5).get<DyadicRational>() == DyadicRational(5));

  Rng rng = make_rng(4);
  const auto f = random_step_function(rng, full_set(3, 1), FillMode::signed_dyadic);
  CHECK(json(f).get<StepFunction>() == f);
  const auto pieces = json::parse(R"({"resolution": 2, "support": 0, "pieces": [{"interval": [-1, 1], "value": [3, -1]}]})");
  CHECK(pieces.get<StepFunction>() == StepFunction::indicator({-1, 1}, 2, 0) * DyadicRational(BigInt(3), -1));

  const TileUniverse u{2, 1, 2, 4};
  const BitileSet s = random_convex_collection(rng, u);
  CHECK(bitiles_from_json(to_json_sorted(s)) == s);
  CHECK(to_json_sorted(s) == to_json_sorted(bitiles_from_json(to_json_sorted(s))));

  const Tree t = random_tree(rng, u);
  const Tree back = json(t).get<Tree>();
  CHECK(back.top() == t.top());
  CHECK(back.members() == t.members());

  const DyadicSet e = random_set(rng, 3, 1, 6);
  CHECK(json(e).get<DyadicSet>() == e);

  ExperimentConfig cfg;
  cfg.Ls = {2, 5};
  cfg.alpha = {Rational(1, 4), Rational(-1, 4), Rational(1)};
  cfg.seed = 99;
  const auto cfg2 = json(cfg).get<ExperimentConfig>();
  CHECK(json(cfg2) == json(cfg));
  CHECK(cfg2.alpha[1] == Rational(-1, 4));
  CHECK(parse_rational(json("6/5")) == Rational(6, 5));
}

TEST_CASE("CSV output", "[harness]") {
  ExperimentConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.Ls = {2, 3};
  cfg.trials = 3;
  cfg.threads = 1;
  std::ostringstream os;
  write_sweep_csv(os, run_uniformity_sweep(cfg));
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "trial,ratio_L2,ratio_L3");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 3);
}
