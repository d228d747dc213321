// Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is non-zero if any criterion fails.

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>

#include "contract.hpp"
#include "oracle.hpp"
#include "walshqf/json_io.hpp"

using namespace walshqf;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;
};

Verdict from(const CheckResult& c) { return {c.passed, c.name + " x" + std::to_string(c.instances) + (c.passed ? "" : ": " + c.witness)}; }

Verdict both(const Verdict& a, const Verdict& b) { return {a.ok && b.ok, a.detail + "; " + b.detail}; }

Verdict orthonormality() {
  const TileUniverse u{4, 4, 4, 8};
  PacketCache cache;
  const auto start = std::chrono::steady_clock::now();
  Verdict v = from(check_orthonormality(u, cache));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.detail += ", " + std::to_string(u.strip_tiles().size()) + " tiles in " + std::to_string(secs) + " s";
  if (secs >= 60) v = {false, v.detail + " (over 60 s)"};
  return v;
}

Verdict tilings() {
  const TileUniverse u{3, 3, 2, 5};
  Rng rng = make_rng(0, 2);
  return both(from(check_tiling_independence(u, rng, 200)), from(check_nested_projection(u, rng, 200)));
}

Verdict vanishing() {
  const TileUniverse u{3, 3, 3, 6};
  Rng rng = make_rng(0, 3);
  return both(from(check_vanishing(u, rng, 100)), from(check_telescoping(u, rng, 50)));
}

Verdict selection() {
  Rng rng = make_rng(0, 4);
  int done = 0, trees = 0;
  for (int i = 0; i < 100; ++i) {
    const int L = 2 + 2 * (i % 3);
    const TileUniverse u{3, 2, L, 3 + L};
    const BitileSet s = random_convex_collection(rng, u);
    const StepFunction f = random_step_function(rng, full_set(u.r, u.M),
                                                i % 4 == 3 ? FillMode::indicator : FillMode::signed_dyadic);
    const DyadicRational size = size_sq(s, f, L);
    int top = 0;
    while (top < 6 && size <= DyadicRational::pow2(-2 * (top + 1))) ++top;
    const int k = static_cast<int>(uniform(rng, 0, top));
    const Selection sel = select_trees(s, f, k, L);
    const auto out = contract::check_selection(s, f, k, L, sel);
    if (!out.ok) {
      return {false, "instance " + std::to_string(i) + " (L=" + std::to_string(L) + ", k=" + std::to_string(k) +
                         ", P=" + detail::describe(s) + ", f=" + detail::describe(f) + "): " + out.why};
    }
    ++done;
    trees += static_cast<int>(sel.forest.trees.size());
  }
  return {true, std::to_string(done) + " instances, " + std::to_string(trees) + " trees"};
}

Verdict additivity() {
  Rng rng = make_rng(0, 5);
  return from(check_additivity(TileUniverse{3, 3, 2, 5}, rng, 50));
}

Verdict diamond() {
  ExperimentConfig cfg;
  cfg.alpha = {Rational(1, 4), Rational(-1, 4), Rational(1)};
  const TileUniverse du{2, 1, 2, 14};
  Rng rng = make_rng(0, 6);
  int instances = 0, attempts = 0;
  std::size_t trees = 0, intervals = 0;
  while (instances < 30 && attempts++ < 600) {
    const auto x = random_restricted_instance(cfg, du, rng);
    if (x.regime != Regime::diamond) continue;
    ++instances;
    const auto d = check_diamond_instance(cfg, du, x, 4);
    if (!d.substitution_ok || !d.cardinality_ok) return {false, "instance " + std::to_string(instances) + ": " + d.witness};
    trees += d.trees;
    intervals += d.intervals;
  }
  if (instances < 30) return {false, "only " + std::to_string(instances) + " diamond instances generated"};
  return {true, "30 instances, " + std::to_string(trees) + " trees, " + std::to_string(intervals) + " intervals"};
}

Verdict major() {
  int count = 0;
  auto run = [&](const ExperimentConfig& cfg, const TileUniverse& u, std::uint64_t stream, int n) -> Verdict {
    Rng rng = make_rng(0, 7, stream);
    for (int i = 0; i < n; ++i) {
      const auto x = random_restricted_instance(cfg, u, rng);
      ++count;
      if (!x.major_ok) return {false, std::string(regime_name(x.regime)) + " instance: " + x.major_detail};
    }
    return {};
  };
  ExperimentConfig triangle;
  ExperimentConfig diamond_cfg;
  diamond_cfg.alpha = {Rational(1, 4), Rational(-1, 4), Rational(1)};
  for (int L : {2, 3, 4}) {
    if (auto v = run(triangle, triangle.universe(L), static_cast<std::uint64_t>(L), 50); !v.ok) return v;
  }
  if (auto v = run(diamond_cfg, TileUniverse{2, 1, 2, 14}, 9, 50); !v.ok) return v;

  ExperimentConfig sweep_cfg;
  sweep_cfg.Ls = {2, 3, 4};
  sweep_cfg.trials = 20;
  const auto rep = run_restricted_experiment(sweep_cfg);
  if (!rep.all_major_ok) return {false, "restricted experiment reported a failing major subset"};
  return {true, std::to_string(count) + " generated instances plus " + std::to_string(rep.rows.size()) + " experiment rows"};
}

Verdict sweep() {
  ExperimentConfig cfg;
  cfg.N = 4;
  cfg.M = 4;
  cfg.p = {Rational(2), Rational(4), Rational(4)};
  cfg.Ls = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  cfg.trials = 500;
  cfg.seed = 0;
  const auto start = std::chrono::steady_clock::now();
  const SweepTable table = run_uniformity_sweep(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream("acceptance_sweep.json") << report_json(table, cfg).dump(1) << "\n";
  std::ofstream csv("acceptance_sweep.csv");
  write_sweep_csv(csv, table);
  std::string maxima;
  for (const auto& [L, v] : table.max_ratio) maxima += " L" + std::to_string(L) + "=" + std::to_string(v);
  const bool ok = table.max_ratio.size() == cfg.Ls.size() && table.growth <= 4.0;
  return {ok, "growth " + std::to_string(table.growth) + " in " + std::to_string(secs) + " s;" + maxima +
                  "; table in acceptance_sweep.json"};
}

Verdict worked_value() {
  const TileUniverse u{1, 0, 2, 3};
  const FormSpec spec{u, {Bitile(0, 0, 0)}, {}};
  const auto f1 = StepFunction::indicator({-1, 0}, 3, 0);
  const auto f2 = StepFunction::indicator({-2, 0}, 3, 0);
  const DyadicRational value = lambda(spec, f1, f2, f2);
  const oracle::Q expect = oracle::lambda(sorted(spec.bitiles), 2, oracle::from(f1), oracle::from(f2), oracle::from(f2));
  const bool ok = value == DyadicRational(BigInt(1), -3) && oracle::to_q(value) == expect;
  return {ok, "library " + value.to_string() + ", oracle " + expect.str()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"exact orthonormality", orthonormality},
      {"tiling independence and nested projection", tilings},
      {"vanishing identity and telescoping", vanishing},
      {"tree selection contract", selection},
      {"decomposition additivity", additivity},
      {"multi-frequency substitution", diamond},
      {"major subset", major},
      {"uniformity sweep", sweep},
      {"worked value", worked_value},
  };
  int failures = 0, n = 0;
  for (const auto& [name, run] : criteria) {
    ++n;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.ok) ++failures;
    std::cout << (v.ok ? "PASS" : "FAIL") << " " << n << " " << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
