// walshqf: command-line driver for the form evaluator, the tree selection
// and the experiment harness.
//
// Exit status: 0 on success, 1 when a hard invariant fails (an identity
// check, the major-subset bound, or an InvariantViolated from the library),
// 2 on bad input.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "walshqf/json_io.hpp"

namespace wq = walshqf;
using wq::json;

namespace {

constexpr int kInvariantFailed = 1;
constexpr int kBadInput = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw wq::PreconditionFailed("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw wq::PreconditionFailed(path + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream os(out);
  if (!os) throw wq::PreconditionFailed("cannot write " + out);
  os << j.dump(2) << "\n";
}

/// "2..10", "2,4,6" or "3".
std::vector<int> parse_L(const std::string& s) {
  std::vector<int> out;
  if (auto dots = s.find(".."); dots != std::string::npos) {
    const int lo = std::stoi(s.substr(0, dots));
    const int hi = std::stoi(s.substr(dots + 2));
    if (hi < lo) throw wq::PreconditionFailed("empty L range " + s);
    for (int L = lo; L <= hi; ++L) out.push_back(L);
    return out;
  }
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoi(item));
  if (out.empty()) throw wq::PreconditionFailed("no L values in " + s);
  return out;
}

std::vector<wq::Rational> parse_rationals(const std::string& s) {
  std::vector<wq::Rational> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(wq::parse_rational(json(item)));
  return out;
}

/// Flags shared by verify, sweep-uniform and restricted; they override the
/// config file field by field.
struct HarnessFlags {
  std::string config;
  std::string universe;  // N,M[,r]
  std::string L;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config");
    app->add_option("--universe", universe, "N,M[,r]");
    app->add_option("--L", L, "dilation values, e.g. 2..10 or 2,4,6");
    app->add_option("--trials", trials);
    app->add_option("--seed", seed);
    app->add_option("--threads", threads, "worker threads, 0 for all cores");
    app->add_option("--out", out, "output JSON path (default stdout)");
  }

  wq::ExperimentConfig resolve() const {
    wq::ExperimentConfig cfg;
    if (!config.empty()) cfg = read_json(config).get<wq::ExperimentConfig>();
    if (!universe.empty()) {
      std::vector<int> v;
      std::stringstream ss(universe);
      for (std::string item; std::getline(ss, item, ',');) v.push_back(std::stoi(item));
      if (v.size() < 2 || v.size() > 3) throw wq::PreconditionFailed("--universe expects N,M[,r]");
      cfg.N = v[0];
      cfg.M = v[1];
      cfg.r = v.size() == 3 ? v[2] : 0;
    }
    if (!L.empty()) cfg.Ls = parse_L(L);
    if (trials) cfg.trials = *trials;
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    return cfg;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw wq::PreconditionFailed("cannot write " + path);
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact Walsh phase-plane computations"};
  app.require_subcommand(1);

  // eval-form
  std::string u_path, tiles_path, f1_path, f2_path, f3_path, coeffs_path, eval_out;
  auto* eval = app.add_subcommand("eval-form", "evaluate Lambda_L on a bitile set");
  eval->add_option("--universe", u_path, "universe JSON {N,M,L,r}")->required();
  eval->add_option("--tiles", tiles_path, "bitile list JSON (default: the whole strip)");
  eval->add_option("--f1", f1_path)->required();
  eval->add_option("--f2", f2_path)->required();
  eval->add_option("--f3", f3_path)->required();
  eval->add_option("--coeffs", coeffs_path, "coefficient list [{bitile, c}]");
  eval->add_option("--out", eval_out);

  // select-trees and decompose
  std::string input_path, f_path, sel_out;
  int k = 0, sel_L = 2, k_max = 8;
  bool alternate = false;
  auto* select = app.add_subcommand("select-trees", "one round of the tree selection");
  select->add_option("--k", k)->required();
  select->add_option("--input", input_path, "convex bitile collection JSON")->required();
  select->add_option("--f", f_path)->required();
  select->add_option("--L", sel_L);
  select->add_flag("--alternate-ties", alternate);
  select->add_option("--out", sel_out);

  auto* decompose = app.add_subcommand("decompose", "iterate the selection until the collection is exhausted");
  decompose->add_option("--input", input_path)->required();
  decompose->add_option("--f", f_path)->required();
  decompose->add_option("--L", sel_L);
  decompose->add_option("--k-max", k_max);
  decompose->add_flag("--alternate-ties", alternate);
  decompose->add_option("--out", sel_out);

  // exceptional-set
  std::vector<std::string> set_paths;
  std::string q_list, beta_list, exc_out;
  int threshold = 10;
  auto* exceptional = app.add_subcommand("exceptional-set", "union of maximal-function superlevel sets");
  exceptional->add_option("--set", set_paths, "dyadic set JSON, repeatable")->required();
  exceptional->add_option("--q", q_list, "exponents q, one per set, e.g. 2,6/5")->required();
  exceptional->add_option("--beta", beta_list, "normalizations beta, one per set")->required();
  exceptional->add_option("--threshold-log2", threshold);
  exceptional->add_option("--out", exc_out);

  // harness
  HarnessFlags verify_flags, sweep_flags, restricted_flags;
  bool fault = false;
  auto* verify = app.add_subcommand("verify", "run the exact identity suite");
  verify_flags.add_to(verify);
  verify->add_flag("--fault-injection", fault, "corrupt one packet to exercise the failure path");

  std::string p_list, plot_path;
  auto* sweep = app.add_subcommand("sweep-uniform", "max |Lambda_L| / prod ||f_j||_p_j across L");
  sweep_flags.add_to(sweep);
  sweep->add_option("--p", p_list, "exponents p1,p2,p3");
  sweep->add_option("--emit-plot-data", plot_path, "CSV with one ratio column per L");

  std::string alpha_list, eps;
  auto* restricted = app.add_subcommand("restricted", "restricted weak-type experiment");
  restricted_flags.add_to(restricted);
  restricted->add_option("--alpha", alpha_list, "alpha1,alpha2,alpha3");
  restricted->add_option("--epsilon", eps);
  restricted->add_option("--emit-plot-data", plot_path, "CSV with one constant column per L");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      const auto u = read_json(u_path).get<wq::TileUniverse>();
      wq::FormSpec spec{u, tiles_path.empty() ? wq::universe_set(u) : wq::bitiles_from_json(read_json(tiles_path)), {}};
      if (!coeffs_path.empty()) spec.coefficients = wq::coefficients_from_json(read_json(coeffs_path));
      const auto f1 = read_json(f1_path).get<wq::StepFunction>();
      const auto f2 = read_json(f2_path).get<wq::StepFunction>();
      const auto f3 = read_json(f3_path).get<wq::StepFunction>();
      json j = wq::lambda_terms(spec, f1, f2, f3);
      j["universe"] = u;
      emit(j, eval_out);
      return 0;
    }
    if (*select || *decompose) {
      const auto collection = wq::bitiles_from_json(read_json(input_path));
      const auto f = read_json(f_path).get<wq::StepFunction>();
      const auto tie = alternate ? wq::TieBreak::alternate : wq::TieBreak::standard;
      if (*select) emit(wq::selection_json(wq::select_trees(collection, f, k, sel_L, tie), k, sel_L), sel_out);
      else emit(json(wq::full_decomposition(collection, f, sel_L, k_max, tie)), sel_out);
      return 0;
    }
    if (*exceptional) {
      const auto qs = parse_rationals(q_list);
      const auto betas = parse_rationals(beta_list);
      if (qs.size() != set_paths.size() || betas.size() != set_paths.size())
        throw wq::PreconditionFailed("need one q and one beta per --set");
      std::vector<wq::MaximalComponent> comps;
      for (std::size_t i = 0; i < set_paths.size(); ++i)
        comps.push_back({read_json(set_paths[i]).get<wq::DyadicSet>(), qs[i], betas[i]});
      const auto& s0 = comps.front().set;
      emit(json(wq::exceptional_set(comps, s0.resolution(), s0.support(), threshold)), exc_out);
      return 0;
    }
    if (*verify) {
      auto cfg = verify_flags.resolve();
      cfg.fault_injection = cfg.fault_injection || fault;
      const auto report = wq::run_identity_suite(cfg);
      emit(wq::report_json(report, cfg), verify_flags.out);
      for (const auto& c : report.checks)
        std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.instances << ")\n";
      return report.all_passed() ? 0 : kInvariantFailed;
    }
    if (*sweep) {
      auto cfg = sweep_flags.resolve();
      if (!p_list.empty()) cfg.p = parse_rationals(p_list);
      const auto table = wq::run_uniformity_sweep(cfg);
      emit(wq::report_json(table, cfg), sweep_flags.out);
      if (!plot_path.empty()) {
        std::ostringstream csv;
        wq::write_sweep_csv(csv, table);
        write_text(plot_path, csv.str());
      }
      std::cerr << "growth " << table.growth << " over " << table.max_ratio.size() << " L values\n";
      return 0;
    }
    if (*restricted) {
      auto cfg = restricted_flags.resolve();
      if (!alpha_list.empty()) cfg.alpha = parse_rationals(alpha_list);
      if (!eps.empty()) cfg.epsilon = wq::parse_rational(json(eps));
      const auto report = wq::run_restricted_experiment(cfg);
      emit(wq::report_json(report, cfg), restricted_flags.out);
      if (!plot_path.empty()) {
        std::ostringstream csv;
        wq::write_restricted_csv(csv, report);
        write_text(plot_path, csv.str());
      }
      return report.all_major_ok ? 0 : kInvariantFailed;
    }
  } catch (const wq::InvariantViolated& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kInvariantFailed;
  } catch (const wq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return 0;
}
