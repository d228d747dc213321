#pragma once

// JSON and CSV forms of the library types. Exact values are written
// exactly; floating-point columns carry a `_float` suffix.

#include <nlohmann/json.hpp>

#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "walshqf/decomposition.hpp"
#include "walshqf/harness.hpp"
#include "walshqf/walshqf.hpp"

namespace walshqf {

using json = nlohmann::json;

// --- numbers ---------------------------------------------------------------

/// ["mantissa", exponent]
inline void to_json(json& j, const DyadicRational& d) { j = json::array({d.mantissa().str(), d.exponent()}); }

inline void from_json(const json& j, DyadicRational& d) {
  if (j.is_number_integer()) {
    d = DyadicRational(j.get<long long>());
    return;
  }
  if (!j.is_array() || j.size() != 2) throw PreconditionFailed("dyadic rational must be [mantissa, exponent]");
  BigInt m = j[0].is_string() ? BigInt(j[0].get<std::string>()) : BigInt(j[0].get<long long>());
  d = DyadicRational(std::move(m), j[1].get<long long>());
}

inline std::string rational_string(const Rational& q) {
  if (q.denominator() == 1) return std::to_string(q.numerator());
  return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

inline Rational parse_rational(const json& j) {
  if (j.is_number_integer()) return Rational(j.get<long long>());
  const std::string s = j.get<std::string>();
  const auto slash = s.find('/');
  if (slash == std::string::npos) return Rational(std::stoll(s));
  return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
}

// --- geometry --------------------------------------------------------------

inline void to_json(json& j, const DyadicInterval& i) { j = json::array({i.scale, i.position}); }
inline void from_json(const json& j, DyadicInterval& i) {
  i = DyadicInterval{j.at(0).get<int>(), j.at(1).get<std::int64_t>()};
}

inline void to_json(json& j, const Rect& r) { j = r.quadruple(); }
inline void from_json(const json& j, Rect& r) { r = Rect::from_quadruple(j.get<std::array<std::int64_t, 4>>()); }

template <int A>
void to_json(json& j, const FixedAreaRect<A>& p) {
  j = p.rect().quadruple();
}
template <int A>
void from_json(const json& j, FixedAreaRect<A>& p) {
  p = FixedAreaRect<A>(Rect::from_quadruple(j.get<std::array<std::int64_t, 4>>()));
}

// unordered sets go out sorted so output is reproducible
inline json to_json_sorted(const BitileSet& s) {
  json a = json::array();
  for (const Bitile& p : sorted(s)) a.push_back(p);
  return a;
}

inline BitileSet bitiles_from_json(const json& j) {
  BitileSet s;
  for (const auto& e : j) s.insert(e.get<Bitile>());
  return s;
}

inline void to_json(json& j, const TileUniverse& u) { j = {{"N", u.N}, {"M", u.M}, {"L", u.L}, {"r", u.r}}; }
inline void from_json(const json& j, TileUniverse& u) {
  u.N = j.at("N").get<int>();
  u.M = j.at("M").get<int>();
  u.L = j.value("L", 2);
  u.r = j.value("r", u.N + u.L);
}

// --- functions and sets ----------------------------------------------------

inline void to_json(json& j, const StepFunction& f) {
  j = {{"resolution", f.resolution()}, {"support", f.support()}, {"cells", f.values()}};
}

/// Either the full cell list or, for hand-written inputs, a list of
/// {interval: [k, n], value} pieces on a zero background.
inline void from_json(const json& j, StepFunction& f) {
  const int r = j.at("resolution").get<int>();
  const int m = j.at("support").get<int>();
  if (j.contains("cells")) {
    f = StepFunction(r, m, j.at("cells").get<std::vector<DyadicRational>>());
    return;
  }
  f = StepFunction(r, m);
  for (const auto& piece : j.at("pieces")) f.add_on(piece.at("interval").get<DyadicInterval>(), piece.at("value").get<DyadicRational>());
}

inline void to_json(json& j, const DyadicSet& s) {
  j = {{"resolution", s.resolution()}, {"support", s.support()}, {"intervals", s.maximal_intervals()}};
}
inline void from_json(const json& j, DyadicSet& s) {
  const auto intervals = j.at("intervals").get<std::vector<DyadicInterval>>();
  s = DyadicSet::from_intervals(intervals, j.at("resolution").get<int>(), j.at("support").get<int>());
}

inline void to_json(json& j, const ExceptionalSet& e) {
  j = {{"set", e.set}, {"intervals", e.intervals}, {"multiplicity", e.multiplicity}, {"measure", e.measure()}};
}

// --- forests and traces ----------------------------------------------------

inline void to_json(json& j, const Tree& t) { j = {{"top", t.top()}, {"members", to_json_sorted(t.members())}}; }
inline void from_json(const json& j, Tree& t) {
  t = Tree(j.at("top").get<Bitile>(), bitiles_from_json(j.at("members")));
}

inline void to_json(json& j, const Forest& f) { j = {{"level", f.level}, {"trees", f.trees}}; }
inline void from_json(const json& j, Forest& f) {
  f.level = j.value("level", 0);
  f.trees = j.at("trees").get<std::vector<Tree>>();
}

inline const char* phase_name(SelectionPhase p) {
  switch (p) {
    case SelectionPhase::single_bitile: return "single_bitile";
    case SelectionPhase::upper: return "upper";
    case SelectionPhase::lower: return "lower";
  }
  return "?";
}

inline json forest_with_phases(const Forest& f, const std::vector<SelectionPhase>& phases) {
  json trees = json::array();
  for (std::size_t i = 0; i < f.trees.size(); ++i) {
    json t = f.trees[i];
    t["phase"] = phase_name(phases[i]);
    trees.push_back(std::move(t));
  }
  return trees;
}

inline json selection_json(const Selection& s, int k, int L) {
  return {{"k", k},
          {"L", L},
          {"trees", forest_with_phases(s.forest, s.phases)},
          {"remainder", to_json_sorted(s.remainder)}};
}

inline void to_json(json& j, const DecompositionTrace& t) {
  json levels = json::array();
  for (const auto& l : t.levels) {
    levels.push_back({{"k", l.k}, {"trees", forest_with_phases(l.forest, l.phases)}, {"remainder", to_json_sorted(l.remainder)}});
  }
  j = {{"L", t.L}, {"initial", to_json_sorted(t.initial)}, {"levels", levels},
       {"final_remainder", to_json_sorted(t.final_remainder())}};
}

// --- form values -----------------------------------------------------------

inline CoefficientMap coefficients_from_json(const json& j) {
  CoefficientMap c;
  for (const auto& e : j) c[e.at("bitile").get<Bitile>()] = e.at("c").get<DyadicRational>();
  return c;
}

inline void to_json(json& j, const FormValue& v) {
  json terms = json::array();
  for (const auto& [p, t] : v.terms) terms.push_back({{"bitile", p}, {"term", t}});
  j = {{"value", v.value}, {"value_float", v.value.to_double()}, {"per_bitile_terms", terms}};
}

// --- harness ---------------------------------------------------------------

inline void to_json(json& j, const ExperimentConfig& c) {
  auto rationals = [](const std::vector<Rational>& v) {
    json a = json::array();
    for (const auto& q : v) a.push_back(rational_string(q));
    return a;
  };
  j = {{"N", c.N}, {"M", c.M}, {"r", c.r}, {"L", c.Ls}, {"p", rationals(c.p)}, {"alpha", rationals(c.alpha)},
       {"epsilon", rational_string(c.epsilon)}, {"trials", c.trials}, {"seed", c.seed},
       {"threads", c.threads}, {"fault_injection", c.fault_injection}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  auto rationals = [](const json& a) {
    std::vector<Rational> v;
    for (const auto& e : a) v.push_back(parse_rational(e));
    return v;
  };
  c.N = j.value("N", c.N);
  c.M = j.value("M", c.M);
  c.r = j.value("r", c.r);
  if (j.contains("L")) c.Ls = j.at("L").get<std::vector<int>>();
  if (j.contains("p")) c.p = rationals(j.at("p"));
  if (j.contains("alpha")) c.alpha = rationals(j.at("alpha"));
  if (j.contains("epsilon")) c.epsilon = parse_rational(j.at("epsilon"));
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.fault_injection = j.value("fault_injection", c.fault_injection);
}

inline void to_json(json& j, const CheckResult& c) {
  j = {{"name", c.name}, {"passed", c.passed}, {"instances", c.instances}, {"witness", c.witness}};
}

inline json report_json(const IdentityReport& r, const ExperimentConfig& cfg) {
  return {{"config", cfg}, {"all_passed", r.all_passed()}, {"checks", r.checks}};
}

inline json report_json(const SweepTable& t, const ExperimentConfig& cfg) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json sums = json::array();
    for (const auto& s : r.power_sums) sums.push_back(s ? json(*s) : json(nullptr));
    rows.push_back({{"L", r.L}, {"trial", r.trial}, {"value", r.value}, {"power_sums", sums},
                    {"denominator_float", r.denominator}, {"ratio_float", r.ratio}});
  }
  json maxima = json::array();
  for (const auto& [L, v] : t.max_ratio) {
    maxima.push_back({{"L", L}, {"max_ratio_float", v}, {"argmax_trial", t.argmax_trial.at(L)}});
  }
  return {{"config", cfg}, {"maxima", maxima}, {"growth_float", t.growth}, {"skipped", t.skipped}, {"rows", rows}};
}

inline json report_json(const RestrictedReport& rep, const ExperimentConfig& cfg) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"L", r.L}, {"trial", r.trial}, {"regime", regime_name(r.regime)}, {"value", r.value},
                    {"measures", r.measures}, {"exceptional_measure", r.exceptional_measure},
                    {"major_measure", r.major_measure}, {"major_ok", r.major_ok},
                    {"constant_float", r.constant}});
  }
  json maxima = json::array();
  for (const auto& [L, v] : rep.max_constant) maxima.push_back({{"L", L}, {"max_constant_float", v}});
  return {{"config", cfg}, {"all_major_ok", rep.all_major_ok}, {"maxima", maxima}, {"rows", rows}};
}

// --- CSV -------------------------------------------------------------------

/// One row per trial, one ratio column per L.
inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  std::map<int, std::map<int, double>> by_trial;
  for (const auto& r : t.rows) by_trial[r.trial][r.L] = r.ratio;
  os << "trial";
  for (const auto& [L, v] : t.max_ratio) os << ",ratio_L" << L;
  os << "\n";
  for (const auto& [trial, cols] : by_trial) {
    os << trial;
    for (const auto& [L, v] : t.max_ratio) {
      os << ",";
      if (auto it = cols.find(L); it != cols.end()) os << it->second;
    }
    os << "\n";
  }
}

inline void write_restricted_csv(std::ostream& os, const RestrictedReport& rep) {
  std::map<int, std::map<int, double>> by_trial;
  for (const auto& r : rep.rows) by_trial[r.trial][r.L] = r.constant;
  os << "trial";
  for (const auto& [L, v] : rep.max_constant) os << ",constant_L" << L;
  os << "\n";
  for (const auto& [trial, cols] : by_trial) {
    os << trial;
    for (const auto& [L, v] : rep.max_constant) {
      os << ",";
      if (auto it = cols.find(L); it != cols.end()) os << it->second;
    }
    os << "\n";
  }
}

/// Cell table: left endpoint, right endpoint, value (floating point).
inline void write_step_function_csv(std::ostream& os, const StepFunction& f) {
  os << "left,right,value_float\n";
  const double w = std::ldexp(1.0, -f.resolution());
  for (std::size_t i = 0; i < f.size(); ++i) os << i * w << "," << (i + 1) * w << "," << f[i].to_double() << "\n";
}

}  // namespace walshqf
