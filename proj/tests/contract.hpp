#pragma once

// The tree-selection contract, checked from the outside: partition,
// convexity, the halved size of the remainder, and the counting bounds with
// the explicit constant 2^9 (2^8 for phase 1).

#include <string>

#include "walshqf/decomposition.hpp"

namespace contract {

using namespace walshqf;

struct Outcome {
  bool ok = true;
  std::string why;

  void fail(std::string w) {
    if (ok) why = std::move(w);
    ok = false;
  }
};

inline DyadicRational energy_on(const StepFunction& f, const DyadicInterval& j) {
  const auto [first, count] = f.cell_range(j);
  DyadicAccumulator acc;
  for (std::size_t i = first; i < first + count; ++i) acc.add(f[i] * f[i]);
  return acc.value().shifted(-f.resolution());
}

inline Outcome check_selection(const BitileSet& collection, const StepFunction& f, int k, int L,
                               const Selection& sel) {
  Outcome out;
  BitileSet seen;
  for (const Tree& t : sel.forest.trees) {
    if (!t.is_convex()) out.fail("tree at " + t.top().to_string() + " is not convex");
    for (const Bitile& p : t.members())
      if (!seen.insert(p).second) out.fail("bitile " + p.to_string() + " in two trees");
  }
  for (const Bitile& p : sel.remainder)
    if (!seen.insert(p).second) out.fail("bitile " + p.to_string() + " both selected and remaining");
  if (seen != collection) out.fail("forest and remainder do not partition the collection");
  if (!is_convex(sel.remainder)) out.fail("remainder is not convex");

  const DyadicRational rem = size_sq(sel.remainder, f, L);
  if (rem > DyadicRational::pow2(-2 * (k + 1))) out.fail("remainder size^2 " + rem.to_string());

  const DyadicRational scale = DyadicRational::pow2(2 * k);
  const DyadicRational norm = f.l2_norm_sq();
  DyadicRational total, phase1;
  for (std::size_t i = 0; i < sel.forest.trees.size(); ++i) {
    const DyadicRational len = sel.forest.trees[i].time().length();
    total += len;
    if (sel.phases[i] == SelectionPhase::single_bitile) phase1 += len;
  }
  if (total > DyadicRational::pow2(9) * scale * norm) out.fail("counting L1 bound " + total.to_string());
  if (phase1 > DyadicRational::pow2(8) * scale * norm) out.fail("phase-1 counting bound " + phase1.to_string());

  // localized form, every dyadic J down to the finest top
  int finest = f.support();
  for (const Tree& t : sel.forest.trees) finest = std::min(finest, t.time().scale);
  for (int s = finest; s <= f.support(); ++s) {
    for (std::int64_t n = 0; n < (std::int64_t{1} << (f.support() - s)); ++n) {
      const DyadicInterval j{s, n};
      DyadicRational local;
      for (const Tree& t : sel.forest.trees)
        if (j.contains(t.time())) local += t.time().length();
      if (local > DyadicRational::pow2(9) * scale * energy_on(f, j))
        out.fail("localized bound on [" + std::to_string(s) + "," + std::to_string(n) + "]: " + local.to_string());
    }
  }

  // Bessel over the phase-1 tops, whose dilated rectangles are disjoint
  DilatedEnergy energy(f, L);
  DyadicRational bessel;
  for (std::size_t i = 0; i < sel.forest.trees.size(); ++i) {
    if (sel.phases[i] != SelectionPhase::single_bitile) continue;
    const Bitile& top = sel.forest.trees[i].top();
    bessel += energy(upper(top)) + energy(lower(top));
  }
  if (bessel > norm) out.fail("Bessel over phase-1 tops " + bessel.to_string());
  return out;
}

}  // namespace contract
