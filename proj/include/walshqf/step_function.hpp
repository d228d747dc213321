#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "walshqf/dyadic.hpp"
#include "walshqf/errors.hpp"
#include "walshqf/geometry.hpp"

namespace walshqf {

/// A function on [0, 2^support) that is constant on cells of width
/// 2^-resolution. Cell j covers [j 2^-r, (j+1) 2^-r).
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(int resolution, int support)
      : resolution_(resolution), support_(support), values_(cell_count(resolution, support)) {}
  StepFunction(int resolution, int support, std::vector<DyadicRational> values)
      : resolution_(resolution), support_(support), values_(std::move(values)) {
    if (values_.size() != cell_count(resolution, support)) {
      throw PreconditionFailed("step function needs 2^(M+r) cell values");
    }
  }

  static StepFunction indicator(const DyadicInterval& interval, int resolution, int support) {
    StepFunction f(resolution, support);
    f.add_on(interval, DyadicRational(1));
    return f;
  }

  int resolution() const { return resolution_; }
  int support() const { return support_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<DyadicRational>& values() const { return values_; }
  const DyadicRational& operator[](std::size_t i) const { return values_[i]; }
  DyadicRational& operator[](std::size_t i) { return values_[i]; }

  /// Cells [first, first+count) covered by the interval.
  std::pair<std::size_t, std::size_t> cell_range(const DyadicInterval& interval) const {
    if (!interval.inside_power(support_)) {
      throw OutsideUniverse("interval outside the support window [0,2^M)");
    }
    if (interval.scale < -resolution_) {
      throw ResolutionMismatch("interval finer than the step-function resolution");
    }
    const int shift = interval.scale + resolution_;
    return {static_cast<std::size_t>(interval.position) << shift, std::size_t{1} << shift};
  }

  void add_on(const DyadicInterval& interval, const DyadicRational& v) {
    const auto [first, count] = cell_range(interval);
    for (std::size_t i = first; i < first + count; ++i) values_[i] += v;
  }

  /// The same function sampled on cells of width 2^-r, r >= resolution().
  StepFunction refined(int r) const {
    if (r < resolution_) throw ResolutionMismatch("cannot refine to a coarser resolution");
    if (r == resolution_) return *this;
    StepFunction out(r, support_);
    const std::size_t factor = std::size_t{1} << (r - resolution_);
    for (std::size_t i = 0; i < values_.size(); ++i)
      for (std::size_t j = 0; j < factor; ++j) out.values_[i * factor + j] = values_[i];
    return out;
  }

  /// Cell averages at a coarser resolution r.
  StepFunction averaged(int r) const {
    if (r > resolution_) return refined(r);
    StepFunction out(r, support_);
    const std::size_t factor = std::size_t{1} << (resolution_ - r);
    const int shift = -(resolution_ - r);
    for (std::size_t i = 0; i < out.values_.size(); ++i) {
      DyadicAccumulator acc;
      for (std::size_t j = 0; j < factor; ++j) acc.add(values_[i * factor + j]);
      out.values_[i] = acc.value().shifted(shift);
    }
    return out;
  }

  /// The coarsest resolution (not below `floor_resolution`) at which the
  /// function is still a step function.
  int intrinsic_resolution(int floor_resolution = 0) const {
    int r = resolution_;
    while (r > floor_resolution) {
      const std::size_t factor = std::size_t{1} << (resolution_ - r + 1);
      bool constant = true;
      for (std::size_t i = 0; constant && i < values_.size(); i += factor)
        for (std::size_t j = 1; j < factor; ++j)
          if (values_[i + j] != values_[i]) {
            constant = false;
            break;
          }
      if (!constant) break;
      --r;
    }
    return r;
  }

  DyadicRational cell_width() const { return DyadicRational::pow2(-resolution_); }

  DyadicRational integral() const {
    DyadicAccumulator acc;
    for (const auto& v : values_) acc.add(v);
    return acc.value().shifted(-resolution_);
  }

  DyadicRational l1_norm() const {
    DyadicAccumulator acc;
    for (const auto& v : values_) acc.add(v.abs());
    return acc.value().shifted(-resolution_);
  }

  /// int |f|^p for an integer exponent p.
  DyadicRational power_integral(unsigned p) const {
    DyadicAccumulator acc;
    for (const auto& v : values_) acc.add(v.abs().pow(p));
    return acc.value().shifted(-resolution_);
  }

  DyadicRational l2_norm_sq() const { return power_integral(2); }

  DyadicRational sup_norm() const {
    DyadicRational m;
    for (const auto& v : values_) m = std::max(m, v.abs());
    return m;
  }

  bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](const auto& v) { return v.is_zero(); });
  }

  friend bool operator==(const StepFunction& a, const StepFunction& b) {
    if (a.support_ != b.support_) return false;
    if (a.resolution_ == b.resolution_) return a.values_ == b.values_;
    const int r = std::max(a.resolution_, b.resolution_);
    return a.refined(r).values_ == b.refined(r).values_;
  }

  StepFunction& operator+=(const StepFunction& o) { return combine(o, 1); }
  StepFunction& operator-=(const StepFunction& o) { return combine(o, -1); }
  StepFunction& operator*=(const DyadicRational& c) {
    for (auto& v : values_) v *= c;
    return *this;
  }
  friend StepFunction operator+(StepFunction a, const StepFunction& b) { return a += b; }
  friend StepFunction operator-(StepFunction a, const StepFunction& b) { return a -= b; }
  friend StepFunction operator*(StepFunction a, const DyadicRational& c) { return a *= c; }
  friend StepFunction operator*(const DyadicRational& c, StepFunction a) { return a *= c; }

  /// Pointwise product.
  friend StepFunction pointwise(const StepFunction& a, const StepFunction& b) {
    const int r = std::max(a.resolution_, b.resolution_);
    StepFunction x = a.refined(r);
    const StepFunction y = b.refined(r);
    for (std::size_t i = 0; i < x.values_.size(); ++i) x.values_[i] *= y.values_[i];
    return x;
  }

  /// int f g.
  friend DyadicRational inner(const StepFunction& a, const StepFunction& b) {
    if (a.support_ != b.support_) throw PreconditionFailed("support mismatch");
    const int r = std::max(a.resolution_, b.resolution_);
    const StepFunction x = a.refined(r);
    const StepFunction y = b.refined(r);
    DyadicAccumulator acc;
    for (std::size_t i = 0; i < x.values_.size(); ++i) acc.add(x.values_[i] * y.values_[i]);
    return acc.value().shifted(-r);
  }

 private:
  static std::size_t cell_count(int resolution, int support) {
    if (resolution < 0 || support < 0) throw PreconditionFailed("negative step-function exponent");
    if (resolution + support > 30) throw ExponentOverflow("step function with more than 2^30 cells");
    return std::size_t{1} << (resolution + support);
  }

  StepFunction& combine(const StepFunction& o, int sign) {
    if (o.support_ != support_) throw PreconditionFailed("support mismatch");
    if (o.resolution_ > resolution_) *this = refined(o.resolution_);
    const StepFunction other = o.refined(resolution_);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (sign > 0) values_[i] += other.values_[i];
      else values_[i] -= other.values_[i];
    }
    return *this;
  }

  int resolution_ = 0;
  int support_ = 0;
  std::vector<DyadicRational> values_{DyadicRational()};
};

/// A union of resolution cells inside [0, 2^support).
class DyadicSet {
 public:
  DyadicSet() = default;
  DyadicSet(int resolution, int support)
      : resolution_(resolution), support_(support),
        cells_(std::size_t{1} << (resolution + support), 0) {
    if (resolution < 0 || support < 0 || resolution + support > 30) {
      throw PreconditionFailed("bad dyadic-set exponents");
    }
  }

  static DyadicSet from_intervals(std::span<const DyadicInterval> intervals, int resolution,
                                  int support) {
    DyadicSet s(resolution, support);
    for (const auto& i : intervals) s.insert(i);
    return s;
  }

  int resolution() const { return resolution_; }
  int support() const { return support_; }
  std::size_t size() const { return cells_.size(); }
  bool contains_cell(std::size_t i) const { return cells_[i] != 0; }
  void set_cell(std::size_t i, bool v) { cells_[i] = v ? 1 : 0; }

  void insert(const DyadicInterval& interval) {
    const auto [first, count] = range(interval);
    for (std::size_t i = first; i < first + count; ++i) cells_[i] = 1;
  }

  bool contains(const DyadicInterval& interval) const {
    const auto [first, count] = range(interval);
    for (std::size_t i = first; i < first + count; ++i)
      if (!cells_[i]) return false;
    return true;
  }

  bool intersects(const DyadicInterval& interval) const {
    const auto [first, count] = range(interval);
    for (std::size_t i = first; i < first + count; ++i)
      if (cells_[i]) return true;
    return false;
  }

  std::int64_t cell_count() const {
    return std::count(cells_.begin(), cells_.end(), std::uint8_t{1});
  }
  DyadicRational measure() const { return DyadicRational(cell_count()).shifted(-resolution_); }
  bool empty() const { return cell_count() == 0; }

  DyadicSet refined(int r) const {
    if (r < resolution_) throw ResolutionMismatch("cannot refine a set to a coarser resolution");
    DyadicSet out(r, support_);
    const std::size_t factor = std::size_t{1} << (r - resolution_);
    for (std::size_t i = 0; i < cells_.size(); ++i)
      for (std::size_t j = 0; j < factor; ++j) out.cells_[i * factor + j] = cells_[i];
    return out;
  }

  friend DyadicSet set_union(const DyadicSet& a, const DyadicSet& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
  }
  friend DyadicSet set_intersection(const DyadicSet& a, const DyadicSet& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
  }
  friend DyadicSet set_difference(const DyadicSet& a, const DyadicSet& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
  }
  friend bool operator==(const DyadicSet& a, const DyadicSet& b) {
    const int r = std::max(a.resolution_, b.resolution_);
    return a.support_ == b.support_ && a.refined(r).cells_ == b.refined(r).cells_;
  }

  bool is_subset_of(const DyadicSet& o) const { return set_difference(*this, o).empty(); }

  StepFunction indicator(int resolution) const {
    const int r = std::max(resolution, resolution_);
    const DyadicSet s = refined(r);
    StepFunction f(r, support_);
    for (std::size_t i = 0; i < s.cells_.size(); ++i)
      if (s.cells_[i]) f[i] = DyadicRational(1);
    return f;
  }

  /// Maximal dyadic intervals contained in the set, in time order.
  std::vector<DyadicInterval> maximal_intervals() const {
    std::vector<DyadicInterval> out;
    collect(DyadicInterval{support_, 0}, out);
    return out;
  }

 private:
  std::pair<std::size_t, std::size_t> range(const DyadicInterval& interval) const {
    if (!interval.inside_power(support_)) throw OutsideUniverse("interval outside the support window");
    if (interval.scale < -resolution_) throw ResolutionMismatch("interval finer than set resolution");
    const int shift = interval.scale + resolution_;
    return {static_cast<std::size_t>(interval.position) << shift, std::size_t{1} << shift};
  }

  void collect(const DyadicInterval& j, std::vector<DyadicInterval>& out) const {
    if (!intersects(j)) return;
    if (contains(j)) {
      out.push_back(j);
      return;
    }
    collect(j.lower_half(), out);
    collect(j.upper_half(), out);
  }

  template <class Op>
  static DyadicSet combine(const DyadicSet& a, const DyadicSet& b, Op op) {
    if (a.support_ != b.support_) throw PreconditionFailed("support mismatch");
    const int r = std::max(a.resolution_, b.resolution_);
    DyadicSet x = a.refined(r);
    const DyadicSet y = b.refined(r);
    for (std::size_t i = 0; i < x.cells_.size(); ++i) x.cells_[i] = op(x.cells_[i], y.cells_[i]) ? 1 : 0;
    return x;
  }

  int resolution_ = 0;
  int support_ = 0;
  std::vector<std::uint8_t> cells_{0};
};

/// Support of f as a set of cells.
inline DyadicSet support_of(const StepFunction& f) {
  DyadicSet s(f.resolution(), f.support());
  for (std::size_t i = 0; i < f.size(); ++i) s.set_cell(i, !f[i].is_zero());
  return s;
}

}  // namespace walshqf
