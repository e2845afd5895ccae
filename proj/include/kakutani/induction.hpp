#pragma once

// Return times, induced maps, column decompositions and skyscrapers over any
// system exposing step(point, n) and same(a, b).

#include <concepts>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kakutani/errors.hpp"
#include "kakutani/odometer.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rational.hpp"
#include "kakutani/rotation.hpp"

namespace kakutani {

template <class S>
concept DynamicalSystem = requires(const S& s, const typename S::point_type& p, std::int64_t n) {
  { s.step(p, n) } -> std::same_as<typename S::point_type>;
  { s.same(p, p) } -> std::convertible_to<bool>;
};

/// Default cap on iterations in return-time searches.
inline constexpr std::uint64_t kDefaultStepBudget = 1u << 20;

inline auto membership(const RankOneSystem& sys, const LevelSet& a) {
  return [&sys, a](const RankOnePoint& p) { return sys.contains(a, p); };
}
inline auto membership(const RotationSystem& sys, const IntervalUnion& a) {
  return [&sys, a](const RotationPoint& p) { return a.contains(sys, p); };
}
inline auto membership(const OdometerSystem& sys, const Cylinder& a) {
  return [&sys, a](const OdometerPoint& p) { return sys.contains(a, p); };
}

/// Least r >= 1 with T^{dir*r}(x) in A (dir = +1 forward, -1 backward).
template <DynamicalSystem S, class InSet>
std::uint64_t return_time(const S& sys, InSet&& in_a, const typename S::point_type& x,
                          std::uint64_t budget = kDefaultStepBudget, int dir = +1) {
  if (!in_a(x)) throw PreconditionError("return time is defined on the base set only");
  auto y = x;
  for (std::uint64_t r = 1; r <= budget; ++r) {
    y = sys.step(y, dir);
    if (in_a(y)) return r;
  }
  throw BudgetExhausted(budget, "no return to the base set");
}

/// T_A(x) = T^{r_A(x)}(x).
template <DynamicalSystem S, class InSet>
typename S::point_type induced_apply(const S& sys, InSet&& in_a, const typename S::point_type& x,
                                     std::uint64_t budget = kDefaultStepBudget) {
  return sys.step(x, static_cast<std::int64_t>(return_time(sys, in_a, x, budget, +1)));
}

/// T_A^{-1}(x): the induced map of the reversed system.
template <DynamicalSystem S, class InSet>
typename S::point_type induced_inverse(const S& sys, InSet&& in_a, const typename S::point_type& x,
                                       std::uint64_t budget = kDefaultStepBudget) {
  return sys.step(x, -static_cast<std::int64_t>(return_time(sys, in_a, x, budget, -1)));
}

/// Least h >= 0 with T^{-h}(x) in A.
template <DynamicalSystem S, class InSet>
std::uint64_t height_above(const S& sys, InSet&& in_a, const typename S::point_type& x,
                           std::uint64_t budget = kDefaultStepBudget) {
  auto y = x;
  for (std::uint64_t h = 0; h <= budget; ++h) {
    if (in_a(y)) return h;
    y = sys.step(y, -1);
  }
  throw BudgetExhausted(budget, "no visit to the base set in the past");
}

/// The induced system on A as a system in its own right.
template <DynamicalSystem S, class InSet>
class InducedSystem {
 public:
  using point_type = typename S::point_type;

  InducedSystem(const S& sys, InSet in_a, std::uint64_t budget = kDefaultStepBudget)
      : sys_(&sys), in_a_(std::move(in_a)), budget_(budget) {}

  point_type step(const point_type& p, std::int64_t n) const {
    point_type q = p;
    for (; n > 0; --n) q = induced_apply(*sys_, in_a_, q, budget_);
    for (; n < 0; ++n) q = induced_inverse(*sys_, in_a_, q, budget_);
    return q;
  }
  bool same(const point_type& a, const point_type& b) const { return sys_->same(a, b); }
  bool contains(const point_type& p) const { return in_a_(p); }
  std::uint64_t return_time(const point_type& p) const { return kakutani::return_time(*sys_, in_a_, p, budget_); }

 private:
  const S* sys_;
  InSet in_a_;
  std::uint64_t budget_;
};

/// Cell of a return-time decomposition: the part of A with first return r.
template <class Set, class Mass>
struct ReturnCell {
  std::uint64_t r = 0;
  Set set;
  Mass mass;
};

/// Rank-one decomposition resolved at a working stage: B_r as level unions,
/// the unresolved part of A (levels whose return leaves the stage stack),
/// and exact Kac accounting.
struct RankOneDecomposition {
  std::size_t work_stage = 1;
  LevelSet base;
  std::vector<ReturnCell<LevelSet, Rational>> cells;
  LevelSet unresolved;
  Rational unresolved_mass;
  Rational kac_sum;  // sum r * mu(B_r)
  Rational kac_gap;  // 1 - kac_sum
};

/// Cells B_r = {x in A : r_A(x) = r} at `work_stage` (A lifted there).
inline RankOneDecomposition column_decomposition(const RankOneSystem& sys, const LevelSet& a, std::size_t work_stage) {
  if (a.empty()) throw PreconditionError("decomposition needs a non-empty base");
  if (work_stage < a.stage) work_stage = a.stage;
  RankOneDecomposition out;
  out.work_stage = work_stage;
  out.base = a;
  const LevelSet lifted = sys.lift(a, work_stage);
  std::map<std::uint64_t, std::vector<std::uint64_t>> by_r;
  for (std::size_t i = 0; i + 1 < lifted.levels.size(); ++i)
    by_r[lifted.levels[i + 1] - lifted.levels[i]].push_back(lifted.levels[i]);
  for (auto& [r, levels] : by_r) {
    LevelSet cell(work_stage, std::move(levels));
    const Rational m = sys.measure(cell);
    out.kac_sum += Rational(static_cast<std::int64_t>(r)) * m;
    out.cells.push_back({r, std::move(cell), m});
  }
  out.unresolved = LevelSet(work_stage, {lifted.levels.back()});
  out.unresolved_mass = sys.measure(out.unresolved);
  out.kac_gap = Rational(1) - out.kac_sum;
  return out;
}

struct RotationDecomposition {
  IntervalUnion base;
  std::vector<ReturnCell<IntervalUnion, AffineValue>> cells;
  IntervalUnion unresolved;
  AffineValue kac_sum;  // sum r * mu(B_r) in Z + Z alpha
};

/// B_1 = T^{-1}(A) cap A, B_r = T^{-r}(A) cap A minus the earlier cells, by exact interval algebra.
inline RotationDecomposition column_decomposition(const RotationSystem& sys, const IntervalUnion& a, std::uint64_t budget) {
  if (a.empty()) throw PreconditionError("decomposition needs a non-empty base");
  RotationDecomposition out;
  out.base = a;
  IntervalUnion covered;
  for (std::uint64_t r = 1; r <= budget; ++r) {
    IntervalUnion cell = a.rotated(sys, -static_cast<std::int64_t>(r)).intersect(sys, a).minus(sys, covered);
    if (cell.empty()) continue;
    covered = covered.unite(sys, cell);
    const AffineValue m = cell.measure();
    out.kac_sum = out.kac_sum + AffineValue{m.a * static_cast<std::int64_t>(r), m.b * static_cast<std::int64_t>(r)};
    out.cells.push_back({r, std::move(cell), m});
    if (covered.measure() == a.measure()) break;
  }
  out.unresolved = a.minus(sys, covered);
  return out;
}

/// "r,mass_numerator,mass_denominator,cell_count" with one row per return time.
inline std::string histogram_csv(const RankOneDecomposition& d) {
  std::string s = "r,mass_numerator,mass_denominator,cell_count\n";
  for (const auto& c : d.cells)
    s += std::to_string(c.r) + "," + std::to_string(c.mass.num()) + "," + std::to_string(c.mass.den()) + "," +
         std::to_string(c.set.levels.size()) + "\n";
  return s;
}

/// Skyscraper levels {h_A = j}, j < bound, at a working stage; `unresolved`
/// holds levels below the first copy of A in the stage stack.
struct RankOneSkyscraper {
  std::size_t work_stage = 1;
  std::vector<LevelSet> levels;
  LevelSet unresolved;
};

inline RankOneSkyscraper skyscraper(const RankOneSystem& sys, const LevelSet& a, std::size_t bound, std::size_t work_stage) {
  if (work_stage < a.stage) work_stage = a.stage;
  RankOneSkyscraper out;
  out.work_stage = work_stage;
  const LevelSet lifted = sys.lift(a, work_stage);
  std::vector<std::vector<std::uint64_t>> levels(bound);
  std::vector<std::uint64_t> unresolved;
  std::size_t next = 0;
  std::optional<std::uint64_t> last;
  for (std::uint64_t l = 0; l < sys.height(work_stage); ++l) {
    if (next < lifted.levels.size() && lifted.levels[next] == l) {
      last = l;
      ++next;
    }
    if (!last) {
      unresolved.push_back(l);
      continue;
    }
    const std::uint64_t j = l - *last;
    if (j < bound) levels[j].push_back(l);
  }
  for (auto& ls : levels) out.levels.emplace_back(work_stage, std::move(ls));
  while (!out.levels.empty() && out.levels.back().empty()) out.levels.pop_back();
  out.unresolved = LevelSet(work_stage, std::move(unresolved));
  return out;
}

/// Skyscraper A, T(A) \ A, T(T(A) \ A) \ A, ... as exact interval unions.
inline std::vector<IntervalUnion> skyscraper(const RotationSystem& sys, const IntervalUnion& a, std::size_t bound) {
  std::vector<IntervalUnion> out;
  IntervalUnion cur = a;
  for (std::size_t j = 0; j < bound && !cur.empty(); ++j) {
    out.push_back(cur);
    cur = cur.rotated(sys, 1).minus(sys, a);
  }
  return out;
}

/// Ordered level listing, one line per level: "j: stage K levels {...} mass p/q".
inline std::string skyscraper_dump(const RankOneSystem& sys, const RankOneSkyscraper& s) {
  std::string out;
  for (std::size_t j = 0; j < s.levels.size(); ++j) {
    out += std::to_string(j) + ": stage " + std::to_string(s.work_stage) + " levels {";
    for (std::size_t i = 0; i < s.levels[j].levels.size(); ++i)
      out += (i ? "," : "") + std::to_string(s.levels[j].levels[i]);
    out += "} mass " + sys.measure(s.levels[j]).str() + "\n";
  }
  return out;
}

}  // namespace kakutani
