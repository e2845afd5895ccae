#pragma once

// Rank-one cutting-and-stacking towers with exact widths, and the
// transformation evaluated on symbolic point addresses (birth level plus a
// stream of column choices).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kakutani/digits.hpp"
#include "kakutani/errors.hpp"
#include "kakutani/rational.hpp"
#include "kakutani/spec_lang.hpp"

namespace kakutani {

/// Where a level of stage i came from.
struct LevelOrigin {
  bool spacer = false;             // born at this stage
  std::uint32_t column = 0;        // which copy of stage i-1 (0-based, bottom to top)
  std::uint64_t source_level = 0;  // index inside that copy
};

struct TowerStage {
  std::size_t index = 1;
  std::uint64_t height = 0;
  Rational width;
  Rational residual;  // 1 - height * width
  std::uint64_t spacers_born = 0;
  std::uint64_t previous_height = 0;
  std::vector<std::uint64_t> copy_offsets;  // bottom index of each stage-(i-1) copy; empty at stage 1

  LevelOrigin origin(std::uint64_t level) const {
    if (copy_offsets.empty()) return {true, 0, 0};
    auto it = std::upper_bound(copy_offsets.begin(), copy_offsets.end(), level);
    if (it != copy_offsets.begin()) {
      --it;
      const std::uint64_t rel = level - *it;
      if (rel < previous_height)
        return {false, static_cast<std::uint32_t>(it - copy_offsets.begin()), rel};
    }
    return {true, 0, 0};
  }
};

/// A point addressed by the stage and level where it was born, and the column
/// it falls into at every later stage.
struct RankOnePoint {
  std::size_t birth_stage = 1;
  std::uint64_t birth_level = 0;
  DigitStream digits = DigitStream::zeros(1);
};

/// A finite union of levels of one stage.
struct LevelSet {
  std::size_t stage = 1;
  std::vector<std::uint64_t> levels;  // sorted, unique

  LevelSet() = default;
  LevelSet(std::size_t k, std::vector<std::uint64_t> ls) : stage(k), levels(std::move(ls)) {
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  }

  bool empty() const noexcept { return levels.empty(); }
  bool has(std::uint64_t level) const { return std::binary_search(levels.begin(), levels.end(), level); }
  friend bool operator==(const LevelSet&, const LevelSet&) = default;
};

namespace detail {
inline void require_same_stage(const LevelSet& a, const LevelSet& b) {
  if (a.stage != b.stage)
    throw Error("level sets at stages " + std::to_string(a.stage) + " and " + std::to_string(b.stage) +
                " must be lifted to a common stage");
}
}  // namespace detail

inline LevelSet operator|(const LevelSet& a, const LevelSet& b) {
  detail::require_same_stage(a, b);
  LevelSet r;
  r.stage = a.stage;
  std::set_union(a.levels.begin(), a.levels.end(), b.levels.begin(), b.levels.end(), std::back_inserter(r.levels));
  return r;
}

inline LevelSet operator&(const LevelSet& a, const LevelSet& b) {
  detail::require_same_stage(a, b);
  LevelSet r;
  r.stage = a.stage;
  std::set_intersection(a.levels.begin(), a.levels.end(), b.levels.begin(), b.levels.end(),
                        std::back_inserter(r.levels));
  return r;
}

inline LevelSet operator-(const LevelSet& a, const LevelSet& b) {
  detail::require_same_stage(a, b);
  LevelSet r;
  r.stage = a.stage;
  std::set_difference(a.levels.begin(), a.levels.end(), b.levels.begin(), b.levels.end(),
                      std::back_inserter(r.levels));
  return r;
}

/// Residual-symbol-or-level entry of a name reading.
struct NameSymbol {
  bool residual = false;
  std::uint64_t level = 0;
  friend bool operator==(const NameSymbol&, const NameSymbol&) = default;
};

struct SpacerCounts {
  std::uint32_t below = 0;
  std::vector<std::uint32_t> above;
  friend bool operator==(const SpacerCounts&, const SpacerCounts&) = default;
};

/// Default cap on built stages; deeper stages overflow 64-bit widths for c >= 3.
inline constexpr std::size_t kDefaultMaxStage = 48;

/// Towers of a rank-one spec built to a fixed depth, plus exact point dynamics.
/// Immutable after construction; all queries are const and thread-safe.
class RankOneSystem {
 public:
  using point_type = RankOnePoint;

  explicit RankOneSystem(StackingSpec spec, std::size_t budget = 32, std::size_t max_stage = kDefaultMaxStage)
      : spec_(std::move(spec)), budget_(budget) {
    build(max_stage);
  }

  const StackingSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }

  /// Number of stages built (stages are 1..depth()).
  std::size_t depth() const noexcept { return stages_.size(); }
  /// Stage bound used by step().
  std::size_t budget() const noexcept { return budget_; }
  RankOneSystem with_budget(std::size_t b) const {
    RankOneSystem s = *this;
    s.budget_ = b;
    return s;
  }

  const TowerStage& stage(std::size_t k) const {
    if (k == 0) throw Error("stages are 1-based");
    if (k > stages_.size()) throw NeedMoreDepth(stages_.size());
    return stages_[k - 1];
  }
  const std::vector<TowerStage>& stages() const noexcept { return stages_; }

  std::uint64_t height(std::size_t k) const { return stage(k).height; }
  const Rational& width(std::size_t k) const { return stage(k).width; }
  std::uint32_t cuts(std::size_t k) const { return spec_.rule(k).cuts; }

  /// Bottom index, at stage k+1, of copy `column` of the stage-k stack.
  std::uint64_t offset(std::size_t k, std::uint32_t column) const { return stage(k + 1).copy_offsets.at(column); }

  auto radix_fn() const {
    return [this](std::size_t pos) { return cuts(pos); };
  }

  /// Level of `p` in the stage-k stack.
  std::uint64_t level_index(const RankOnePoint& p, std::size_t k) const {
    if (k < p.birth_stage)
      throw PreconditionError("point born at stage " + std::to_string(p.birth_stage) + " has no stage-" +
                              std::to_string(k) + " level");
    std::uint64_t level = p.birth_level;
    for (std::size_t j = p.birth_stage; j < k; ++j) level += offset(j, p.digits.digit(j, cuts(j)));
    return level;
  }

  /// Canonical address of the point sitting at `level` of stage k whose
  /// column choices from stage k on are given by `from_k` (which must start at or before k).
  RankOnePoint point_at(std::size_t k, std::uint64_t level, const DigitStream& from_k) const {
    if (level >= height(k)) throw PreconditionError("level outside the stage stack");
    std::vector<std::uint32_t> head;
    std::size_t j = k;
    std::uint64_t idx = level;
    while (j > 1) {
      const LevelOrigin o = stage(j).origin(idx);
      if (o.spacer) break;
      head.push_back(o.column);
      idx = o.source_level;
      --j;
    }
    std::reverse(head.begin(), head.end());
    RankOnePoint p;
    p.birth_stage = j;
    p.birth_level = idx;
    p.digits = from_k.spliced(j, head, k, radix_fn());
    return p;
  }

  /// The point of the stage-1 level 0 with the given column choices.
  RankOnePoint base_point(const DigitStream& digits) const {
    if (digits.start() != 1) throw PreconditionError("base point digits must start at stage 1");
    RankOnePoint p;
    p.digits = digits;
    return p;
  }

  /// T^steps(p), resolved at the smallest stage (<= budget) where the move
  /// stays inside the stack. Throws NeedMoreDepth or ExhaustedDigits.
  RankOnePoint apply(const RankOnePoint& p, std::int64_t steps, std::size_t budget) const {
    if (steps == 0) return p;
    const std::size_t limit = std::min(budget, depth());
    std::size_t k = p.birth_stage;
    if (k > limit) throw NeedMoreDepth(limit);
    std::uint64_t level = p.birth_level;
    for (;;) {
      const __int128 target = static_cast<__int128>(level) + steps;
      if (target >= 0 && target < static_cast<__int128>(height(k)))
        return point_at(k, static_cast<std::uint64_t>(target), p.digits);
      if (k >= limit) throw NeedMoreDepth(limit);
      level += offset(k, p.digits.digit(k, cuts(k)));
      ++k;
    }
  }

  RankOnePoint step(const RankOnePoint& p, std::int64_t n) const { return apply(p, n, budget_); }

  bool same(const RankOnePoint& a, const RankOnePoint& b) const {
    return a.birth_stage == b.birth_stage && a.birth_level == b.birth_level &&
           same_digits(a.digits, b.digits, radix_fn());
  }

  bool contains(const LevelSet& a, const RankOnePoint& p) const {
    if (p.birth_stage > a.stage) return false;
    return a.has(level_index(p, a.stage));
  }

  Rational measure(const LevelSet& a) const {
    return Rational(static_cast<std::int64_t>(a.levels.size())) * width(a.stage);
  }

  /// All levels of stage k.
  LevelSet full(std::size_t k) const {
    std::vector<std::uint64_t> ls(height(k));
    for (std::uint64_t i = 0; i < ls.size(); ++i) ls[i] = i;
    return LevelSet(k, std::move(ls));
  }

  /// Stage-1 level 0.
  LevelSet base_set() const { return LevelSet(1, {0}); }

  LevelSet complement(const LevelSet& a) const { return full(a.stage) - a; }

  /// The same set expressed at stage `to` (spacers born later are excluded).
  LevelSet lift(const LevelSet& a, std::size_t to) const {
    if (to < a.stage) throw PreconditionError("cannot lift a set to an earlier stage");
    std::vector<std::uint64_t> cur = a.levels;
    for (std::size_t k = a.stage; k < to; ++k) {
      const auto& offs = stage(k + 1).copy_offsets;
      std::vector<std::uint64_t> next;
      next.reserve(cur.size() * offs.size());
      for (auto off : offs)
        for (auto l : cur) next.push_back(off + l);
      cur = std::move(next);
    }
    return LevelSet(to, std::move(cur));
  }

  /// Bottom-to-top stage-m names along the stage-i stack (residual for levels born after m).
  std::vector<NameSymbol> read_names(std::size_t i, std::size_t m) const {
    if (m > i) throw PreconditionError("partition stage must not exceed the read stage");
    std::vector<NameSymbol> names;
    names.reserve(height(i));
    for (std::uint64_t level = 0; level < height(i); ++level) {
      std::uint64_t idx = level;
      bool residual = false;
      for (std::size_t j = i; j > m; --j) {
        const LevelOrigin o = stage(j).origin(idx);
        if (o.spacer) {
          residual = true;
          break;
        }
        idx = o.source_level;
      }
      names.push_back(residual ? NameSymbol{true, 0} : NameSymbol{false, idx});
    }
    return names;
  }

  /// Spacer counts of rule i recovered from the stage-(i+1) name reading.
  SpacerCounts recover_spacers(std::size_t i) const { return recover_spacers_from_names(read_names(i + 1, i), height(i)); }

  static SpacerCounts recover_spacers_from_names(const std::vector<NameSymbol>& names, std::uint64_t h) {
    SpacerCounts out;
    std::size_t pos = 0;
    auto count_residuals = [&]() {
      std::uint32_t n = 0;
      while (pos < names.size() && names[pos].residual) {
        ++n;
        ++pos;
      }
      return n;
    };
    out.below = count_residuals();
    while (pos < names.size()) {
      for (std::uint64_t j = 0; j < h; ++j, ++pos)
        if (pos >= names.size() || names[pos].residual || names[pos].level != j)
          throw Error("malformed name sequence at position " + std::to_string(pos));
      out.above.push_back(count_residuals());
    }
    if (out.above.empty()) throw Error("malformed name sequence: no complete name");
    return out;
  }

  /// A point drawn from the stage-K stack uniformly, with generated digits beyond K.
  template <class Rng>
  RankOnePoint sample_point(Rng& rng, std::size_t k) const {
    std::uniform_int_distribution<std::uint64_t> lvl(0, height(k) - 1);
    const std::uint64_t level = lvl(rng);
    return point_at(k, level, DigitStream::generated(k, rng()));
  }

  template <class Rng>
  RankOnePoint sample_base_point(Rng& rng) const {
    return base_point(DigitStream::generated(1, rng()));
  }

 private:
  void build(std::size_t max_stage) {
    require_valid(spec_, 1);
    const Rational w1 = normalized_base_width(spec_);
    std::size_t limit = max_stage;
    if (auto last = spec_.last_stage()) limit = std::min(limit, *last);
    TowerStage s;
    s.index = 1;
    s.height = spec_.initial_height;
    s.width = w1;
    s.residual = Rational(1) - Rational(static_cast<std::int64_t>(s.height)) * s.width;
    stages_.push_back(s);
    for (std::size_t k = 1; k < limit; ++k) {
      const StageRule& r = spec_.rule(k);
      const TowerStage& prev = stages_.back();
      TowerStage next;
      next.index = k + 1;
      next.previous_height = prev.height;
      unsigned __int128 pos = r.spacers_below;
      for (std::uint32_t a = 0; a < r.cuts; ++a) {
        next.copy_offsets.push_back(static_cast<std::uint64_t>(pos));
        pos += prev.height + r.spacers_above[a];
      }
      if (pos > static_cast<unsigned __int128>(INT64_MAX / 4)) break;
      next.height = static_cast<std::uint64_t>(pos);
      next.spacers_born = r.spacer_count();
      try {
        next.width = prev.width / Rational(static_cast<std::int64_t>(r.cuts));
        next.residual = Rational(1) - Rational(static_cast<std::int64_t>(next.height)) * next.width;
      } catch (const std::overflow_error&) {
        break;
      }
      stages_.push_back(std::move(next));
    }
  }

  StackingSpec spec_;
  std::size_t budget_;
  std::vector<TowerStage> stages_;
};

/// Stages 1..depth of the spec (throws NeedMoreDepth if the depth cannot be represented).
inline std::vector<TowerStage> build_towers(const StackingSpec& spec, std::size_t depth) {
  if (depth == 0) throw PreconditionError("depth must be >= 1");
  RankOneSystem sys(spec, depth, depth);
  if (sys.depth() < depth) throw NeedMoreDepth(sys.depth());
  return sys.stages();
}

/// Structured stage report: {i, h, w, level_count, spacer_count, residual}.
inline nlohmann::json stage_report(const std::vector<TowerStage>& stages) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : stages)
    out.push_back({{"i", s.index},
                   {"h", s.height},
                   {"w", s.width.str()},
                   {"level_count", s.height},
                   {"spacer_count", s.spacers_born},
                   {"residual", s.residual.str()}});
  return out;
}

/// k with b = T^k(a) when both points share a digit tail, else nullopt.
/// The offset is read at the first stage from which the column choices agree.
inline std::optional<std::int64_t> orbit_offset(const RankOneSystem& sys, const RankOnePoint& a, const RankOnePoint& b) {
  auto radix = sys.radix_fn();
  const std::size_t born = std::max(a.birth_stage, b.birth_stage);
  const std::size_t explicit_end = std::max({a.digits.prefix_end(), b.digits.prefix_end(), born});
  if (explicit_end > sys.depth()) return std::nullopt;
  if (!same_digits(a.digits.spliced(explicit_end, {}, explicit_end, radix),
                   b.digits.spliced(explicit_end, {}, explicit_end, radix), radix))
    return std::nullopt;
  std::size_t k = explicit_end;
  while (k > born && a.digits.digit(k - 1, sys.cuts(k - 1)) == b.digits.digit(k - 1, sys.cuts(k - 1))) --k;
  return static_cast<std::int64_t>(sys.level_index(b, k)) - static_cast<std::int64_t>(sys.level_index(a, k));
}

/// Compact human-readable point id: "k.level:d_k d_k+1 ...|tail".
inline std::string point_id(const RankOneSystem& sys, const RankOnePoint& p, std::size_t shown_digits = 12) {
  std::string s = std::to_string(p.birth_stage) + "." + std::to_string(p.birth_level) + ":";
  for (std::size_t j = 0; j < shown_digits; ++j) {
    const std::size_t pos = p.birth_stage + j;
    if (!p.digits.has_digit(pos)) break;
    s += std::to_string(p.digits.digit(pos, sys.cuts(pos)));
    if (sys.cuts(pos) > 10) s += ' ';
  }
  return s;
}

}  // namespace kakutani
